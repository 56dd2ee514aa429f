//! Site geometry and the Whittle-Matern correlation family.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::{bessel_k, gamma};

/// Planar site locations.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteSet {
    coords: Vec<[f64; 2]>,
}

impl SiteSet {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("site set must contain at least one site"));
        }
        if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::invalid("site coordinates must be finite"));
        }
        Ok(SiteSet { coords })
    }

    /// `n` sites drawn uniformly in `[0, side] x [0, side]`.
    pub fn uniform_random(n: usize, side: f64, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let coords = (0..n)
            .map(|_| [side * rng.random::<f64>(), side * rng.random::<f64>()])
            .collect();
        SiteSet::new(coords)
    }

    /// Read sites from a two-column `x,y` CSV; a header row is optional.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .from_path(path.as_ref())?;
        let mut coords = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Data(format!(
                    "site csv row {} has {} fields, expected 2",
                    i + 1,
                    rec.len()
                )));
            }
            let x = rec[0].trim().parse::<f64>();
            let y = rec[1].trim().parse::<f64>();
            match (x, y) {
                (Ok(x), Ok(y)) => coords.push([x, y]),
                _ if i == 0 => continue, // header row
                _ => {
                    return Err(Error::Data(format!("site csv row {} is not numeric", i + 1)));
                }
            }
        }
        SiteSet::new(coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.coords[i];
        let [xj, yj] = self.coords[j];
        ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()
    }
}

/// Whittle-Matern range and smoothness parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternParams {
    /// Range, same units as distances.
    pub c: f64,
    /// Smoothness.
    pub nu: f64,
}

impl MaternParams {
    pub fn new(c: f64, nu: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("Matern range must be positive, got {c}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!("Matern smoothness must be positive, got {nu}")));
        }
        Ok(MaternParams { c, nu })
    }
}

/// Whittle-Matern correlation
/// `rho(h) = 2^{1-nu}/Gamma(nu) (h/c)^nu K_nu(h/c)`, with `rho(0) = 1`
/// (the formula is 0/0 at the origin; the limit is 1).
pub fn whittle_matern(h: f64, p: &MaternParams) -> Result<f64> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::invalid(format!("distance must be finite and nonnegative, got {h}")));
    }
    MaternParams::new(p.c, p.nu)?;
    if h == 0.0 {
        return Ok(1.0);
    }
    let t = h / p.c;
    // In logs: the prefactor and K_nu both over/underflow for extreme nu.
    let val = (2.0f64.powf(1.0 - p.nu) / gamma(p.nu)) * t.powf(p.nu) * bessel_k(p.nu, t);
    // Roundoff can push the value a hair above 1 near h = 0.
    Ok(val.min(1.0).max(0.0))
}

/// Correlation matrix over a site set: unit diagonal, entries `rho(d(i,j))`.
///
/// Returns the matrix and a flag that is true when distinct site indices are
/// coincident (exact off-diagonal 1, a conditioning hazard downstream).
pub fn correlation_matrix(sites: &SiteSet, p: &MaternParams) -> Result<(DMatrix<f64>, bool)> {
    let m = sites.len();
    let mut mat = DMatrix::<f64>::identity(m, m);
    let mut coincident = false;
    for i in 0..m {
        for j in (i + 1)..m {
            let d = sites.distance(i, j);
            if d == 0.0 {
                coincident = true;
            }
            let r = whittle_matern(d, p)?;
            mat[(i, j)] = r;
            mat[(j, i)] = r;
        }
    }
    Ok((mat, coincident))
}
