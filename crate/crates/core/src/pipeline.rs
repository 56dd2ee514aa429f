//! Transforms from raw data to the three inference-ready shapes: marginal
//! standardization (rank and Hill), threshold censoring, block maxima with
//! occurrence partitions, and component clustering.

use std::path::Path;

use crate::combinatorics::Partition;
use crate::error::{Error, Result};
use crate::likelihood::{BlockMaximaRecord, ExceedanceRecord};
use crate::spatial::SiteSet;

/// An `n x m` data matrix (rows = time, columns = components), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMatrix {
    data: Vec<f64>,
    n: usize,
    m: usize,
    names: Option<Vec<String>>,
}

impl RawMatrix {
    pub fn new(data: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Data("matrix must have at least one row and column".into()));
        }
        if data.len() != n * m {
            return Err(Error::Data(format!(
                "matrix data length {} does not match {n} x {m}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix entries must be finite".into()));
        }
        Ok(RawMatrix { data, n, m, names: None })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Data("ragged rows".into()));
        }
        RawMatrix::new(rows.into_iter().flatten().collect(), n, m)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m {
            return Err(Error::Data("column name count mismatch".into()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.m
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// Read a CSV matrix; a non-numeric first row is taken as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path.as_ref())?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut names: Option<Vec<String>> = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            match parsed {
                Ok(vals) => rows.push(vals),
                Err(_) if i == 0 => {
                    names = Some(rec.iter().map(|f| f.trim().to_string()).collect());
                }
                Err(_) => {
                    return Err(Error::Data(format!("csv row {} is not numeric", i + 1)));
                }
            }
        }
        let mat = RawMatrix::from_rows(rows)?;
        match names {
            Some(ns) => mat.with_names(ns),
            None => Ok(mat),
        }
    }

    /// Write as CSV with a header when column names are present.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path.as_ref())?;
        if let Some(names) = &self.names {
            wtr.write_record(names)?;
        }
        for i in 0..self.n {
            wtr.write_record(self.row(i).iter().map(|v| format!("{v}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-column Hill fit: tail index, threshold scale and order count.
#[derive(Clone, Debug, PartialEq)]
pub struct HillFit {
    pub alpha_hat: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub k: usize,
}

/// Empirical rank transform to unit-Pareto-like margins:
/// each column value of rank `r` (ties broken by first occurrence) maps to
/// `(n+1)/(n+1-r)`.
pub fn rank_pareto_transform(data: &RawMatrix) -> Result<RawMatrix> {
    let (n, m) = (data.nrows(), data.ncols());
    let mut out = vec![0.0; n * m];
    for j in 0..m {
        let col = data.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Err(Error::Data(format!("column {} is constant", j + 1)));
        }
        // stable sort by (value, first occurrence) assigns ranks 1..n
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap().then(a.cmp(&b)));
        for (rank0, &i) in order.iter().enumerate() {
            let r = (rank0 + 1) as f64;
            out[i * m + j] = (n as f64 + 1.0) / (n as f64 + 1.0 - r);
        }
    }
    RawMatrix::new(out, n, m)
}

/// Hill standardization: per column, `alpha_hat` from the top `k` order
/// statistics and `u_hat` the `(n-k)`-th; output `(Y/u_hat)^alpha_hat v 1`.
pub fn hill_transform(data: &RawMatrix, k: usize) -> Result<(RawMatrix, HillFit)> {
    let (n, m) = (data.nrows(), data.ncols());
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("Hill order count k = {k} must satisfy 1 <= k < n")));
    }
    let mut alpha_hat = Vec::with_capacity(m);
    let mut u_hat = Vec::with_capacity(m);
    for j in 0..m {
        let mut col = data.column(j);
        if col.iter().any(|&v| v <= 0.0) {
            return Err(Error::Data(format!("column {} has nonpositive entries", j + 1)));
        }
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let u = col[n - 1 - k];
        // 1/alpha = (1/k) sum_{i=0}^{k-1} ln(Y_{(n-i)} / Y_{(n-k)})
        let inv_alpha: f64 =
            (0..k).map(|i| (col[n - 1 - i] / u).ln()).sum::<f64>() / k as f64;
        if !(inv_alpha > 0.0) {
            return Err(Error::Data(format!(
                "column {} has degenerate upper order statistics",
                j + 1
            )));
        }
        alpha_hat.push(1.0 / inv_alpha);
        u_hat.push(u);
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = (data.get(i, j) / u_hat[j]).powf(alpha_hat[j]).max(1.0);
        }
    }
    Ok((RawMatrix::new(out, n, m)?, HillFit { alpha_hat, u_hat, k }))
}

/// Threshold censoring: scale rows by `k/n`, floor at 1, keep rows with at
/// least one exceedance. An empty result is allowed.
pub fn censor_sample(pareto_data: &RawMatrix, k: usize) -> Result<Vec<ExceedanceRecord>> {
    let n = pareto_data.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("threshold count k = {k} must satisfy 1 <= k <= n")));
    }
    let scale = k as f64 / n as f64;
    let mut out = Vec::new();
    for i in 0..n {
        let x: Vec<f64> = pareto_data.row(i).iter().map(|&v| (scale * v).max(1.0)).collect();
        if x.iter().any(|&v| v > 1.0) {
            out.push(ExceedanceRecord::new(x)?);
        }
    }
    Ok(out)
}

/// Block maxima over `k` consecutive blocks of `floor(n/k)` rows (trailing
/// remainder dropped), rescaled by `k/n`, with the occurrence partition
/// grouping components whose maxima happen at the same row (earliest row
/// wins on ties).
pub fn block_maxima_with_occurrence(
    pareto_data: &RawMatrix,
    k: usize,
) -> Result<Vec<BlockMaximaRecord>> {
    let (n, m) = (pareto_data.nrows(), pareto_data.ncols());
    if k == 0 {
        return Err(Error::invalid("block count must be at least 1"));
    }
    let block_len = n / k;
    if block_len < 2 {
        return Err(Error::invalid(format!(
            "block length floor({n}/{k}) = {block_len} is below 2"
        )));
    }
    let scale = k as f64 / n as f64;
    let mut out = Vec::with_capacity(k);
    for b in 0..k {
        let start = b * block_len;
        let mut maxima = vec![f64::NEG_INFINITY; m];
        let mut argmax = vec![0usize; m];
        for i in start..start + block_len {
            for j in 0..m {
                let v = pareto_data.get(i, j);
                if v > maxima[j] {
                    maxima[j] = v;
                    argmax[j] = i;
                }
            }
        }
        // group components by the row index of their maximum
        let mut labels: Vec<usize> = vec![usize::MAX; m];
        let mut next = 0usize;
        for j in 0..m {
            if labels[j] != usize::MAX {
                continue;
            }
            labels[j] = next;
            for j2 in (j + 1)..m {
                if labels[j2] == usize::MAX && argmax[j2] == argmax[j] {
                    labels[j2] = next;
                }
            }
            next += 1;
        }
        let occurrence = Partition::from_assignment(&labels)?;
        let z: Vec<f64> = maxima.iter().map(|&v| scale * v).collect();
        out.push(BlockMaximaRecord::new(z, occurrence)?);
    }
    Ok(out)
}

/// What the component clustering operates on.
pub enum ClusterFeatures<'a> {
    /// Planar site coordinates: Lloyd's K-means on Euclidean distance.
    Sites(&'a SiteSet),
    /// A similarity matrix (e.g. Kendall's tau): PAM on `1 - similarity`.
    Similarity(&'a [Vec<f64>]),
}

/// Cluster components into a partition whose largest block respects
/// `max_block`, increasing the cluster count from `ceil(m / max_block)`
/// until the cap holds. Deterministic given the seed.
pub fn cluster_components(
    features: ClusterFeatures<'_>,
    max_block: usize,
    seed: u64,
) -> Result<Partition> {
    if max_block == 0 {
        return Err(Error::invalid("max_block must be at least 1"));
    }
    let m = match &features {
        ClusterFeatures::Sites(s) => s.len(),
        ClusterFeatures::Similarity(sim) => sim.len(),
    };
    if m == 0 {
        return Err(Error::invalid("nothing to cluster"));
    }
    if m <= max_block {
        return Ok(Partition::single_block(m));
    }
    if max_block == 1 {
        return Ok(Partition::singletons(m));
    }
    let mut k = m.div_ceil(max_block);
    while k <= m {
        let assignment = match &features {
            ClusterFeatures::Sites(sites) => kmeans_assign(sites, k, seed),
            ClusterFeatures::Similarity(sim) => pam_assign(sim, k)?,
        };
        let partition = Partition::from_assignment(&assignment)?;
        if partition.max_block_size() <= max_block {
            return Ok(partition);
        }
        k += 1;
    }
    Err(Error::invalid(format!(
        "cannot split {m} components into blocks of at most {max_block} (duplicate feature points?)"
    )))
}

/// Lloyd's algorithm with 10 seeded restarts, keeping the best
/// within-cluster sum of squares.
fn kmeans_assign(sites: &SiteSet, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let coords = sites.coords();
    let m = coords.len();
    let mut best: (f64, Vec<usize>) = (f64::INFINITY, vec![0; m]);
    for restart in 0..10u64 {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed.wrapping_add(restart));
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        let mut centers: Vec<[f64; 2]> = idx[..k].iter().map(|&i| coords[i]).collect();
        let mut assign = vec![0usize; m];
        for _ in 0..100 {
            let mut changed = false;
            for (i, c) in coords.iter().enumerate() {
                let mut bestd = f64::INFINITY;
                let mut bestk = 0;
                for (kk, ctr) in centers.iter().enumerate() {
                    let d = (c[0] - ctr[0]).powi(2) + (c[1] - ctr[1]).powi(2);
                    if d < bestd {
                        bestd = d;
                        bestk = kk;
                    }
                }
                if assign[i] != bestk {
                    assign[i] = bestk;
                    changed = true;
                }
            }
            for (kk, ctr) in centers.iter_mut().enumerate() {
                let members: Vec<&[f64; 2]> =
                    coords.iter().zip(&assign).filter(|(_, &a)| a == kk).map(|(c, _)| c).collect();
                if !members.is_empty() {
                    let nm = members.len() as f64;
                    *ctr = [
                        members.iter().map(|c| c[0]).sum::<f64>() / nm,
                        members.iter().map(|c| c[1]).sum::<f64>() / nm,
                    ];
                }
            }
            if !changed {
                break;
            }
        }
        let wss: f64 = coords
            .iter()
            .zip(&assign)
            .map(|(c, &a)| (c[0] - centers[a][0]).powi(2) + (c[1] - centers[a][1]).powi(2))
            .sum();
        if wss < best.0 {
            best = (wss, assign);
        }
    }
    // compact labels (empty clusters leave gaps)
    let mut remap = std::collections::HashMap::new();
    best.1
        .iter()
        .map(|&a| {
            let next = remap.len();
            *remap.entry(a).or_insert(next)
        })
        .collect()
}

/// Partitioning Around Medoids on the dissimilarity `1 - similarity`.
fn pam_assign(sim: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let m = sim.len();
    if sim.iter().any(|row| row.len() != m) {
        return Err(Error::invalid("similarity matrix must be square"));
    }
    let d = |i: usize, j: usize| 1.0 - sim[i][j];
    // BUILD: greedily pick medoids minimizing total dissimilarity.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let first = (0..m)
        .min_by(|&a, &b| {
            let ca: f64 = (0..m).map(|j| d(a, j)).sum();
            let cb: f64 = (0..m).map(|j| d(b, j)).sum();
            ca.partial_cmp(&cb).unwrap()
        })
        .unwrap();
    medoids.push(first);
    while medoids.len() < k {
        let mut best = (f64::INFINITY, 0usize);
        for cand in 0..m {
            if medoids.contains(&cand) {
                continue;
            }
            let cost: f64 = (0..m)
                .map(|j| {
                    medoids.iter().map(|&mm| d(mm, j)).fold(d(cand, j), f64::min)
                })
                .sum();
            if cost < best.0 {
                best = (cost, cand);
            }
        }
        medoids.push(best.1);
    }
    // SWAP: steepest-descent swaps until no improvement.
    let total_cost = |meds: &[usize]| -> f64 {
        (0..m).map(|j| meds.iter().map(|&mm| d(mm, j)).fold(f64::INFINITY, f64::min)).sum()
    };
    let mut cost = total_cost(&medoids);
    loop {
        let mut improved = false;
        for mi in 0..k {
            for cand in 0..m {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[mi] = cand;
                let c = total_cost(&trial);
                if c + 1e-12 < cost {
                    medoids = trial;
                    cost = c;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok((0..m)
        .map(|j| {
            medoids
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| d(a, j).partial_cmp(&d(b, j)).unwrap())
                .unwrap()
                .0
        })
        .collect())
}

/// Pairwise Kendall's tau of rows surviving the spectral-proxy filter
/// `mean(Y_i) > norm_threshold`, computed on the normalized rows
/// `Y_i / mean(Y_i)`.
pub fn kendall_tau_matrix(data: &RawMatrix, norm_threshold: f64) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (data.nrows(), data.ncols());
    let mut retained: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let row = data.row(i);
        let mean = row.iter().sum::<f64>() / m as f64;
        if mean > norm_threshold {
            retained.push(row.iter().map(|&v| v / mean).collect());
        }
    }
    if retained.len() < 10 {
        return Err(Error::Data(format!(
            "only {} rows exceed the norm threshold {norm_threshold}; at least 10 needed",
            retained.len()
        )));
    }
    let nr = retained.len();
    let mut tau = vec![vec![0.0; m]; m];
    for j in 0..m {
        tau[j][j] = 1.0;
        for j2 in (j + 1)..m {
            let mut concordant = 0i64;
            let mut discordant = 0i64;
            for a in 0..nr {
                for b in (a + 1)..nr {
                    let s = (retained[a][j] - retained[b][j]) * (retained[a][j2] - retained[b][j2]);
                    if s > 0.0 {
                        concordant += 1;
                    } else if s < 0.0 {
                        discordant += 1;
                    }
                }
            }
            let total = concordant + discordant;
            let t = if total > 0 { (concordant - discordant) as f64 / total as f64 } else { 0.0 };
            tau[j][j2] = t;
            tau[j2][j] = t;
        }
    }
    Ok(tau)
}
