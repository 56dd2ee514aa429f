//! Named parameter vectors with box bounds and the unconstrained
//! reparameterization used by the optimizer: `log` for positive parameters,
//! `log(x - lo)` for shifted-positive ones (Gumbel's `theta >= 1`).

use crate::error::{Error, Result};

/// How a natural parameter maps to the optimizer's unconstrained scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    /// x > 0, fitted as ln x.
    Positive,
    /// x > lo, fitted as ln(x - lo).
    GreaterThan(f64),
    /// Unbounded, fitted as-is.
    Unbounded,
}

impl Transform {
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Transform::Positive => 0.0,
            Transform::GreaterThan(lo) => lo,
            Transform::Unbounded => f64::NEG_INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > self.lower_bound()
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Transform::Positive => x.ln(),
            Transform::GreaterThan(lo) => (x - lo).ln(),
            Transform::Unbounded => x,
        }
    }

    pub fn from_unconstrained(&self, u: f64) -> f64 {
        match *self {
            Transform::Positive => u.exp(),
            Transform::GreaterThan(lo) => lo + u.exp(),
            Transform::Unbounded => u,
        }
    }
}

/// One free parameter: a name, a value, and its box transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParam {
    pub name: String,
    pub value: f64,
    pub transform: Transform,
}

/// The ordered free parameters of a model template.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVector {
    params: Vec<ThetaParam>,
}

impl ThetaVector {
    pub fn new(params: Vec<ThetaParam>) -> Result<Self> {
        for p in &params {
            if !p.transform.contains(p.value) {
                return Err(Error::invalid(format!(
                    "parameter {} = {} violates its bound (> {})",
                    p.name,
                    p.value,
                    p.transform.lower_bound()
                )));
            }
        }
        Ok(ThetaVector { params })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[ThetaParam] {
        &self.params
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    /// Same parameter layout with new natural-scale values (bounds checked).
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.params.len() {
            return Err(Error::invalid("theta value count mismatch"));
        }
        let params = self
            .params
            .iter()
            .zip(values)
            .map(|(p, &v)| ThetaParam { name: p.name.clone(), value: v, transform: p.transform })
            .collect();
        ThetaVector::new(params)
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.transform.to_unconstrained(p.value)).collect()
    }

    /// Map a point from the optimizer's scale back to natural values.
    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &ui)| p.transform.from_unconstrained(ui))
            .collect()
    }

    /// Whether `values` sits strictly inside every box (with a relative
    /// margin), so central differences are safe.
    pub fn strictly_interior(&self, values: &[f64], margin: f64) -> bool {
        self.params.iter().zip(values).all(|(p, &v)| {
            let lo = p.transform.lower_bound();
            if lo.is_finite() {
                v > lo + margin * (1.0 + lo.abs())
            } else {
                v.is_finite()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transforms_roundtrip() {
        for (t, x) in [
            (Transform::Positive, 0.7),
            (Transform::GreaterThan(1.0), 1.7),
            (Transform::Unbounded, -2.0),
        ] {
            assert_relative_eq!(t.from_unconstrained(t.to_unconstrained(x)), x, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounds_enforced() {
        let bad = ThetaVector::new(vec![ThetaParam {
            name: "theta".into(),
            value: 0.9,
            transform: Transform::GreaterThan(1.0),
        }]);
        assert!(bad.is_err());
        let ok = ThetaVector::new(vec![ThetaParam {
            name: "c".into(),
            value: 1.0,
            transform: Transform::Positive,
        }])
        .unwrap();
        assert!(ok.with_values(&[-0.5]).is_err());
    }
}
