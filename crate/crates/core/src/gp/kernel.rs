use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matérn kernel with smoothness fixed at 3/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternKernelParams {
    pub length_scale: f64,
    /// Marginal prior variance `sigma_0^2`.
    pub variance: f64,
}

/// The kernel's smoothness parameter.
pub const NU: f64 = 1.5;

impl Default for MaternKernelParams {
    fn default() -> Self {
        MaternKernelParams {
            length_scale: 1.0,
            variance: 4.0,
        }
    }
}

impl MaternKernelParams {
    pub fn new(length_scale: f64, variance: f64) -> Result<Self> {
        let p = MaternKernelParams {
            length_scale,
            variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        Ok(())
    }

    /// Covariance at Euclidean distance `d`.
    #[inline]
    pub fn at_distance(&self, d: f64) -> f64 {
        let s = 3f64.sqrt() * d / self.length_scale;
        self.variance * (1.0 + s) * (-s).exp()
    }

    /// Gram matrix `K(a_i, b_j)`.
    pub(crate) fn cross(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.at_distance(dist(&a[i], &b[j])))
    }
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `sigma_0^2 (1 + sqrt(3) d / l) exp(-sqrt(3) d / l)` with `d = |x1 - x2|`.
pub fn matern32(x1: &[f64], x2: &[f64], params: &MaternKernelParams) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            got: x2.len(),
        });
    }
    if x1.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel inputs must be finite"));
    }
    params.validate()?;
    Ok(params.at_distance(dist(x1, x2)))
}

/// Upper bound on `P(|f(x1) - f(x2)| > c2 |x1 - x2|)` for a Matérn-3/2 GP
/// prior whose mean is `c1`-Lipschitz, clamped to `[0, 1]`.
pub fn probabilistic_lipschitz_bound(params: &MaternKernelParams, c1: f64, c2: f64) -> Result<f64> {
    Ok(lipschitz_bound_unclamped(params, c1, c2)?.clamp(0.0, 1.0))
}

/// The same bound before clamping.
pub fn lipschitz_bound_unclamped(params: &MaternKernelParams, c1: f64, c2: f64) -> Result<f64> {
    if !(c2 > 0.0) {
        return Err(Error::invalid(format!("threshold c2 must be positive, got {c2}")));
    }
    params.validate()?;
    let l = params.length_scale;
    Ok(params.variance * ((1.0 + 1.0 / (NU - 1.0)) / (c2 * c2 * l * l) + c1 * c1 / (c2 * c2)))
}
