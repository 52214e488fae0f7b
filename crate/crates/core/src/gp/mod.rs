//! Gaussian-process posterior sampling for the sequential-difference model
//! `E[Y(k) | x] = g(f_0(x) + ... + f_k(x))`.
//!
//! `f_0` models the outcome under decision 0 and `f_k` the step from `k-1`
//! to `k`; each has an independent Matérn-3/2 GP prior. A level without
//! adjacent-contrast data is informed only through its prior, which is what
//! drives extrapolation when covariates do not overlap.
//!
//! Both samplers draw latent functions by pathwise conditioning: a joint
//! prior draw is corrected by `K_*y (K_yy + Sigma)^{-1}(y - prior draw - noise draw)`.

mod binary;
mod continuous;
mod draws;
mod kernel;

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, UtilitySpec};
use crate::error::{Error, Result};
use crate::policy::Policy;

pub use binary::fit_gp_binary;
pub use continuous::fit_gp_continuous;
pub use draws::{PosteriorDrawSet, RawDraws};
pub use kernel::{
    lipschitz_bound_unclamped, matern32, probabilistic_lipschitz_bound, MaternKernelParams, NU,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logit,
}

/// Observation-noise model for continuous outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `sigma^2 ~ InvGamma(shape, scale)`, resampled each Gibbs sweep.
    InverseGamma { shape: f64, scale: f64 },
    /// `sigma^2` pinned.
    Fixed { variance: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::InverseGamma {
            shape: 1.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Gibbs sweeps discarded per chain (continuous outcomes).
    pub burn_in: usize,
    pub chains: usize,
    /// Diagonal jitter, relative to each level's kernel variance.
    pub jitter: f64,
    /// Newton iteration cap for the latent mode (binary outcomes).
    pub max_newton_iters: usize,
    pub newton_tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 500,
            chains: 2,
            jitter: 1e-8,
            max_newton_iters: 100,
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpModelSpec {
    /// Kernel of `f_k`, one per decision level.
    pub levels: Vec<MaternKernelParams>,
    /// Constant prior mean of `f_0`; the step functions have mean zero.
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    pub link: Link,
    #[serde(default)]
    pub utility: UtilitySpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

impl GpModelSpec {
    /// Every level shares `kernel`.
    pub fn uniform(k_decisions: usize, kernel: MaternKernelParams, link: Link) -> Self {
        GpModelSpec {
            levels: vec![kernel; k_decisions],
            prior_mean: 0.0,
            noise: NoiseModel::default(),
            link,
            utility: UtilitySpec::OutcomeIdentity,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.levels.len() != data.k_decisions() {
            return Err(Error::invalid(format!(
                "model has {} kernel levels but data has {} decisions",
                self.levels.len(),
                data.k_decisions()
            )));
        }
        for p in &self.levels {
            p.validate()?;
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::invalid("prior mean must be finite"));
        }
        match self.noise {
            NoiseModel::InverseGamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                return Err(Error::invalid("inverse-gamma shape and scale must be positive"));
            }
            NoiseModel::Fixed { variance } if !(variance > 0.0) => {
                return Err(Error::invalid("fixed noise variance must be positive"));
            }
            _ => {}
        }
        if self.sampler.chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if !(self.sampler.jitter >= 0.0) {
            return Err(Error::invalid("jitter must be nonnegative"));
        }
        self.utility.validate(data.k_decisions(), data.outcome_kind())
    }

    fn level_mean(&self, k: usize) -> f64 {
        if k == 0 {
            self.prior_mean
        } else {
            0.0
        }
    }
}

/// Precomputed prior structure shared by both samplers.
struct LatentModel {
    k: usize,
    /// Distinct covariate vectors among training and query points.
    n_points: usize,
    train_point: Vec<usize>,
    query_point: Vec<usize>,
    decisions: Vec<usize>,
    level_means: Vec<f64>,
    /// Lower Cholesky factor of each level's jittered Gram matrix on all points.
    chol: Vec<DMatrix<f64>>,
    /// `Cov(f_k(points), g(train))`: level-k Gram restricted to training
    /// columns whose decision is at least `k`.
    cross: Vec<DMatrix<f64>>,
    /// Prior covariance of `g_i = sum_{d <= D_i} f_d(x_i)`.
    train_cov: DMatrix<f64>,
    /// Prior mean of `g`.
    train_mean: DVector<f64>,
}

impl LatentModel {
    fn build(data: &Dataset, spec: &GpModelSpec, query: &[Vec<f64>]) -> Result<Self> {
        let k = data.k_decisions();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut intern = |x: &[f64]| -> usize {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                points.push(x.to_vec());
                points.len() - 1
            })
        };
        let train_point: Vec<usize> = data.units().iter().map(|u| intern(&u.covariates)).collect();
        let query_point: Vec<usize> = query.iter().map(|x| intern(x)).collect();
        let n_points = points.len();
        let decisions: Vec<usize> = data.units().iter().map(|u| u.decision).collect();
        let n = decisions.len();

        let mut chol = Vec::with_capacity(k);
        let mut cross = Vec::with_capacity(k);
        let mut train_cov = DMatrix::<f64>::zeros(n, n);
        for (level, params) in spec.levels.iter().enumerate() {
            let mut gram = params.cross(&points, &points);
            for i in 0..n_points {
                gram[(i, i)] += spec.sampler.jitter * params.variance;
            }
            let factor = Cholesky::<f64, Dyn>::new(gram.clone()).ok_or_else(|| {
                Error::Numerical(format!("kernel matrix for level {level} is not positive definite"))
            })?;
            let cross_k = DMatrix::from_fn(n_points, n, |p, i| {
                if decisions[i] >= level {
                    gram[(p, train_point[i])]
                } else {
                    0.0
                }
            });
            for i in 0..n {
                if decisions[i] < level {
                    continue;
                }
                for j in 0..n {
                    if decisions[j] >= level {
                        train_cov[(i, j)] += gram[(train_point[i], train_point[j])];
                    }
                }
            }
            chol.push(factor.l());
            cross.push(cross_k);
        }
        let level_means: Vec<f64> = (0..k).map(|l| spec.level_mean(l)).collect();
        let train_mean =
            DVector::from_iterator(n, decisions.iter().map(|&d| level_means[..=d].iter().sum()));
        Ok(LatentModel {
            k,
            n_points,
            train_point,
            query_point,
            decisions,
            level_means,
            chol,
            cross,
            train_cov,
            train_mean,
        })
    }

    /// `s` joint prior draws of every level on every point, one per column.
    fn prior_draw<R: rand::Rng + ?Sized>(&self, rng: &mut R, s: usize) -> Vec<DMatrix<f64>> {
        (0..self.k)
            .map(|level| {
                let z = DMatrix::from_fn(self.n_points, s, |_, _| StandardNormal.sample(rng));
                let mut f = &self.chol[level] * z;
                f.add_scalar_mut(self.level_means[level]);
                f
            })
            .collect()
    }

    /// `g_i = sum_{d <= D_i} f_d(x_i)` on the training units, per column.
    fn train_latent(&self, f: &[DMatrix<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.decisions.len(), f[0].ncols(), |i, c| {
            (0..=self.decisions[i])
                .map(|d| f[d][(self.train_point[i], c)])
                .sum()
        })
    }

    /// Adds `Cov(f, g) * alpha` to prior draws, column by column.
    fn correct(&self, f: &mut [DMatrix<f64>], alpha: &DMatrix<f64>) {
        for (level, fk) in f.iter_mut().enumerate() {
            fk.gemm(1.0, &self.cross[level], alpha, 1.0);
        }
    }

    /// Appends each column's latent values at the query points as `[query][level]`.
    fn push_query(&self, f: &[DMatrix<f64>], out: &mut Vec<Vec<Vec<f64>>>) {
        for c in 0..f[0].ncols() {
            out.push(
                self.query_point
                    .iter()
                    .map(|&p| (0..self.k).map(|level| f[level][(p, c)]).collect())
                    .collect(),
            );
        }
    }
}

/// Draws are produced in blocks of this many columns.
const BLOCK: usize = 256;

/// Shared input validation; returns the baseline decisions at the query points.
fn check_inputs(
    data: &Dataset,
    spec: &GpModelSpec,
    baseline: &Policy,
    query: &[Vec<f64>],
    n_draws: usize,
) -> Result<Vec<usize>> {
    spec.validate(data)?;
    if n_draws < 1 {
        return Err(Error::invalid("need at least one posterior draw"));
    }
    if query.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    let p = if data.is_empty() { query[0].len() } else { data.dim() };
    if let Some(bad) = query.iter().find(|x| x.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: bad.len(),
        });
    }
    let decisions = baseline.decisions_on(query)?;
    if let Some(&d) = decisions.iter().find(|&&d| d >= data.k_decisions()) {
        return Err(Error::validation(format!(
            "baseline decision {d} outside 0..{}",
            data.k_decisions() - 1
        )));
    }
    Ok(decisions)
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Converts latent values at one point into `tau_k` relative to `baseline`.
///
/// `latent[k]` holds `f_k(x)`; the conditional expected utility of decision
/// `k` is computed from the cumulative sum `f_0 + ... + f_k`.
pub fn latent_to_tau(
    latent: &[f64],
    baseline: usize,
    link: Link,
    utility: &UtilitySpec,
    out: &mut [f64],
) {
    let mut cum = 0.0;
    for (k, &f) in latent.iter().enumerate() {
        cum += f;
        out[k] = match link {
            Link::Identity => utility.expected_continuous(cum),
            Link::Logit => utility.expected_binary(k, logistic(cum)),
        };
    }
    let base = out[baseline];
    for v in out.iter_mut() {
        *v -= base;
    }
    out[baseline] = 0.0;
}
