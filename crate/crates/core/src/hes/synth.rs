//! Synthetic sub-model scores and binary outcomes with the HES data layout.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HesPipeline;
use crate::dataset::{Dataset, OutcomeKind, Unit};
use crate::error::{Error, Result};
use crate::gp::logistic;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HesDataSpec {
    pub n: usize,
    /// Spread of each sub-model score around the unit's latent security.
    pub score_noise: f64,
    /// Penalty on the log-odds per level of distance between the assigned
    /// score and the latent security.
    pub mismatch_penalty: f64,
}

impl Default for HesDataSpec {
    fn default() -> Self {
        HesDataSpec {
            n: 500,
            score_noise: 0.6,
            mismatch_penalty: 0.5,
        }
    }
}

/// Draws `n` units: a latent security level `z ~ U(1, L)`, raw scores
/// `clamp(z + noise, 1, L)`, the decision the pipeline assigns (0-based), and
/// `Y ~ Bernoulli(expit(0.8 (z - mid) - penalty |d + 1 - z|))`.
///
/// Also returns the success probability of every decision for every unit.
pub fn generate_hes_data(
    pipeline: &HesPipeline,
    spec: &HesDataSpec,
    seed: u64,
) -> Result<(Dataset, Vec<Vec<f64>>)> {
    if spec.n == 0 {
        return Err(Error::invalid("need at least one unit"));
    }
    if !(spec.score_noise >= 0.0) || !spec.mismatch_penalty.is_finite() {
        return Err(Error::invalid("score noise must be nonnegative and penalty finite"));
    }
    let levels = pipeline.score_levels();
    if levels < 2 {
        return Err(Error::invalid("synthetic data needs at least two score levels"));
    }
    let hi = levels as f64;
    let mid = (1.0 + hi) / 2.0;
    let noise = Normal::new(0.0, spec.score_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng::stream(seed, 3, 0);
    let mut units = Vec::with_capacity(spec.n);
    let mut probs = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z: f64 = rng.random_range(1.0..hi);
        let x: Vec<f64> = (0..pipeline.n_inputs())
            .map(|_| (z + noise.sample(&mut rng)).clamp(1.0, hi))
            .collect();
        let d = pipeline.evaluate(&x)? as usize - 1;
        let p: Vec<f64> = (0..levels as usize)
            .map(|k| logistic(0.8 * (z - mid) - spec.mismatch_penalty * ((k + 1) as f64 - z).abs()))
            .collect();
        let y = if rng.random::<f64>() < p[d] { 1.0 } else { 0.0 };
        units.push(Unit {
            covariates: x,
            decision: d,
            outcome: y,
        });
        probs.push(p);
    }
    Ok((Dataset::new(units, levels as usize, OutcomeKind::Binary)?, probs))
}
