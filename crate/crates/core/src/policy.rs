//! Deterministic decision rules `x -> {0..K-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hes::HesPipeline;

/// A policy, serialized with a `kind` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Explicit decisions for a finite set of covariate vectors. Points outside
    /// the support take the decision of the nearest support point (lowest
    /// index on ties).
    PerUnitAssignment {
        support: Vec<Vec<f64>>,
        decisions: Vec<usize>,
    },
    /// `I(a x1 + b x2 + c > 0)`, two covariates, two decisions.
    LinearThreshold { a: f64, b: f64, c: f64 },
    /// Decision is the pipeline's 1-based score shifted to 0-based.
    TablePipeline { pipeline: HesPipeline },
}

impl Policy {
    pub fn constant(support: Vec<Vec<f64>>, decision: usize) -> Policy {
        let decisions = vec![decision; support.len()];
        Policy::PerUnitAssignment { support, decisions }
    }

    /// The covariate dimension the policy expects, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Policy::PerUnitAssignment { support, .. } => support.first().map(Vec::len),
            Policy::LinearThreshold { .. } => Some(2),
            Policy::TablePipeline { pipeline } => Some(pipeline.n_inputs()),
        }
    }

    /// Largest decision the policy can emit plus one.
    pub fn decision_bound(&self) -> usize {
        match self {
            Policy::PerUnitAssignment { decisions, .. } => {
                decisions.iter().max().map(|d| d + 1).unwrap_or(1)
            }
            Policy::LinearThreshold { .. } => 2,
            Policy::TablePipeline { pipeline } => pipeline.score_levels() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::PerUnitAssignment { support, decisions } => {
                if support.is_empty() {
                    return Err(Error::validation("per-unit policy with empty support"));
                }
                if support.len() != decisions.len() {
                    return Err(Error::DimensionMismatch {
                        expected: support.len(),
                        got: decisions.len(),
                    });
                }
                let p = support[0].len();
                if let Some(bad) = support.iter().find(|s| s.len() != p) {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: bad.len(),
                    });
                }
                Ok(())
            }
            Policy::LinearThreshold { a, b, c } => {
                if [a, b, c].iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::validation("linear threshold coefficients must be finite"))
                }
            }
            Policy::TablePipeline { pipeline } => pipeline.validate(),
        }
    }

    /// Decisions for every point of `support`, in order.
    pub fn decisions_on(&self, support: &[Vec<f64>]) -> Result<Vec<usize>> {
        support.iter().map(|x| apply_policy(self, x)).collect()
    }
}

/// Evaluates `policy` at covariates `x`.
pub fn apply_policy(policy: &Policy, x: &[f64]) -> Result<usize> {
    if let Some(p) = policy.dim() {
        if p != x.len() {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.len(),
            });
        }
    }
    match policy {
        Policy::PerUnitAssignment { support, decisions } => {
            if support.is_empty() {
                return Err(Error::validation("per-unit policy with empty support"));
            }
            if let Some(i) = support.iter().position(|s| s.as_slice() == x) {
                return Ok(decisions[i]);
            }
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (i, s) in support.iter().enumerate() {
                let dist: f64 = s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_dist {
                    best_dist = dist;
                    best = i;
                }
            }
            Ok(decisions[best])
        }
        Policy::LinearThreshold { a, b, c } => Ok(usize::from(a * x[0] + b * x[1] + c > 0.0)),
        Policy::TablePipeline { pipeline } => Ok(pipeline.evaluate(x)? as usize - 1),
    }
}
