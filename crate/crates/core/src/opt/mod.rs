//! Maximizing posterior value subject to `PACRisk <= epsilon` over three
//! policy classes.

mod linear;
mod per_unit;
mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;

pub use linear::{solve_linear, solve_linear_grid, LinearCandidates};
pub use per_unit::{solve_per_unit, solve_per_unit_with, PerUnitConfig};
pub use table::{solve_table_pipeline, TableScope};

/// Slack allowed when comparing a policy's risk against the budget, so that
/// different summation orders agree on feasibility.
pub const RISK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Lagrange multipliers tried.
    pub multipliers: u64,
    /// Branch-and-bound nodes expanded.
    pub nodes: u64,
    /// Candidate policies scored.
    pub candidates: u64,
    /// Objective evaluations in the stochastic search.
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub policy: Policy,
    pub posterior_value_gain: f64,
    pub pacrisk: f64,
    pub epsilon: f64,
    pub feasible: bool,
    /// The returned policy is provably optimal within its class.
    pub certified: bool,
    /// Upper bound on how far the gain may fall short of the optimum
    /// (zero when certified, absent when no bound is known).
    pub gap_bound: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl OptimizationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}
