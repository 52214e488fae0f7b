//! Bayesian safe policy learning.
//!
//! Posterior draws of conditional effects are reduced to per-unit benefit and
//! risk summaries, and policies are chosen to maximize posterior expected
//! value while keeping the posterior average conditional risk (PACRisk)
//! below a budget `epsilon`.
//!
//! Module map:
//! - [`dataset`], [`policy`]: shared data and policy types
//! - [`gp`]: Gaussian-process posterior sampling of conditional effects
//! - [`risk`]: benefit/risk summaries, posterior value, PACRisk, ACRisk
//! - [`opt`]: chance-constrained solvers for per-unit, linear and table policies
//! - [`tables`]: monotone decision tables and the short-burst optimizer
//! - [`hes`]: hierarchical table-aggregation pipelines and partial dependence
//! - [`sim`]: data-generating processes and replication sweeps

pub mod dataset;
pub mod error;
pub mod gp;
pub mod hes;
pub mod opt;
pub mod policy;
pub mod risk;
pub mod rng;
pub mod sim;
pub mod tables;

pub use dataset::{
    load_dataset, ColumnSchema, Dataset, EmpiricalCovariateDistribution, OutcomeKind, Unit,
    UtilitySpec,
};
pub use error::{Error, Result};
pub use policy::{apply_policy, Policy};
