//! Simulation study: two-covariate data-generating processes with known
//! conditional means, and a replication harness that learns linear policies
//! from GP posteriors and scores them against the truth.

mod report;

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmpiricalCovariateDistribution, OutcomeKind, Unit};
use crate::error::{Error, Result};
use crate::gp::{
    fit_gp_binary, fit_gp_continuous, logistic, GpModelSpec, Link, MaternKernelParams,
    PosteriorDrawSet, SamplerConfig,
};
use crate::opt::LinearCandidates;
use crate::policy::{apply_policy, Policy};
use crate::risk::summarize;
use crate::rng;

pub use report::{quantile, AggregateRow, FailureRow, ReplicationReport, ReplicationRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Randomized assignment with probability 1/2; baseline treats nobody.
    #[serde(rename = "I")]
    Overlap,
    /// Assignment `I(x1 > 0.5)`, which is also the baseline.
    #[serde(rename = "II")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeModel {
    Continuous { sigma: f64 },
    Binary { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub scenario: Scenario,
    pub outcome: OutcomeModel,
    pub n: usize,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        match self.outcome {
            OutcomeModel::Continuous { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("sigma must be positive, got {sigma}")))
            }
            OutcomeModel::Binary { gamma } if !gamma.is_finite() => {
                Err(Error::invalid("gamma must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Parameters outside the grids of the original study.
    pub fn is_custom(&self) -> bool {
        let grid_n = [50, 100, 200, 500].contains(&self.n);
        let grid_noise = match self.outcome {
            OutcomeModel::Continuous { sigma } => [1.0, 2.0, 3.0].contains(&sigma),
            OutcomeModel::Binary { gamma } => [1.0, 2.0].contains(&gamma),
        };
        !(grid_n && grid_noise)
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match self.outcome {
            OutcomeModel::Continuous { .. } => OutcomeKind::Continuous,
            OutcomeModel::Binary { .. } => OutcomeKind::Binary,
        }
    }

    pub fn baseline_policy(&self) -> Policy {
        match self.scenario {
            Scenario::Overlap => Policy::LinearThreshold { a: 0.0, b: 0.0, c: -1.0 },
            Scenario::NoOverlap => Policy::LinearThreshold { a: 1.0, b: 0.0, c: -0.5 },
        }
    }

    fn baseline_decision(&self, x: &[f64]) -> usize {
        match self.scenario {
            Scenario::Overlap => 0,
            Scenario::NoOverlap => usize::from(x[0] > 0.5),
        }
    }

    /// `E[Y | X = x, D = d]`.
    pub fn conditional_mean(&self, x: &[f64], d: usize) -> f64 {
        let positive = x[0] > 0.0 && x[1] > 0.0;
        let scale = x[0].abs() * x[1].abs() * d as f64;
        match self.outcome {
            OutcomeModel::Continuous { .. } => {
                x[0] + x[1] + if positive { 2.0 } else { -2.0 } * scale
            }
            OutcomeModel::Binary { gamma } => logistic(
                x[0] / 2.0 + x[1] / 2.0 + gamma * if positive { 1.5 } else { -1.5 } * scale,
            ),
        }
    }

    /// Effect of decision `k` at `x` relative to the baseline decision.
    pub fn oracle_tau(&self, x: &[f64], k: usize) -> f64 {
        self.conditional_mean(x, k) - self.conditional_mean(x, self.baseline_decision(x))
    }

    /// Draws a sample of size `n`.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        let mut units = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let d = match self.scenario {
                Scenario::Overlap => usize::from(rng.random::<f64>() < 0.5),
                Scenario::NoOverlap => self.baseline_decision(&x),
            };
            let mean = self.conditional_mean(&x, d);
            let y = match self.outcome {
                OutcomeModel::Continuous { sigma } => {
                    mean + sigma * Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
                }
                OutcomeModel::Binary { .. } => f64::from(u8::from(rng.random::<f64>() < mean)),
            };
            units.push(Unit {
                covariates: x,
                decision: d,
                outcome: y,
            });
        }
        Dataset::new(units, 2, self.outcome_kind())
    }
}

/// `n` fresh covariate vectors from the study's covariate law.
pub fn evaluation_sample(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, u64::MAX, 0);
    (0..n)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect()
}

/// Mean of `E[Y | X, D = policy(X)]` over `sample`.
pub fn true_value_on(policy: &Policy, spec: &DgpSpec, sample: &[Vec<f64>]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("empty evaluation sample"));
    }
    let mut total = 0.0;
    for x in sample {
        total += spec.conditional_mean(x, apply_policy(policy, x)?);
    }
    Ok(total / sample.len() as f64)
}

/// Monte Carlo value of `policy` over `n_eval` fresh covariates.
pub fn true_value(policy: &Policy, spec: &DgpSpec, n_eval: usize, seed: u64) -> Result<f64> {
    true_value_on(policy, spec, &evaluation_sample(n_eval, seed))
}

/// Share of `sample` where `policy` does worse than the baseline in
/// expectation.
pub fn true_acrisk_on(policy: &Policy, spec: &DgpSpec, sample: &[Vec<f64>]) -> Result<f64> {
    let dist = EmpiricalCovariateDistribution::uniform(sample.to_vec())?;
    crate::risk::true_acrisk(policy, &spec.baseline_policy(), |x, k| spec.oracle_tau(x, k), &dist)
}

/// GP prior and sampler settings used to fit each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kernel: MaternKernelParams,
    pub draws: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kernel: MaternKernelParams::default(),
            draws: 2000,
            sampler: SamplerConfig::default(),
        }
    }
}

/// One point of the design grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub dgp: DgpSpec,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub cells: Vec<SweepCell>,
    pub epsilons: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Fresh covariates used for true values and risks.
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
}

fn default_eval_size() -> usize {
    100_000
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.epsilons.is_empty() {
            return Err(Error::invalid("sweep needs at least one cell and one epsilon"));
        }
        if self.replications == 0 || self.eval_size == 0 {
            return Err(Error::invalid("replications and evaluation size must be positive"));
        }
        for &e in &self.epsilons {
            crate::opt::check_epsilon(e)?;
        }
        for c in &self.cells {
            c.dgp.validate()?;
            c.estimator.kernel.validate()?;
            if c.estimator.draws == 0 {
                return Err(Error::invalid("need at least one posterior draw"));
            }
        }
        Ok(())
    }
}

/// Fits the GP for one simulated dataset with the training covariates as
/// query points.
pub fn fit_posterior(
    data: &Dataset,
    dgp: &DgpSpec,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<PosteriorDrawSet> {
    let link = match dgp.outcome {
        OutcomeModel::Continuous { .. } => Link::Identity,
        OutcomeModel::Binary { .. } => Link::Logit,
    };
    let mut spec = GpModelSpec::uniform(2, estimator.kernel, link);
    spec.sampler = estimator.sampler;
    let query = data.covariates();
    let baseline = dgp.baseline_policy();
    match link {
        Link::Identity => fit_gp_continuous(data, &spec, &baseline, &query, estimator.draws, seed),
        Link::Logit => fit_gp_binary(data, &spec, &baseline, &query, estimator.draws, seed),
    }
}

fn run_replication(
    cell_index: usize,
    cell: &SweepCell,
    replication: usize,
    config: &SweepConfig,
    eval: &[Vec<f64>],
) -> Result<Vec<ReplicationRow>> {
    let mut rng = rng::stream(config.seed, cell_index as u64, replication as u64);
    let data = cell.dgp.generate(&mut rng)?;
    let fit_seed: u64 = rng.random();
    let draws = fit_posterior(&data, &cell.dgp, &cell.estimator, fit_seed)?;
    let dist = EmpiricalCovariateDistribution::uniform(data.covariates())?;
    let table = summarize(&draws, &dist)?;
    let mut budgets: Vec<Option<f64>> = config.epsilons.iter().map(|&e| Some(e)).collect();
    budgets.push(None);
    let results = LinearCandidates::new(&table)?.solve(&budgets)?;
    let baseline = cell.dgp.baseline_policy();
    let baseline_eval = baseline.decisions_on(eval)?;
    results
        .into_iter()
        .zip(&budgets)
        .map(|(res, budget)| {
            let decisions = res.policy.decisions_on(eval)?;
            let (a, b, c) = match res.policy {
                Policy::LinearThreshold { a, b, c } => (a, b, c),
                _ => unreachable!("linear solver returns thresholds"),
            };
            Ok(ReplicationRow {
                cell: cell_index,
                replication,
                epsilon: budget.unwrap_or(1.0),
                unconstrained: budget.is_none(),
                posterior_gain: res.posterior_value_gain,
                pacrisk: res.pacrisk,
                true_value: true_value_on(&res.policy, &cell.dgp, eval)?,
                true_acrisk: true_acrisk_on(&res.policy, &cell.dgp, eval)?,
                equals_baseline: decisions == baseline_eval,
                a,
                b,
                c,
            })
        })
        .collect()
}

/// Runs every cell and replication. Replication `r` of cell `c` draws from
/// `rng::stream(seed, c, r)`; a failed fit is recorded, not fatal.
pub fn run_sweep(config: &SweepConfig) -> Result<ReplicationReport> {
    config.validate()?;
    let eval = evaluation_sample(config.eval_size, config.seed);
    let jobs: Vec<(usize, usize)> = (0..config.cells.len())
        .flat_map(|c| (0..config.replications).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<Vec<ReplicationRow>>)> = jobs
        .par_iter()
        .map(|&(c, r)| (c, r, run_replication(c, &config.cells[c], r, config, &eval)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, replication, outcome) in outcomes {
        match outcome {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(FailureRow {
                cell,
                replication,
                error: e.to_string(),
            }),
        }
    }
    Ok(ReplicationReport::new(config.cells.clone(), rows, failures))
}
