//! Benefit and risk summaries of posterior draws, and the value and risk of
//! policies evaluated against them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::EmpiricalCovariateDistribution;
use crate::error::{Error, Result};
use crate::gp::PosteriorDrawSet;
use crate::policy::Policy;

/// Posterior conditional benefit `b[i][k]` and risk `r[i][k]` of each
/// decision relative to the baseline, on a weighted covariate support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitRiskTable {
    pub b: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub support: Vec<Vec<f64>>,
    pub baseline: Vec<usize>,
}

impl BenefitRiskTable {
    /// Direct construction, mostly for hand-built instances.
    pub fn new(
        b: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        dist: &EmpiricalCovariateDistribution,
        baseline: Vec<usize>,
    ) -> Result<Self> {
        let n = dist.len();
        for (name, len) in [("b", b.len()), ("r", r.len()), ("baseline", baseline.len())] {
            if len != n {
                return Err(Error::validation(format!(
                    "{name} has {len} rows but the support has {n} points"
                )));
            }
        }
        let k = b.first().map(Vec::len).unwrap_or(0);
        if k == 0 {
            return Err(Error::validation("table needs at least one decision"));
        }
        for i in 0..n {
            if b[i].len() != k || r[i].len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: b[i].len().min(r[i].len()),
                });
            }
            if baseline[i] >= k {
                return Err(Error::validation(format!(
                    "baseline decision {} at unit {i} out of range",
                    baseline[i]
                )));
            }
            if b[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("non-finite benefit at unit {i}")));
            }
            if r[i].iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::validation(format!("risk outside [0, 1] at unit {i}")));
            }
            if b[i][baseline[i]] != 0.0 || r[i][baseline[i]] != 0.0 {
                return Err(Error::validation(format!(
                    "baseline entries at unit {i} must be zero"
                )));
            }
        }
        Ok(BenefitRiskTable {
            b,
            r,
            weights: dist.weights().to_vec(),
            support: dist.support().to_vec(),
            baseline,
        })
    }

    pub fn n_units(&self) -> usize {
        self.b.len()
    }

    pub fn k_decisions(&self) -> usize {
        self.b[0].len()
    }

    /// `sum_i w_i b[i][d_i]`.
    pub fn value_of(&self, decisions: &[usize]) -> Result<f64> {
        self.check_decisions(decisions)?;
        Ok(decisions
            .iter()
            .enumerate()
            .map(|(i, &d)| self.weights[i] * self.b[i][d])
            .sum())
    }

    /// `sum_i w_i r[i][d_i]`.
    pub fn risk_of(&self, decisions: &[usize]) -> Result<f64> {
        self.check_decisions(decisions)?;
        Ok(decisions
            .iter()
            .enumerate()
            .map(|(i, &d)| self.weights[i] * self.r[i][d])
            .sum())
    }

    /// Decisions of `policy` on the support, range-checked.
    pub fn decisions_of(&self, policy: &Policy) -> Result<Vec<usize>> {
        let d = policy.decisions_on(&self.support)?;
        self.check_decisions(&d)?;
        Ok(d)
    }

    fn check_decisions(&self, decisions: &[usize]) -> Result<()> {
        if decisions.len() != self.n_units() {
            return Err(Error::DimensionMismatch {
                expected: self.n_units(),
                got: decisions.len(),
            });
        }
        let k = self.k_decisions();
        if let Some(&d) = decisions.iter().find(|&&d| d >= k) {
            return Err(Error::validation(format!("decision {d} outside 0..{}", k - 1)));
        }
        Ok(())
    }

    /// Long format `unit,decision,b,r`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["unit", "decision", "b", "r"])?;
        for i in 0..self.n_units() {
            for k in 0..self.k_decisions() {
                w.write_record([
                    i.to_string(),
                    k.to_string(),
                    format!("{:?}", self.b[i][k]),
                    format!("{:?}", self.r[i][k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_support(draws: &PosteriorDrawSet, dist: &EmpiricalCovariateDistribution) -> Result<()> {
    if draws.n_units() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: draws.n_units(),
            got: dist.len(),
        });
    }
    Ok(())
}

/// Posterior means of `tau` and of `I(tau < 0)` for every unit and decision.
pub fn summarize(
    draws: &PosteriorDrawSet,
    dist: &EmpiricalCovariateDistribution,
) -> Result<BenefitRiskTable> {
    check_support(draws, dist)?;
    let m = draws.n_draws() as f64;
    let k = draws.k_decisions();
    let mut b = Vec::with_capacity(draws.n_units());
    let mut r = Vec::with_capacity(draws.n_units());
    for i in 0..draws.n_units() {
        let mut bi = Vec::with_capacity(k);
        let mut ri = Vec::with_capacity(k);
        for d in 0..k {
            let column = draws.draws(i, d);
            bi.push(column.iter().sum::<f64>() / m);
            ri.push(column.iter().filter(|&&t| t < 0.0).count() as f64 / m);
        }
        b.push(bi);
        r.push(ri);
    }
    Ok(BenefitRiskTable {
        b,
        r,
        weights: dist.weights().to_vec(),
        support: dist.support().to_vec(),
        baseline: draws.baseline_decisions().to_vec(),
    })
}

/// Posterior expected value gain of `policy` over the baseline.
pub fn posterior_value(policy: &Policy, table: &BenefitRiskTable) -> Result<f64> {
    table.value_of(&table.decisions_of(policy)?)
}

/// Posterior average conditional risk of `policy` from a summary table.
pub fn pacrisk(policy: &Policy, table: &BenefitRiskTable) -> Result<f64> {
    table.risk_of(&table.decisions_of(policy)?)
}

/// PACRisk computed draw by draw: the average over draws of the weighted
/// share of units whose effect under `policy` is negative.
pub fn pacrisk_direct(
    policy: &Policy,
    baseline: &Policy,
    draws: &PosteriorDrawSet,
    dist: &EmpiricalCovariateDistribution,
) -> Result<f64> {
    check_support(draws, dist)?;
    let support = dist.support();
    if baseline.decisions_on(support)? != draws.baseline_decisions() {
        return Err(Error::validation(
            "baseline policy disagrees with the baseline the draws were taken against",
        ));
    }
    let decisions = policy.decisions_on(support)?;
    if let Some(&d) = decisions.iter().find(|&&d| d >= draws.k_decisions()) {
        return Err(Error::validation(format!("decision {d} out of range")));
    }
    let m = draws.n_draws() as f64;
    let w = dist.weights();
    // Each unit's indicator count is divided by M before weighting so that
    // the sum runs in the same order as the summary-table route.
    Ok(decisions
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let hits = draws.draws(i, d).iter().filter(|&&t| t < 0.0).count();
            w[i] * (hits as f64 / m)
        })
        .sum())
}

/// Average conditional risk under known conditional expected utilities.
///
/// `oracle(x, k)` is the conditional expected utility of decision `k` at `x`
/// (or any function differing from it by a term constant in `k`, such as the
/// effect relative to the baseline).
pub fn true_acrisk(
    policy: &Policy,
    baseline: &Policy,
    oracle: impl Fn(&[f64], usize) -> f64,
    dist: &EmpiricalCovariateDistribution,
) -> Result<f64> {
    let mut risk = 0.0;
    for (x, w) in dist.support().iter().zip(dist.weights()) {
        let d = crate::policy::apply_policy(policy, x)?;
        let d0 = crate::policy::apply_policy(baseline, x)?;
        if d != d0 && oracle(x, d) - oracle(x, d0) < 0.0 {
            risk += w;
        }
    }
    Ok(risk)
}

/// Expected utility of `policy` under known conditional expected utilities.
pub fn true_value(
    policy: &Policy,
    oracle: impl Fn(&[f64], usize) -> f64,
    dist: &EmpiricalCovariateDistribution,
) -> Result<f64> {
    let mut value = 0.0;
    for (x, w) in dist.support().iter().zip(dist.weights()) {
        value += w * oracle(x, crate::policy::apply_policy(policy, x)?);
    }
    Ok(value)
}
