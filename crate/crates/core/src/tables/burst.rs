//! Short-burst stochastic optimization over sets of monotone tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::{decode, mixed_step, LinearExtensionState};
use super::dag::GridPosetDag;
use super::DecisionTable;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurstConfig {
    /// Bursts per restart.
    pub bursts: usize,
    /// Chain steps per burst.
    pub burst_len: usize,
    /// Independent runs; the best feasible result over all runs is returned.
    pub restarts: usize,
    /// Probability that a step is a linear-extension move rather than a
    /// boundary move.
    pub sort_move_prob: f64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        BurstConfig {
            bursts: 200,
            burst_len: 10,
            restarts: 2000,
            sort_move_prob: 0.5,
        }
    }
}

impl BurstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bursts == 0 || self.burst_len == 0 || self.restarts == 0 {
            return Err(Error::invalid(
                "short-burst config needs at least one burst, step and restart",
            ));
        }
        if !(0.0..=1.0).contains(&self.sort_move_prob) {
            return Err(Error::invalid("sort_move_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstOutcome {
    pub tables: Vec<DecisionTable>,
    pub objective: f64,
    /// Restart that produced the returned tables; `None` when no restart
    /// beat the initial tables.
    pub restart: Option<usize>,
    /// Objective evaluations over all restarts.
    pub evaluations: u64,
}

/// Maximizes `objective` over tuples of monotone tables subject to
/// `constraint`, starting every restart from `initial` (which must satisfy
/// the constraint).
///
/// Each burst runs `burst_len` steps of the mixed chain; every step mutates
/// one uniformly chosen table. The next burst starts from the best feasible
/// state of the previous one (ties move to the later state). Across
/// restarts the highest objective wins; ties go to fewer changed cells
/// relative to `initial`, then to the earlier restart. `initial` itself takes
/// part with zero changed cells, so it is kept unless some restart strictly
/// improves on it. Restart `r` draws from
/// `rng::stream(seed, 0, r)`.
pub fn short_burst<O, C>(
    objective: O,
    constraint: C,
    initial: &[DecisionTable],
    config: &BurstConfig,
    seed: u64,
) -> Result<BurstOutcome>
where
    O: Fn(&[DecisionTable]) -> f64 + Sync,
    C: Fn(&[DecisionTable]) -> bool + Sync,
{
    config.validate()?;
    if initial.is_empty() {
        return Err(Error::invalid("no tables to optimize"));
    }
    if !constraint(initial) {
        return Err(Error::validation(
            "initial tables violate the constraint; no feasible state to start from",
        ));
    }
    let dags = initial
        .iter()
        .map(|t| GridPosetDag::new(t.sizes()))
        .collect::<Result<Vec<_>>>()?;
    let start = initial
        .iter()
        .zip(&dags)
        .map(|(t, dag)| LinearExtensionState::from_table(dag, t))
        .collect::<Result<Vec<_>>>()?;
    let start_value = objective(initial);

    let runs: Vec<(Vec<DecisionTable>, f64, u64)> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = rng::stream(seed, 0, restart as u64);
            run_restart(
                &objective,
                &constraint,
                &dags,
                start.clone(),
                initial.to_vec(),
                start_value,
                config,
                &mut rng,
            )
        })
        .collect();

    let mut evaluations = 0;
    // (restart, objective, changed cells); None stands for `initial`
    let mut best: (Option<usize>, f64, usize) = (None, start_value, 0);
    for (r, (tables, value, evals)) in runs.iter().enumerate() {
        evaluations += evals;
        let changed: usize = tables
            .iter()
            .zip(initial)
            .map(|(t, t0)| t.changed_cells(t0))
            .sum();
        if *value > best.1 || (*value == best.1 && changed < best.2) {
            best = (Some(r), *value, changed);
        }
    }
    let (restart, objective, _) = best;
    Ok(BurstOutcome {
        tables: match restart {
            Some(r) => runs[r].0.clone(),
            None => initial.to_vec(),
        },
        objective,
        restart,
        evaluations,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_restart<O, C>(
    objective: &O,
    constraint: &C,
    dags: &[GridPosetDag],
    mut states: Vec<LinearExtensionState>,
    mut tables: Vec<DecisionTable>,
    mut value: f64,
    config: &BurstConfig,
    rng: &mut rng::Rng,
) -> (Vec<DecisionTable>, f64, u64)
where
    O: Fn(&[DecisionTable]) -> f64,
    C: Fn(&[DecisionTable]) -> bool,
{
    use rand::Rng;
    let mut evaluations = 0u64;
    for _ in 0..config.bursts {
        let mut best_states = states.clone();
        let mut best_tables = tables.clone();
        let mut best_value = value;
        for _ in 0..config.burst_len {
            let which = if states.len() == 1 {
                0
            } else {
                rng.random_range(0..states.len())
            };
            if !mixed_step(&mut states[which], &dags[which], config.sort_move_prob, rng) {
                continue;
            }
            let decoded = decode(&states[which], &dags[which]);
            if decoded == tables[which] {
                continue;
            }
            tables[which] = decoded;
            evaluations += 1;
            if !constraint(&tables) {
                continue;
            }
            let v = objective(&tables);
            if v >= best_value {
                best_value = v;
                best_states = states.clone();
                best_tables = tables.clone();
            }
        }
        states = best_states;
        tables = best_tables;
        value = best_value;
    }
    (tables, value, evaluations)
}
