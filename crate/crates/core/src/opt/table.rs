use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_epsilon, Diagnostics, OptimizationResult, RISK_TOL};
use crate::error::{Error, Result};
use crate::hes::HesPipeline;
use crate::policy::Policy;
use crate::risk::BenefitRiskTable;
use crate::tables::{short_burst, BurstConfig, DecisionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableScope {
    /// Learn only the sink's table; lower nodes keep the template tables.
    TopTableOnly,
    /// Learn every table of the pipeline jointly.
    AllTables,
}

/// Per-output totals of `w_i b[i][o]` and `w_i r[i][o]` over a group of units.
fn aggregate(table: &BenefitRiskTable, units: &[usize], levels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut b = vec![0.0; levels];
    let mut r = vec![0.0; levels];
    for &i in units {
        for o in 0..levels {
            b[o] += table.weights[i] * table.b[i][o];
            r[o] += table.weights[i] * table.r[i][o];
        }
    }
    (b, r)
}

/// Best monotone tables for `template` with `PACRisk <= epsilon`, found by
/// short-burst search started from the template's own tables.
///
/// Table rows of `table` must be the pipeline's raw inputs and its decisions
/// the 0-based security score. With [`TableScope::TopTableOnly`], a sink
/// table shared with lower nodes is copied under `<key>_top` first.
pub fn solve_table_pipeline(
    table: &BenefitRiskTable,
    template: &HesPipeline,
    scope: TableScope,
    epsilon: f64,
    config: &BurstConfig,
    seed: u64,
) -> Result<OptimizationResult> {
    check_epsilon(epsilon)?;
    config.validate()?;
    let levels = template.score_levels() as usize;
    if table.k_decisions() != levels {
        return Err(Error::validation(format!(
            "pipeline has {levels} score levels but the table has {} decisions",
            table.k_decisions()
        )));
    }
    let rounded = table
        .support
        .iter()
        .map(|x| template.round(x))
        .collect::<Result<Vec<_>>>()?;
    let cap = epsilon + RISK_TOL;

    let (pipeline, learned_keys, outcome) = match scope {
        TableScope::TopTableOnly => {
            let key = template.sink().table.clone();
            let pipeline = if template.table_shared_below_sink(&key) {
                template.with_private_sink_table(&format!("{key}_top"))?
            } else {
                template.clone()
            };
            let sink = pipeline.sink_table().clone();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); sink.n_cells()];
            for (i, scores) in rounded.iter().enumerate() {
                let cell = sink.index_of(&pipeline.sink_inputs_rounded(scores))?;
                groups[cell].push(i);
            }
            let cells: Vec<(usize, Vec<f64>, Vec<f64>)> = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.is_empty())
                .map(|(c, g)| {
                    let (b, r) = aggregate(table, g, levels);
                    (c, b, r)
                })
                .collect();
            let objective = |ts: &[DecisionTable]| -> f64 {
                let t = ts[0].cells();
                cells.iter().map(|(c, b, _)| b[t[*c] as usize - 1]).sum()
            };
            let constraint = |ts: &[DecisionTable]| -> bool {
                let t = ts[0].cells();
                cells.iter().map(|(c, _, r)| r[t[*c] as usize - 1]).sum::<f64>() <= cap
            };
            let outcome = short_burst(objective, constraint, &[sink], config, seed)?;
            let key = pipeline.sink().table.clone();
            (pipeline, vec![key], outcome)
        }
        TableScope::AllTables => {
            let keys: Vec<String> = template.tables().keys().cloned().collect();
            let initial: Vec<DecisionTable> = template.tables().values().cloned().collect();
            let mut groups: BTreeMap<&[u8], Vec<usize>> = BTreeMap::new();
            for (i, scores) in rounded.iter().enumerate() {
                groups.entry(scores.as_slice()).or_default().push(i);
            }
            let rows: Vec<(&[u8], Vec<f64>, Vec<f64>)> = groups
                .iter()
                .map(|(s, g)| {
                    let (b, r) = aggregate(table, g, levels);
                    (*s, b, r)
                })
                .collect();
            let objective = |ts: &[DecisionTable]| -> f64 {
                rows.iter()
                    .map(|(s, b, _)| b[template.evaluate_with(ts, s) as usize - 1])
                    .sum()
            };
            let constraint = |ts: &[DecisionTable]| -> bool {
                rows.iter()
                    .map(|(s, _, r)| r[template.evaluate_with(ts, s) as usize - 1])
                    .sum::<f64>()
                    <= cap
            };
            let outcome = short_burst(objective, constraint, &initial, config, seed)?;
            (template.clone(), keys, outcome)
        }
    };

    let mut learned = pipeline;
    for (key, t) in learned_keys.iter().zip(&outcome.tables) {
        learned.set_table(key, t.clone())?;
    }
    let policy = Policy::TablePipeline { pipeline: learned };
    let decisions = table.decisions_of(&policy)?;
    let gain = table.value_of(&decisions)?;
    let risk = table.risk_of(&decisions)?;
    Ok(OptimizationResult {
        policy,
        posterior_value_gain: gain,
        pacrisk: risk,
        epsilon,
        feasible: risk <= epsilon + RISK_TOL,
        certified: false,
        gap_bound: None,
        diagnostics: Diagnostics {
            evaluations: outcome.evaluations,
            ..Diagnostics::default()
        },
    })
}
