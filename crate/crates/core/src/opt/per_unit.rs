use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_epsilon, Diagnostics, OptimizationResult, RISK_TOL};
use crate::error::Result;
use crate::policy::Policy;
use crate::risk::BenefitRiskTable;

/// Values closer than this are treated as equal when choosing between options.
const VALUE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerUnitConfig {
    /// Node budget for the exact search that runs when the Lagrangian
    /// solution cannot be certified.
    pub node_limit: u64,
}

impl Default for PerUnitConfig {
    fn default() -> Self {
        PerUnitConfig {
            node_limit: 5_000_000,
        }
    }
}

/// Best unrestricted assignment with `PACRisk <= epsilon`.
pub fn solve_per_unit(table: &BenefitRiskTable, epsilon: f64) -> Result<OptimizationResult> {
    solve_per_unit_with(table, epsilon, &PerUnitConfig::default())
}

struct Problem {
    /// `w_i b[i][k]`
    value: Vec<Vec<f64>>,
    /// `w_i r[i][k]`
    cost: Vec<Vec<f64>>,
    baseline: Vec<usize>,
    cap: f64,
}

impl Problem {
    fn total(&self, x: &[usize]) -> (f64, f64) {
        x.iter().enumerate().fold((0.0, 0.0), |(v, c), (i, &k)| {
            (v + self.value[i][k], c + self.cost[i][k])
        })
    }

    /// Preference between two options of unit `i` at price `lambda`: higher
    /// penalized value, then lower cost, then the baseline, then lower index.
    fn prefer(&self, i: usize, lambda: f64, a: usize, b: usize) -> Ordering {
        let sa = self.value[i][a] - lambda * self.cost[i][a];
        let sb = self.value[i][b] - lambda * self.cost[i][b];
        if (sa - sb).abs() > VALUE_TOL {
            return sa.partial_cmp(&sb).unwrap_or(Ordering::Equal);
        }
        self.cost[i][b]
            .partial_cmp(&self.cost[i][a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| (a == self.baseline[i]).cmp(&(b == self.baseline[i])))
            .then_with(|| b.cmp(&a))
    }

    fn relaxed(&self, lambda: f64) -> Vec<usize> {
        (0..self.value.len())
            .map(|i| {
                (0..self.value[i].len())
                    .max_by(|&a, &b| self.prefer(i, lambda, a, b))
                    .expect("at least one decision")
            })
            .collect()
    }

    /// Lagrangian dual bound at `lambda`.
    fn dual(&self, lambda: f64) -> f64 {
        lambda * self.cap
            + self
                .value
                .iter()
                .zip(&self.cost)
                .map(|(v, c)| {
                    v.iter()
                        .zip(c)
                        .map(|(v, c)| v - lambda * c)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum::<f64>()
    }

    fn changes(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.baseline).filter(|(a, b)| a != b).count()
    }
}

/// Like [`solve_per_unit`] with an explicit search budget.
pub fn solve_per_unit_with(
    table: &BenefitRiskTable,
    epsilon: f64,
    config: &PerUnitConfig,
) -> Result<OptimizationResult> {
    check_epsilon(epsilon)?;
    let n = table.n_units();
    let k = table.k_decisions();
    let problem = Problem {
        value: (0..n)
            .map(|i| table.b[i].iter().map(|b| table.weights[i] * b).collect())
            .collect(),
        cost: (0..n)
            .map(|i| table.r[i].iter().map(|r| table.weights[i] * r).collect())
            .collect(),
        baseline: table.baseline.clone(),
        cap: epsilon + RISK_TOL,
    };
    let mut diag = Diagnostics::default();

    let mut x = problem.relaxed(0.0);
    diag.multipliers += 1;
    let (_, c0) = problem.total(&x);
    let (mut certified, mut gap, lambda) = if c0 <= problem.cap {
        (true, 0.0, 0.0)
    } else {
        let mut breakpoints = Vec::new();
        for i in 0..n {
            for a in 0..k {
                for b in 0..k {
                    let dc = problem.cost[i][a] - problem.cost[i][b];
                    let dv = problem.value[i][a] - problem.value[i][b];
                    if dc > 0.0 && dv > 0.0 {
                        breakpoints.push(dv / dc);
                    }
                }
            }
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        breakpoints.dedup();
        // Smallest breakpoint whose relaxed solution fits the budget; cost
        // is nonincreasing in the price.
        let (mut lo, mut hi) = (0usize, breakpoints.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            diag.multipliers += 1;
            if problem.total(&problem.relaxed(breakpoints[mid])).1 <= problem.cap {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let lambda = breakpoints
            .get(lo)
            .copied()
            .unwrap_or_else(|| breakpoints.last().map_or(1.0, |l| 2.0 * l + 1.0));
        x = problem.relaxed(lambda);
        if problem.total(&x).1 > problem.cap {
            // only reachable through rounding; restart from the baseline
            x = problem.baseline.clone();
        }
        greedy_repair(&problem, &mut x);
        let (v, _) = problem.total(&x);
        let gap = (problem.dual(lambda) - v).max(0.0);
        (gap <= VALUE_TOL, gap, lambda)
    };

    if !certified {
        let (exact, nodes, complete) = branch_and_bound(&problem, &x, lambda, config.node_limit);
        diag.nodes = nodes;
        x = exact;
        let (v, _) = problem.total(&x);
        if complete {
            certified = true;
            gap = 0.0;
        } else {
            gap = (problem.dual(lambda) - v).max(0.0);
        }
    }
    if certified {
        gap = 0.0;
    }

    let decisions = x;
    let gain = table.value_of(&decisions)?;
    let risk = table.risk_of(&decisions)?;
    Ok(OptimizationResult {
        policy: Policy::PerUnitAssignment {
            support: table.support.clone(),
            decisions,
        },
        posterior_value_gain: gain,
        pacrisk: risk,
        epsilon,
        feasible: risk <= epsilon + RISK_TOL,
        certified,
        gap_bound: Some(gap),
        diagnostics: diag,
    })
}

/// Repeatedly applies the single-unit switch with the largest value gain that
/// still fits the budget.
fn greedy_repair(problem: &Problem, x: &mut [usize]) {
    let (_, mut used) = problem.total(x);
    loop {
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for (i, &cur) in x.iter().enumerate() {
            for k in 0..problem.value[i].len() {
                let dv = problem.value[i][k] - problem.value[i][cur];
                let dc = problem.cost[i][k] - problem.cost[i][cur];
                if dv <= VALUE_TOL || used + dc > problem.cap {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, bv, bc)) => dv > bv + VALUE_TOL || ((dv - bv).abs() <= VALUE_TOL && dc < bc),
                };
                if better {
                    best = Some((i, k, dv, dc));
                }
            }
        }
        match best {
            Some((i, k, _, dc)) => {
                x[i] = k;
                used += dc;
            }
            None => break,
        }
    }
}

struct Search<'a> {
    problem: &'a Problem,
    /// Options of each unit, highest value first.
    options: Vec<Vec<usize>>,
    suffix_max: Vec<f64>,
    suffix_dual: Vec<f64>,
    lambda: f64,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
    best_changes: usize,
    nodes: u64,
    limit: u64,
}

impl Search<'_> {
    fn visit(&mut self, i: usize, value: f64, room: f64) -> bool {
        self.nodes += 1;
        if self.nodes > self.limit {
            return false;
        }
        let n = self.problem.value.len();
        if i == n {
            let changes = self.problem.changes(&self.current);
            if value > self.best_value + VALUE_TOL
                || ((value - self.best_value).abs() <= VALUE_TOL && changes < self.best_changes)
            {
                self.best_value = value;
                self.best_changes = changes;
                self.best.clone_from(&self.current);
            }
            return true;
        }
        let bound = value
            + self.suffix_max[i].min(self.suffix_dual[i] + self.lambda * room.max(0.0));
        if bound < self.best_value - VALUE_TOL {
            return true;
        }
        if bound <= self.best_value + VALUE_TOL && self.current[..i]
            .iter()
            .zip(&self.problem.baseline)
            .filter(|(a, b)| a != b)
            .count()
            >= self.best_changes
        {
            return true;
        }
        for idx in 0..self.options[i].len() {
            let k = self.options[i][idx];
            let c = self.problem.cost[i][k];
            if c > room {
                continue;
            }
            self.current[i] = k;
            if !self.visit(i + 1, value + self.problem.value[i][k], room - c) {
                return false;
            }
        }
        true
    }
}

/// Exact depth-first search seeded with `incumbent`. Returns the best
/// assignment, nodes expanded, and whether the search finished.
fn branch_and_bound(
    problem: &Problem,
    incumbent: &[usize],
    lambda: f64,
    limit: u64,
) -> (Vec<usize>, u64, bool) {
    let n = problem.value.len();
    let options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut o: Vec<usize> = (0..problem.value[i].len()).collect();
            o.sort_by(|&a, &b| problem.prefer(i, 0.0, b, a));
            o
        })
        .collect();
    let mut suffix_max = vec![0.0; n + 1];
    let mut suffix_dual = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let vmax = problem.value[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dmax = problem.value[i]
            .iter()
            .zip(&problem.cost[i])
            .map(|(v, c)| v - lambda * c)
            .fold(f64::NEG_INFINITY, f64::max);
        suffix_max[i] = suffix_max[i + 1] + vmax;
        suffix_dual[i] = suffix_dual[i + 1] + dmax;
    }
    let (v0, _) = problem.total(incumbent);
    let mut search = Search {
        problem,
        options,
        suffix_max,
        suffix_dual,
        lambda,
        current: vec![0; n],
        best: incumbent.to_vec(),
        best_value: v0,
        best_changes: problem.changes(incumbent),
        nodes: 0,
        limit,
    };
    let complete = search.visit(0, 0.0, problem.cap);
    (search.best, search.nodes, complete)
}
