//! Exhaustive search over labelings of the support induced by
//! `I(a x1 + b x2 + c > 0)`.
//!
//! Every labeling a line can induce on a finite planar point set is also
//! induced by a small perturbation of a line through two of the points, so
//! it suffices to score, for each pair, both orientations and every
//! consistent way of labeling the points lying on the line. Axis-aligned
//! cuts and the two constant policies are scored as well.

use super::{check_epsilon, Diagnostics, OptimizationResult, RISK_TOL};
use crate::error::{Error, Result};
use crate::policy::{apply_policy, Policy};
use crate::risk::BenefitRiskTable;

const VALUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Recipe {
    Constant(usize),
    Axis {
        axis: usize,
        threshold: f64,
        above: bool,
    },
    Pair {
        i: usize,
        j: usize,
        sigma: f64,
        /// On-line points (sorted along the line) in the low group.
        split: usize,
        low: usize,
        high: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    value: f64,
    risk: f64,
    changes: usize,
    recipe: Recipe,
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    value: [f64; 2],
    risk: [f64; 2],
    changes: [usize; 2],
}

impl Acc {
    fn add(&mut self, t: &BenefitRiskTable, u: usize) {
        for l in 0..2 {
            self.value[l] += t.weights[u] * t.b[u][l];
            self.risk[l] += t.weights[u] * t.r[u][l];
            self.changes[l] += usize::from(t.baseline[u] != l);
        }
    }
}

/// Scored candidate policies for one benefit/risk table.
pub struct LinearCandidates<'a> {
    table: &'a BenefitRiskTable,
    excluded: Vec<Recipe>,
}

impl<'a> LinearCandidates<'a> {
    pub fn new(table: &'a BenefitRiskTable) -> Result<Self> {
        if table.k_decisions() != 2 {
            return Err(Error::invalid(format!(
                "linear threshold policies need 2 decisions, got {}",
                table.k_decisions()
            )));
        }
        if let Some(bad) = table.support.iter().find(|x| x.len() != 2) {
            return Err(Error::invalid(format!(
                "linear threshold policies need 2 covariates, got {}",
                bad.len()
            )));
        }
        Ok(LinearCandidates {
            table,
            excluded: Vec::new(),
        })
    }

    /// Best candidate for every budget (`None` means unconstrained).
    fn scan(&self, budgets: &[Option<f64>]) -> (Vec<Option<Scored>>, u64) {
        let t = self.table;
        let n = t.n_units();
        let mut best: Vec<Option<Scored>> = vec![None; budgets.len()];
        let mut count = 0u64;
        let mut offer = |cand: Scored| {
            count += 1;
            if self.excluded.contains(&cand.recipe) {
                return;
            }
            for (slot, budget) in best.iter_mut().zip(budgets) {
                if let Some(eps) = budget {
                    if cand.risk > eps + RISK_TOL {
                        continue;
                    }
                }
                let better = match slot {
                    None => true,
                    Some(b) => {
                        cand.value > b.value + VALUE_TOL
                            || ((cand.value - b.value).abs() <= VALUE_TOL && cand.changes < b.changes)
                    }
                };
                if better {
                    *slot = Some(cand);
                }
            }
        };

        let mut all = Acc::default();
        for u in 0..n {
            all.add(t, u);
        }
        for l in 0..2 {
            offer(Scored {
                value: all.value[l],
                risk: all.risk[l],
                changes: all.changes[l],
                recipe: Recipe::Constant(l),
            });
        }

        for axis in 0..2 {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| t.support[a][axis].total_cmp(&t.support[b][axis]));
            let mut below = Acc::default();
            for q in 0..n.saturating_sub(1) {
                below.add(t, idx[q]);
                let lo = t.support[idx[q]][axis];
                let hi = t.support[idx[q + 1]][axis];
                if lo == hi {
                    continue;
                }
                let threshold = lo + (hi - lo) / 2.0;
                for above in [true, false] {
                    // label 1 above the cut when `above`
                    let (l_below, l_above) = if above { (0, 1) } else { (1, 0) };
                    offer(Scored {
                        value: below.value[l_below] + all.value[l_above] - below.value[l_above],
                        risk: below.risk[l_below] + all.risk[l_above] - below.risk[l_above],
                        changes: below.changes[l_below] + all.changes[l_above]
                            - below.changes[l_above],
                        recipe: Recipe::Axis {
                            axis,
                            threshold,
                            above,
                        },
                    });
                }
            }
        }

        let mut online: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (pi, pj) = (&t.support[i], &t.support[j]);
                let d = [pj[0] - pi[0], pj[1] - pi[1]];
                if d == [0.0, 0.0] {
                    continue;
                }
                let mut pos = Acc::default();
                let mut neg = Acc::default();
                online.clear();
                for (u, x) in t.support.iter().enumerate() {
                    let s = cross(&d, pi, x);
                    if s > 0.0 {
                        pos.add(t, u);
                    } else if s < 0.0 {
                        neg.add(t, u);
                    } else {
                        online.push((dot(&d, pi, x), u));
                    }
                }
                online.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut prefix = vec![Acc::default(); online.len() + 1];
                for (q, &(_, u)) in online.iter().enumerate() {
                    prefix[q + 1] = prefix[q];
                    prefix[q + 1].add(t, u);
                }
                let total = prefix[online.len()];
                for sigma in [1.0, -1.0] {
                    let (l_pos, l_neg) = if sigma > 0.0 { (1, 0) } else { (0, 1) };
                    let base_v = pos.value[l_pos] + neg.value[l_neg];
                    let base_r = pos.risk[l_pos] + neg.risk[l_neg];
                    let base_c = pos.changes[l_pos] + neg.changes[l_neg];
                    for split in 0..=online.len() {
                        if split > 0 && split < online.len() && online[split - 1].0 == online[split].0 {
                            continue;
                        }
                        for (low, high) in [(0, 1), (1, 0)] {
                            let lo = prefix[split];
                            offer(Scored {
                                value: base_v + lo.value[low] + total.value[high] - lo.value[high],
                                risk: base_r + lo.risk[low] + total.risk[high] - lo.risk[high],
                                changes: base_c + lo.changes[low] + total.changes[high]
                                    - lo.changes[high],
                                recipe: Recipe::Pair {
                                    i,
                                    j,
                                    sigma,
                                    split,
                                    low,
                                    high,
                                },
                            });
                        }
                    }
                }
            }
        }
        (best, count)
    }

    /// Coefficients `(a, b, c)` realizing a recipe.
    fn coefficients(&self, recipe: Recipe) -> (f64, f64, f64) {
        let t = self.table;
        match recipe {
            Recipe::Constant(0) => (0.0, 0.0, -1.0),
            Recipe::Constant(_) => (0.0, 0.0, 1.0),
            Recipe::Axis {
                axis,
                threshold,
                above,
            } => {
                let sign = if above { 1.0 } else { -1.0 };
                let (a, b) = if axis == 0 { (sign, 0.0) } else { (0.0, sign) };
                (a, b, -sign * threshold)
            }
            Recipe::Pair {
                i,
                j,
                sigma,
                split,
                low,
                high,
            } => {
                let (pi, pj) = (&t.support[i], &t.support[j]);
                let d = [pj[0] - pi[0], pj[1] - pi[1]];
                let mut min_off = f64::INFINITY;
                let mut ts: Vec<f64> = Vec::new();
                for x in &t.support {
                    let s = cross(&d, pi, x);
                    if s == 0.0 {
                        ts.push(dot(&d, pi, x));
                    } else {
                        min_off = min_off.min(s.abs());
                    }
                }
                if !min_off.is_finite() {
                    min_off = 1.0;
                }
                ts.sort_by(f64::total_cmp);
                // s(x) = nx x1 + ny x2 + s0 with n = (-d1, d0)
                let (nx, ny) = (-d[1], d[0]);
                let s0 = -(nx * pi[0] + ny * pi[1]);
                let t0 = -(d[0] * pi[0] + d[1] * pi[1]);
                let (kappa, tilt, t_split) = if split == 0 || split == ts.len() || low == high {
                    let label = if split == 0 { high } else { low };
                    (if label == 1 { 1.0 } else { -1.0 }, false, 0.0)
                } else {
                    let k = if high == 1 { 1.0 } else { -1.0 };
                    (k, true, ts[split - 1] + (ts[split] - ts[split - 1]) / 2.0)
                };
                let g_max = if tilt {
                    t.support
                        .iter()
                        .map(|x| (dot(&d, pi, x) - t_split).abs())
                        .fold(0.0, f64::max)
                        .max(f64::MIN_POSITIVE)
                } else {
                    1.0
                };
                let eta = 0.5 * min_off / g_max;
                if tilt {
                    (
                        sigma * nx + eta * kappa * d[0],
                        sigma * ny + eta * kappa * d[1],
                        sigma * s0 + eta * kappa * (t0 - t_split),
                    )
                } else {
                    (sigma * nx, sigma * ny, sigma * s0 + eta * kappa)
                }
            }
        }
    }

    /// Best feasible policy for each budget. `None` solves without the risk
    /// constraint.
    pub fn solve(&mut self, budgets: &[Option<f64>]) -> Result<Vec<OptimizationResult>> {
        for eps in budgets.iter().flatten() {
            check_epsilon(*eps)?;
        }
        let t = self.table;
        let mut out: Vec<Option<OptimizationResult>> = vec![None; budgets.len()];
        let mut scanned = 0;
        loop {
            let (best, count) = self.scan(budgets);
            scanned += count;
            let mut redo = false;
            for (slot, (cand, budget)) in out.iter_mut().zip(best.iter().zip(budgets)) {
                if slot.is_some() {
                    continue;
                }
                let cand = cand.expect("constant policies always score");
                let (a, b, c) = self.coefficients(cand.recipe);
                let policy = Policy::LinearThreshold { a, b, c };
                let labels = t
                    .support
                    .iter()
                    .map(|x| apply_policy(&policy, x))
                    .collect::<Result<Vec<_>>>()?;
                let gain = t.value_of(&labels)?;
                let risk = t.risk_of(&labels)?;
                let changes = labels.iter().zip(&t.baseline).filter(|(a, b)| a != b).count();
                if (gain - cand.value).abs() > 1e-9 || (risk - cand.risk).abs() > 1e-9 || changes != cand.changes {
                    // numerically degenerate geometry; drop it and rescan
                    self.excluded.push(cand.recipe);
                    redo = true;
                    continue;
                }
                let epsilon = budget.unwrap_or(1.0);
                *slot = Some(OptimizationResult {
                    policy,
                    posterior_value_gain: gain,
                    pacrisk: risk,
                    epsilon,
                    feasible: risk <= epsilon + RISK_TOL,
                    certified: true,
                    gap_bound: Some(0.0),
                    diagnostics: Diagnostics {
                        candidates: count,
                        ..Diagnostics::default()
                    },
                });
            }
            if !redo {
                break;
            }
        }
        Ok(out
            .into_iter()
            .map(|r| {
                let mut r = r.expect("filled");
                r.diagnostics.candidates = scanned;
                r
            })
            .collect())
    }
}

#[inline]
fn cross(d: &[f64; 2], p: &[f64], x: &[f64]) -> f64 {
    -d[1] * (x[0] - p[0]) + d[0] * (x[1] - p[1])
}

#[inline]
fn dot(d: &[f64; 2], p: &[f64], x: &[f64]) -> f64 {
    d[0] * (x[0] - p[0]) + d[1] * (x[1] - p[1])
}

/// Best linear threshold policy with `PACRisk <= epsilon`.
pub fn solve_linear(table: &BenefitRiskTable, epsilon: f64) -> Result<OptimizationResult> {
    let mut c = LinearCandidates::new(table)?;
    Ok(c.solve(&[Some(epsilon)])?.remove(0))
}

/// [`solve_linear`] for several budgets sharing one candidate scan.
pub fn solve_linear_grid(table: &BenefitRiskTable, epsilons: &[f64]) -> Result<Vec<OptimizationResult>> {
    let budgets: Vec<Option<f64>> = epsilons.iter().map(|&e| Some(e)).collect();
    LinearCandidates::new(table)?.solve(&budgets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EmpiricalCovariateDistribution;

    fn table(points: Vec<Vec<f64>>, b1: Vec<f64>, r1: Vec<f64>) -> BenefitRiskTable {
        let n = points.len();
        let dist = EmpiricalCovariateDistribution::uniform(points).unwrap();
        BenefitRiskTable::new(
            b1.iter().map(|&b| vec![0.0, b]).collect(),
            r1.iter().map(|&r| vec![0.0, r]).collect(),
            &dist,
            vec![0; n],
        )
        .unwrap()
    }

    #[test]
    fn nothing_to_gain_returns_baseline() {
        let t = table(
            vec![vec![0.1, 0.2], vec![-0.5, 0.3], vec![0.7, -0.7]],
            vec![0.0; 3],
            vec![0.2; 3],
        );
        let res = solve_linear(&t, 1.0).unwrap();
        assert_eq!(res.posterior_value_gain, 0.0);
        assert_eq!(t.decisions_of(&res.policy).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn zero_budget_returns_baseline() {
        let t = table(
            vec![vec![0.1, 0.2], vec![-0.5, 0.3], vec![0.7, -0.7]],
            vec![1.0, 2.0, 3.0],
            vec![0.2, 0.1, 0.4],
        );
        let res = solve_linear(&t, 0.0).unwrap();
        assert_eq!(t.decisions_of(&res.policy).unwrap(), vec![0, 0, 0]);
        let res = solve_linear(&t, 1.0).unwrap();
        assert_eq!(t.decisions_of(&res.policy).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn middle_point_alone_needs_no_line() {
        // the middle of three collinear points cannot be separated alone
        let t = table(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![-1.0, 5.0, -1.0],
            vec![1.0, 0.0, 1.0],
        );
        let res = solve_linear(&t, 1.0).unwrap();
        let labels = t.decisions_of(&res.policy).unwrap();
        assert_ne!(labels, vec![0, 1, 0]);
        assert!((res.posterior_value_gain - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_shapes() {
        let dist = EmpiricalCovariateDistribution::uniform(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let t = BenefitRiskTable::new(vec![vec![0.0, 1.0]], vec![vec![0.0, 0.0]], &dist, vec![0]).unwrap();
        assert!(solve_linear(&t, 0.5).is_err());
    }
}
