use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OutcomeModel, Scenario, SweepCell};
use crate::error::Result;

/// One learned policy from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub cell: usize,
    pub replication: usize,
    /// Budget; 1.0 for unconstrained rows.
    pub epsilon: f64,
    pub unconstrained: bool,
    pub posterior_gain: f64,
    pub pacrisk: f64,
    pub true_value: f64,
    pub true_acrisk: f64,
    pub equals_baseline: bool,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub cell: usize,
    pub replication: usize,
    pub error: String,
}

/// Across-replication summary for one cell and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub epsilon: f64,
    pub unconstrained: bool,
    pub replications: usize,
    pub mean_value: f64,
    pub se_value: f64,
    pub mean_acrisk: f64,
    pub se_acrisk: f64,
    pub p90_acrisk: f64,
    pub share_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<ReplicationRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<FailureRow>,
}

/// Linear-interpolation quantile of an unsorted sample; NaN when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn cell_columns(cell: &SweepCell) -> [String; 6] {
    let (outcome, noise) = match cell.dgp.outcome {
        OutcomeModel::Continuous { sigma } => ("continuous", sigma),
        OutcomeModel::Binary { gamma } => ("binary", gamma),
    };
    let scenario = match cell.dgp.scenario {
        Scenario::Overlap => "I",
        Scenario::NoOverlap => "II",
    };
    [
        scenario.to_string(),
        outcome.to_string(),
        noise.to_string(),
        cell.dgp.n.to_string(),
        cell.estimator.kernel.length_scale.to_string(),
        cell.estimator.kernel.variance.to_string(),
    ]
}

const CELL_HEADER: [&str; 6] = ["scenario", "outcome", "noise", "n", "length_scale", "variance"];

impl ReplicationReport {
    pub fn new(cells: Vec<SweepCell>, mut rows: Vec<ReplicationRow>, failures: Vec<FailureRow>) -> Self {
        rows.sort_by(|x, y| {
            (x.cell, x.replication, x.unconstrained)
                .cmp(&(y.cell, y.replication, y.unconstrained))
                .then(x.epsilon.total_cmp(&y.epsilon))
        });
        let mut groups: BTreeMap<(usize, bool, u64), Vec<&ReplicationRow>> = BTreeMap::new();
        for r in &rows {
            groups
                .entry((r.cell, r.unconstrained, r.epsilon.to_bits()))
                .or_default()
                .push(r);
        }
        let mut aggregates: Vec<AggregateRow> = groups
            .into_iter()
            .map(|((cell, unconstrained, _), g)| {
                let values: Vec<f64> = g.iter().map(|r| r.true_value).collect();
                let risks: Vec<f64> = g.iter().map(|r| r.true_acrisk).collect();
                let (mean_value, se_value) = mean_se(&values);
                let (mean_acrisk, se_acrisk) = mean_se(&risks);
                AggregateRow {
                    cell,
                    epsilon: g[0].epsilon,
                    unconstrained,
                    replications: g.len(),
                    mean_value,
                    se_value,
                    mean_acrisk,
                    se_acrisk,
                    p90_acrisk: quantile(&risks, 0.9),
                    share_baseline: g.iter().filter(|r| r.equals_baseline).count() as f64
                        / g.len() as f64,
                }
            })
            .collect();
        aggregates.sort_by(|x, y| {
            (x.cell, x.unconstrained)
                .cmp(&(y.cell, y.unconstrained))
                .then(x.epsilon.total_cmp(&y.epsilon))
        });
        ReplicationReport {
            cells,
            rows,
            aggregates,
            failures,
        }
    }

    pub fn aggregate(&self, cell: usize, epsilon: Option<f64>) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| {
            a.cell == cell
                && match epsilon {
                    Some(e) => !a.unconstrained && a.epsilon == e,
                    None => a.unconstrained,
                }
        })
    }

    /// One row per replication and budget.
    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        self.write_filtered_rows(path, false)
    }

    /// One row per replication for the unconstrained maximizer.
    pub fn write_unconstrained_csv(&self, path: &Path) -> Result<()> {
        self.write_filtered_rows(path, true)
    }

    fn write_filtered_rows(&self, path: &Path, unconstrained: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cell"];
        header.extend(CELL_HEADER);
        header.extend([
            "replication",
            "epsilon",
            "unconstrained",
            "posterior_gain",
            "pacrisk",
            "true_value",
            "true_acrisk",
            "equals_baseline",
            "a",
            "b",
            "c",
        ]);
        w.write_record(&header)?;
        for r in self.rows.iter().filter(|r| r.unconstrained == unconstrained) {
            let mut rec = vec![r.cell.to_string()];
            rec.extend(cell_columns(&self.cells[r.cell]));
            rec.extend([
                r.replication.to_string(),
                r.epsilon.to_string(),
                r.unconstrained.to_string(),
                r.posterior_gain.to_string(),
                r.pacrisk.to_string(),
                r.true_value.to_string(),
                r.true_acrisk.to_string(),
                r.equals_baseline.to_string(),
                r.a.to_string(),
                r.b.to_string(),
                r.c.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregates_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cell"];
        header.extend(CELL_HEADER);
        header.extend([
            "epsilon",
            "unconstrained",
            "replications",
            "mean_value",
            "se_value",
            "mean_acrisk",
            "se_acrisk",
            "p90_acrisk",
            "share_baseline",
        ]);
        w.write_record(&header)?;
        for a in &self.aggregates {
            let mut rec = vec![a.cell.to_string()];
            rec.extend(cell_columns(&self.cells[a.cell]));
            rec.extend([
                a.epsilon.to_string(),
                a.unconstrained.to_string(),
                a.replications.to_string(),
                a.mean_value.to_string(),
                a.se_value.to_string(),
                a.mean_acrisk.to_string(),
                a.se_acrisk.to_string(),
                a.p90_acrisk.to_string(),
                a.share_baseline.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_failures_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell", "replication", "error"])?;
        for f in &self.failures {
            w.write_record([f.cell.to_string(), f.replication.to_string(), f.error.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format series for plotting: one file per measure, each row
    /// `(cell, series label, epsilon, y)`.
    pub fn write_plot_data(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        type Pick = fn(&AggregateRow) -> f64;
        let measures: [(&str, Pick); 3] = [
            ("value_by_epsilon.csv", |a| a.mean_value),
            ("acrisk_by_epsilon.csv", |a| a.mean_acrisk),
            ("acrisk_p90_by_epsilon.csv", |a| a.p90_acrisk),
        ];
        for (file, pick) in measures {
            let mut w = csv::Writer::from_path(dir.join(file))?;
            w.write_record(["cell", "series", "epsilon", "y"])?;
            for a in self.aggregates.iter().filter(|a| !a.unconstrained) {
                let c = cell_columns(&self.cells[a.cell]);
                let label = format!("{} {} {} n={} l={} s2={}", c[0], c[1], c[2], c[3], c[4], c[5]);
                w.write_record([a.cell.to_string(), label, a.epsilon.to_string(), pick(a).to_string()])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.9), 4.6);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
