//! Partial dependence of pipeline outputs on single inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HesPipeline;
use crate::error::{Error, Result};

/// Importances normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledImportance {
    pub values: Vec<f64>,
    /// All raw importances were zero; `values` is uniform.
    pub degenerate: bool,
}

fn check_rows(pipeline: &HesPipeline, data: &[Vec<u8>], axis: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("partial dependence needs at least one row"));
    }
    let arity = pipeline.sink_table().arity();
    if axis >= arity {
        return Err(Error::invalid(format!("sink table has no axis {}", axis + 1)));
    }
    if let Some(bad) = data.iter().find(|r| r.len() != arity) {
        return Err(Error::DimensionMismatch {
            expected: arity,
            got: bad.len(),
        });
    }
    let levels = pipeline.score_levels();
    if data.iter().flatten().any(|&s| s < 1 || s > levels) {
        return Err(Error::validation(format!("scores must lie in 1..{levels}")));
    }
    Ok(())
}

/// Mean sink-table output with input `axis` (0-based) pinned to `v` and the
/// other inputs taken from each row of `data` (rows of sink-input scores).
pub fn pd_function(pipeline: &HesPipeline, data: &[Vec<u8>], axis: usize, v: u8) -> Result<f64> {
    check_rows(pipeline, data, axis)?;
    if v < 1 || v > pipeline.score_levels() {
        return Err(Error::invalid(format!("pinned value {v} out of range")));
    }
    let table = pipeline.sink_table();
    let mut row = Vec::with_capacity(table.arity());
    let mut total = 0.0;
    for r in data {
        row.clear();
        row.extend_from_slice(r);
        row[axis] = v;
        total += table.get(&row)? as f64;
    }
    Ok(total / data.len() as f64)
}

/// PD values for `v = 1..=L`.
pub fn pd_curve(pipeline: &HesPipeline, data: &[Vec<u8>], axis: usize) -> Result<Vec<f64>> {
    (1..=pipeline.score_levels())
        .into_par_iter()
        .map(|v| pd_function(pipeline, data, axis, v))
        .collect()
}

fn sample_sd(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid("importance needs at least two grid values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Sample standard deviation of the PD curve of one sink axis.
pub fn pd_importance(pipeline: &HesPipeline, data: &[Vec<u8>], axis: usize) -> Result<f64> {
    sample_sd(&pd_curve(pipeline, data, axis)?)
}

/// Divides by the group sum; a zero sum gives uniform weights and the
/// degenerate flag.
pub fn scale_importance(raw: &[f64]) -> ScaledImportance {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        ScaledImportance {
            values: raw.iter().map(|v| v / total).collect(),
            degenerate: false,
        }
    } else {
        let n = raw.len().max(1) as f64;
        ScaledImportance {
            values: vec![1.0 / n; raw.len()],
            degenerate: true,
        }
    }
}

/// Importances of all sink axes, scaled to sum to one.
pub fn scaled_pd_importance(pipeline: &HesPipeline, data: &[Vec<u8>]) -> Result<ScaledImportance> {
    let raw = (0..pipeline.sink_table().arity())
        .map(|axis| pd_importance(pipeline, data, axis))
        .collect::<Result<Vec<_>>>()?;
    Ok(scale_importance(&raw))
}

/// `(learned - baseline) / baseline` PD values, indexed `[axis][v - 1]`.
pub fn pd_relative_change(
    baseline: &HesPipeline,
    learned: &HesPipeline,
    data: &[Vec<u8>],
) -> Result<Vec<Vec<f64>>> {
    if baseline.sink_table().arity() != learned.sink_table().arity()
        || baseline.score_levels() != learned.score_levels()
    {
        return Err(Error::validation("pipelines have different sink shapes"));
    }
    (0..baseline.sink_table().arity())
        .map(|axis| {
            let base = pd_curve(baseline, data, axis)?;
            let new = pd_curve(learned, data, axis)?;
            Ok(base.iter().zip(&new).map(|(b, n)| (n - b) / b).collect())
        })
        .collect()
}

/// End-to-end PD of the security score on raw input `j` (0-based), pinned to
/// each integer grid value.
pub fn submodel_pd_curve(pipeline: &HesPipeline, raw: &[Vec<f64>], j: usize) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::invalid("partial dependence needs at least one row"));
    }
    if j >= pipeline.n_inputs() {
        return Err(Error::invalid(format!("no sub-model x{}", j + 1)));
    }
    let rounded = raw
        .iter()
        .map(|x| pipeline.round(x))
        .collect::<Result<Vec<_>>>()?;
    Ok((1..=pipeline.score_levels())
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::new();
            let total: f64 = rounded
                .iter()
                .map(|r| {
                    row.clone_from(r);
                    row[j] = v;
                    pipeline.evaluate_rounded(&row) as f64
                })
                .sum();
            total / rounded.len() as f64
        })
        .collect())
}

/// Dispersion of [`submodel_pd_curve`].
pub fn submodel_pd_importance(pipeline: &HesPipeline, raw: &[Vec<f64>], j: usize) -> Result<f64> {
    sample_sd(&submodel_pd_curve(pipeline, raw, j)?)
}
