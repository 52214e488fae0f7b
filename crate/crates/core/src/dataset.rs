//! Observational datasets, covariate distributions and utility functions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// One observed record `(X_i, D_i, Y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub covariates: Vec<f64>,
    pub decision: usize,
    pub outcome: f64,
}

/// A validated sample with decisions in `0..k_decisions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    units: Vec<Unit>,
    k_decisions: usize,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    pub fn new(units: Vec<Unit>, k_decisions: usize, outcome_kind: OutcomeKind) -> Result<Self> {
        if k_decisions < 2 {
            return Err(Error::validation(format!(
                "need at least 2 decisions, got {k_decisions}"
            )));
        }
        let p = units.first().map(|u| u.covariates.len()).unwrap_or(0);
        for (row, unit) in units.iter().enumerate() {
            if unit.covariates.len() != p {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "expected {p} covariates, found {}",
                        unit.covariates.len()
                    ),
                });
            }
            if unit.decision >= k_decisions {
                return Err(Error::validation(format!(
                    "row {row}: decision {} outside 0..{}",
                    unit.decision,
                    k_decisions - 1
                )));
            }
            if unit.covariates.iter().any(|v| !v.is_finite()) || !unit.outcome.is_finite() {
                return Err(Error::validation(format!("row {row}: non-finite value")));
            }
            if outcome_kind == OutcomeKind::Binary && unit.outcome != 0.0 && unit.outcome != 1.0 {
                return Err(Error::validation(format!(
                    "row {row}: binary outcome must be 0 or 1, found {}",
                    unit.outcome
                )));
            }
        }
        Ok(Dataset {
            units,
            k_decisions,
            outcome_kind,
        })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn k_decisions(&self) -> usize {
        self.k_decisions
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    /// Number of covariates (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.units.first().map(|u| u.covariates.len()).unwrap_or(0)
    }

    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.units.iter().map(|u| u.covariates.clone()).collect()
    }

    /// Writes the dataset as CSV using the column names of `schema`.
    pub fn write_csv(&self, path: &Path, schema: &ColumnSchema) -> Result<()> {
        if schema.covariates.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: schema.covariates.len(),
            });
        }
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = schema.covariates.iter().map(String::as_str).collect();
        header.push(&schema.decision);
        header.push(&schema.outcome);
        writer.write_record(&header)?;
        for unit in &self.units {
            let mut record: Vec<String> = unit.covariates.iter().map(|v| fmt_f64(*v)).collect();
            record.push(unit.decision.to_string());
            record.push(fmt_f64(unit.outcome));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub covariates: Vec<String>,
    pub decision: String,
    pub outcome: String,
    pub k_decisions: usize,
    pub outcome_kind: OutcomeKind,
}

/// Reads a headed CSV file. Row indices in errors are 0-based data rows.
pub fn load_dataset(path: &Path, schema: &ColumnSchema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::validation(format!("column '{name}' not found in header")))
    };
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let d_idx = column(&schema.decision)?;
    let y_idx = column(&schema.outcome)?;

    let mut units = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).map(str::trim).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing field {idx}"),
            })
        };
        let real = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("'{raw}' is not a number"),
            })
        };
        let covariates = cov_idx.iter().map(|&i| real(i)).collect::<Result<Vec<_>>>()?;
        let raw_d = field(d_idx)?;
        let decision = raw_d.parse::<i64>().map_err(|_| Error::Parse {
            row,
            message: format!("decision '{raw_d}' is not an integer"),
        })?;
        if decision < 0 {
            return Err(Error::validation(format!(
                "row {row}: decision {decision} outside 0..{}",
                schema.k_decisions.saturating_sub(1)
            )));
        }
        units.push(Unit {
            covariates,
            decision: decision as usize,
            outcome: real(y_idx)?,
        });
    }
    Dataset::new(units, schema.k_decisions, schema.outcome_kind)
}

/// Discrete covariate distribution used in place of the population CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariateDistribution {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalCovariateDistribution {
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::validation("empty covariate support"));
        }
        Ok(EmpiricalCovariateDistribution {
            support,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weighted(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::validation("empty covariate support"));
        }
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("weights sum to {total}, not 1")));
        }
        Ok(EmpiricalCovariateDistribution { support, weights })
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Utility `u(d, y)`.
///
/// `CustomTable` maps `(decision, outcome value)` pairs to utilities and is
/// only meaningful for binary outcomes, where the outcome support is `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UtilitySpec {
    #[default]
    OutcomeIdentity,
    CustomTable {
        /// `table[d] = [u(d, 0), u(d, 1)]`.
        table: Vec<[f64; 2]>,
    },
}

impl UtilitySpec {
    pub fn validate(&self, k_decisions: usize, kind: OutcomeKind) -> Result<()> {
        match self {
            UtilitySpec::OutcomeIdentity => Ok(()),
            UtilitySpec::CustomTable { table } => {
                if kind != OutcomeKind::Binary {
                    return Err(Error::validation(
                        "custom utility tables require a binary outcome",
                    ));
                }
                if table.len() != k_decisions {
                    return Err(Error::DimensionMismatch {
                        expected: k_decisions,
                        got: table.len(),
                    });
                }
                if table.iter().flatten().any(|u| !u.is_finite()) {
                    return Err(Error::validation("utility table has non-finite entries"));
                }
                Ok(())
            }
        }
    }

    /// `E[u(d, Y) | P(Y = 1) = p]` for a binary outcome.
    pub fn expected_binary(&self, decision: usize, p: f64) -> f64 {
        match self {
            UtilitySpec::OutcomeIdentity => p,
            UtilitySpec::CustomTable { table } => {
                let [u0, u1] = table[decision];
                u0 + p * (u1 - u0)
            }
        }
    }

    /// Utility of a continuous conditional mean (identity only).
    pub fn expected_continuous(&self, mean: f64) -> f64 {
        mean
    }

    /// Builds a table from `(decision, outcome) -> utility` entries.
    pub fn from_entries(k_decisions: usize, entries: &BTreeMap<(usize, u8), f64>) -> Result<Self> {
        let mut table = vec![[f64::NAN; 2]; k_decisions];
        for (&(d, y), &u) in entries {
            if d >= k_decisions || y > 1 {
                return Err(Error::validation(format!("utility entry ({d}, {y}) out of range")));
            }
            table[d][y as usize] = u;
        }
        if table.iter().flatten().any(|u| u.is_nan()) {
            return Err(Error::validation("utility table is missing entries"));
        }
        Ok(UtilitySpec::CustomTable { table })
    }
}
