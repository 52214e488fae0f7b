use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{latent_to_tau, Link};
use crate::dataset::UtilitySpec;
use crate::error::{Error, Result};
use crate::policy::Policy;

const MAGIC: &[u8; 4] = b"PDS1";

/// Posterior draws of `tau_k(x_i)` relative to a baseline policy.
///
/// Values are stored flat in `[unit][decision][draw]` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDrawSet {
    query: Vec<Vec<f64>>,
    baseline_policy: Policy,
    baseline_decisions: Vec<usize>,
    k: usize,
    n_draws: usize,
    tau: Vec<f64>,
    seed: u64,
}

/// Bare draw array without fit metadata, as read back from the binary format.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDraws {
    pub n_units: usize,
    pub k: usize,
    pub n_draws: usize,
    pub tau: Vec<f64>,
}

impl PosteriorDrawSet {
    /// Builds a draw set from `tau[i][k][m]` values, checking the baseline
    /// column is zero and every entry finite.
    pub fn from_tau(
        query: Vec<Vec<f64>>,
        baseline_policy: Policy,
        k: usize,
        tau: Vec<Vec<Vec<f64>>>,
        seed: u64,
    ) -> Result<Self> {
        if query.len() != tau.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                got: tau.len(),
            });
        }
        if query.is_empty() {
            return Err(Error::invalid("draw set needs at least one unit"));
        }
        let baseline_decisions = baseline_policy.decisions_on(&query)?;
        let n_draws = tau[0].first().map(Vec::len).unwrap_or(0);
        if n_draws == 0 {
            return Err(Error::invalid("draw set needs at least one draw"));
        }
        let mut flat = Vec::with_capacity(query.len() * k * n_draws);
        for (i, unit) in tau.iter().enumerate() {
            if unit.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: unit.len(),
                });
            }
            if baseline_decisions[i] >= k {
                return Err(Error::validation(format!(
                    "baseline decision {} at unit {i} outside 0..{}",
                    baseline_decisions[i],
                    k - 1
                )));
            }
            for (d, row) in unit.iter().enumerate() {
                if row.len() != n_draws {
                    return Err(Error::DimensionMismatch {
                        expected: n_draws,
                        got: row.len(),
                    });
                }
                for &v in row {
                    if !v.is_finite() {
                        return Err(Error::Numerical(format!("non-finite draw at unit {i}")));
                    }
                    if d == baseline_decisions[i] && v != 0.0 {
                        return Err(Error::validation(format!(
                            "baseline draws at unit {i} must be zero"
                        )));
                    }
                }
                flat.extend_from_slice(row);
            }
        }
        Ok(PosteriorDrawSet {
            query,
            baseline_policy,
            baseline_decisions,
            k,
            n_draws,
            tau: flat,
            seed,
        })
    }

    /// `latent[m][i][k]` holds `f_k(x_i)` for draw `m`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_latent(
        query: Vec<Vec<f64>>,
        baseline_policy: Policy,
        baseline_decisions: Vec<usize>,
        k: usize,
        latent: &[Vec<Vec<f64>>],
        link: Link,
        utility: &UtilitySpec,
        seed: u64,
    ) -> Result<Self> {
        let n = query.len();
        let m_total = latent.len();
        let mut tau = vec![0.0; n * k * m_total];
        let mut buf = vec![0.0; k];
        for (m, draw) in latent.iter().enumerate() {
            for (i, f) in draw.iter().enumerate() {
                latent_to_tau(f, baseline_decisions[i], link, utility, &mut buf);
                for (d, &v) in buf.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Numerical(format!(
                            "non-finite effect at unit {i}, draw {m}"
                        )));
                    }
                    tau[(i * k + d) * m_total + m] = v;
                }
            }
        }
        Ok(PosteriorDrawSet {
            query,
            baseline_policy,
            baseline_decisions,
            k,
            n_draws: m_total,
            tau,
            seed,
        })
    }

    pub fn n_units(&self) -> usize {
        self.query.len()
    }

    pub fn k_decisions(&self) -> usize {
        self.k
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn query(&self) -> &[Vec<f64>] {
        &self.query
    }

    pub fn baseline_policy(&self) -> &Policy {
        &self.baseline_policy
    }

    pub fn baseline_decisions(&self) -> &[usize] {
        &self.baseline_decisions
    }

    #[inline]
    pub fn tau(&self, unit: usize, decision: usize, draw: usize) -> f64 {
        self.tau[(unit * self.k + decision) * self.n_draws + draw]
    }

    /// All draws for one `(unit, decision)` pair.
    #[inline]
    pub fn draws(&self, unit: usize, decision: usize) -> &[f64] {
        let start = (unit * self.k + decision) * self.n_draws;
        &self.tau[start..start + self.n_draws]
    }

    /// Long format `unit,decision,draw,tau`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["unit", "decision", "draw", "tau"])?;
        for i in 0..self.n_units() {
            for d in 0..self.k {
                for (m, v) in self.draws(i, d).iter().enumerate() {
                    w.write_record([
                        i.to_string(),
                        d.to_string(),
                        m.to_string(),
                        format!("{v:?}"),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Compact little-endian dump: magic, three `u64` dimensions, then values.
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        for dim in [self.n_units(), self.k, self.n_draws] {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for v in &self.tau {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

impl RawDraws {
    pub fn read_binary(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::validation("not a posterior draw file"));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        let [n_units, k, n_draws] = dims;
        let len = n_units
            .checked_mul(k)
            .and_then(|v| v.checked_mul(n_draws))
            .ok_or_else(|| Error::validation("draw file dimensions overflow"))?;
        let mut tau = Vec::with_capacity(len);
        let mut b = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut b)?;
            tau.push(f64::from_le_bytes(b));
        }
        Ok(RawDraws {
            n_units,
            k,
            n_draws,
            tau,
        })
    }
}
