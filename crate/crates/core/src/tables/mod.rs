//! Monotone decision tables and their optimization.
//!
//! A table maps every tuple of integer input scores to an output score. The
//! tuples form a grid poset; a monotone table is an acyclic partition of the
//! poset's covering DAG into ordered output classes. Such a partition is
//! obtained by cutting a linear extension of the DAG into consecutive
//! segments, which is what the sampler in [`chain`] walks over.

mod burst;
mod chain;
mod dag;
mod enumerate;
mod format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use burst::{short_burst, BurstConfig, BurstOutcome};
pub use chain::{boundary_step, decode, mixed_step, sort_chain_step, LinearExtensionState};
pub use dag::GridPosetDag;
pub use enumerate::{enumerate_monotone_tables, ENUMERATION_LIMIT};

/// Total map from `sizes[0] x ... x sizes[p-1]` input scores (each 1-based)
/// to an output score in `1..=outputs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct DecisionTable {
    sizes: Vec<usize>,
    outputs: u8,
    /// Row-major, last axis fastest.
    cells: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    sizes: Vec<usize>,
    outputs: u8,
    cells: Vec<u8>,
}

impl TryFrom<RawTable> for DecisionTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        DecisionTable::from_cells(raw.sizes, raw.outputs, raw.cells)
    }
}

impl From<DecisionTable> for RawTable {
    fn from(t: DecisionTable) -> Self {
        RawTable {
            sizes: t.sizes,
            outputs: t.outputs,
            cells: t.cells,
        }
    }
}

impl DecisionTable {
    pub fn from_cells(sizes: Vec<usize>, outputs: u8, cells: Vec<u8>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::validation("table axes must be nonempty"));
        }
        if outputs == 0 {
            return Err(Error::validation("table needs at least one output value"));
        }
        let n: usize = sizes.iter().product();
        if cells.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cells.len(),
            });
        }
        if let Some(bad) = cells.iter().find(|&&c| c == 0 || c > outputs) {
            return Err(Error::validation(format!(
                "table cell {bad} outside 1..={outputs}"
            )));
        }
        Ok(DecisionTable {
            sizes,
            outputs,
            cells,
        })
    }

    /// Table with every cell set to `value`.
    pub fn constant(sizes: Vec<usize>, outputs: u8, value: u8) -> Result<Self> {
        let n = sizes.iter().product();
        DecisionTable::from_cells(sizes, outputs, vec![value; n])
    }

    /// Builds a table from a function of the 1-based input scores.
    pub fn from_fn(sizes: Vec<usize>, outputs: u8, f: impl Fn(&[u8]) -> u8) -> Result<Self> {
        let n: usize = sizes.iter().product();
        let mut cells = Vec::with_capacity(n);
        let mut coords = vec![1u8; sizes.len()];
        for _ in 0..n {
            cells.push(f(&coords));
            for axis in (0..sizes.len()).rev() {
                if (coords[axis] as usize) < sizes[axis] {
                    coords[axis] += 1;
                    break;
                }
                coords[axis] = 1;
            }
        }
        DecisionTable::from_cells(sizes, outputs, cells)
    }

    pub fn arity(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn outputs(&self) -> u8 {
        self.outputs
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Flat index of 1-based input scores.
    pub fn index_of(&self, inputs: &[u8]) -> Result<usize> {
        if inputs.len() != self.sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sizes.len(),
                got: inputs.len(),
            });
        }
        let mut idx = 0;
        for (&v, &size) in inputs.iter().zip(&self.sizes) {
            if v == 0 || v as usize > size {
                return Err(Error::invalid(format!("input score {v} outside 1..={size}")));
            }
            idx = idx * size + (v as usize - 1);
        }
        Ok(idx)
    }

    pub fn get(&self, inputs: &[u8]) -> Result<u8> {
        Ok(self.cells[self.index_of(inputs)?])
    }

    pub fn set(&mut self, inputs: &[u8], value: u8) -> Result<()> {
        if value == 0 || value > self.outputs {
            return Err(Error::invalid(format!(
                "output {value} outside 1..={}",
                self.outputs
            )));
        }
        let idx = self.index_of(inputs)?;
        self.cells[idx] = value;
        Ok(())
    }

    /// Number of cells whose output differs from `other`.
    pub fn changed_cells(&self, other: &DecisionTable) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn same_shape(&self, other: &DecisionTable) -> bool {
        self.sizes == other.sizes && self.outputs == other.outputs
    }

    pub fn to_text(&self) -> String {
        format::to_text(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        format::from_text(text)
    }
}

/// True iff a coordinatewise larger input never yields a smaller output.
/// Only covering pairs (one coordinate incremented by one) are checked.
pub fn is_monotone(table: &DecisionTable) -> bool {
    let mut stride = 1;
    for axis in (0..table.sizes.len()).rev() {
        let size = table.sizes[axis];
        for idx in 0..table.cells.len() {
            let coord = (idx / stride) % size;
            if coord + 1 < size && table.cells[idx] > table.cells[idx + stride] {
                return false;
            }
        }
        stride *= size;
    }
    true
}
