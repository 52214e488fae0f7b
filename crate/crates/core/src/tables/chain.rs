use rand::Rng;

use super::dag::GridPosetDag;
use super::DecisionTable;
use crate::error::{Error, Result};

/// A linear extension of a grid poset plus `outputs - 1` sorted cut
/// positions in `0..=n_vertices`.
///
/// The vertex at position `pos` decodes to output
/// `1 + #{boundaries <= pos}`. Coincident cuts give empty segments, which is
/// how tables that skip output values are represented.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearExtensionState {
    order: Vec<usize>,
    boundaries: Vec<usize>,
}

impl LinearExtensionState {
    pub fn new(dag: &GridPosetDag, order: Vec<usize>, boundaries: Vec<usize>) -> Result<Self> {
        if !dag.is_topological(&order) {
            return Err(Error::validation("order is not a topological sort"));
        }
        if boundaries.windows(2).any(|w| w[0] > w[1])
            || boundaries.iter().any(|&b| b > order.len())
        {
            return Err(Error::validation("boundaries must be sorted within 0..=n"));
        }
        Ok(LinearExtensionState { order, boundaries })
    }

    /// A state that decodes to `table`, which must be monotone.
    ///
    /// Vertices are sorted by (output, coordinate sum, index); every edge
    /// raises the coordinate sum and never lowers the output, so this is a
    /// linear extension.
    pub fn from_table(dag: &GridPosetDag, table: &DecisionTable) -> Result<Self> {
        if dag.sizes() != table.sizes() {
            return Err(Error::validation("table shape does not match the poset"));
        }
        if !super::is_monotone(table) {
            return Err(Error::validation("table is not monotone"));
        }
        let cells = table.cells();
        let mut order: Vec<usize> = (0..dag.n_vertices()).collect();
        order.sort_by_key(|&v| (cells[v], dag.coords(v).iter().sum::<usize>(), v));
        let boundaries = (1..table.outputs())
            .map(|s| cells.iter().filter(|&&c| c <= s).count())
            .collect();
        LinearExtensionState::new(dag, order, boundaries)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Output count this state encodes.
    pub fn outputs(&self) -> u8 {
        (self.boundaries.len() + 1) as u8
    }
}

/// Decodes a state into its (monotone) table. For a DAG without grid shape
/// the table has one axis indexed by vertex.
pub fn decode(state: &LinearExtensionState, dag: &GridPosetDag) -> DecisionTable {
    let mut cells = vec![0u8; state.order.len()];
    let mut segment = 0usize;
    for (pos, &v) in state.order.iter().enumerate() {
        while segment < state.boundaries.len() && state.boundaries[segment] <= pos {
            segment += 1;
        }
        cells[v] = segment as u8 + 1;
    }
    let sizes = if dag.sizes().is_empty() {
        vec![dag.n_vertices()]
    } else {
        dag.sizes().to_vec()
    };
    DecisionTable::from_cells(sizes, state.outputs(), cells)
        .expect("decoded cells are in range by construction")
}

/// One step of the lazy adjacent-transposition chain on linear extensions.
///
/// Holds with probability 1/2; otherwise picks an adjacent position pair
/// uniformly and swaps it when the two vertices are incomparable. Adjacent
/// vertices of a linear extension are comparable exactly when they share a
/// covering edge. Returns whether the order changed.
pub fn sort_chain_step<R: Rng + ?Sized>(
    state: &mut LinearExtensionState,
    dag: &GridPosetDag,
    rng: &mut R,
) -> bool {
    let n = state.order.len();
    if n < 2 || rng.random_bool(0.5) {
        return false;
    }
    let j = rng.random_range(0..n - 1);
    let (u, v) = (state.order[j], state.order[j + 1]);
    if dag.covers(u, v) {
        return false;
    }
    state.order.swap(j, j + 1);
    true
}

/// One step of the symmetric random walk on cut positions.
///
/// Picks a boundary uniformly and proposes moving it by +1 or -1; proposals
/// that leave `0..=n` or pass a neighbouring boundary are rejected.
pub fn boundary_step<R: Rng + ?Sized>(state: &mut LinearExtensionState, rng: &mut R) -> bool {
    let m = state.boundaries.len();
    if m == 0 {
        return false;
    }
    let j = rng.random_range(0..m);
    let up = rng.random_bool(0.5);
    let current = state.boundaries[j];
    let lower = if j == 0 { 0 } else { state.boundaries[j - 1] };
    let upper = if j + 1 == m {
        state.order.len()
    } else {
        state.boundaries[j + 1]
    };
    let proposed = if up {
        if current >= upper {
            return false;
        }
        current + 1
    } else {
        if current <= lower {
            return false;
        }
        current - 1
    };
    state.boundaries[j] = proposed;
    true
}

/// Sort move with probability `sort_prob`, boundary move otherwise.
pub fn mixed_step<R: Rng + ?Sized>(
    state: &mut LinearExtensionState,
    dag: &GridPosetDag,
    sort_prob: f64,
    rng: &mut R,
) -> bool {
    if rng.random_bool(sort_prob) {
        sort_chain_step(state, dag, rng)
    } else {
        boundary_step(state, rng)
    }
}
