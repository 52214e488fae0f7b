use super::DecisionTable;
use crate::error::{Error, Result};

/// Largest `outputs^cells` the enumerator accepts.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Every monotone table of the given shape, each exactly once, in
/// lexicographic order of the flat cell vector.
pub fn enumerate_monotone_tables(sizes: &[usize], outputs: u8) -> Result<Vec<DecisionTable>> {
    if sizes.is_empty() || sizes.contains(&0) || outputs == 0 {
        return Err(Error::invalid("table shape must be nonempty"));
    }
    let n: usize = sizes.iter().product();
    let space = (outputs as f64).powi(n as i32);
    if space > ENUMERATION_LIMIT {
        return Err(Error::invalid(format!(
            "{outputs}^{n} tables exceeds the enumeration limit of {ENUMERATION_LIMIT:e}"
        )));
    }
    let mut strides = vec![1; sizes.len()];
    for axis in (0..sizes.len() - 1).rev() {
        strides[axis] = strides[axis + 1] * sizes[axis + 1];
    }
    // lower neighbours of each cell all precede it in flat order
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            (0..sizes.len())
                .filter(|&a| !(v / strides[a]).is_multiple_of(sizes[a]))
                .map(|a| v - strides[a])
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    let mut cells = vec![0u8; n];
    fill(0, &preds, outputs, &mut cells, &mut |cells| {
        out.push(
            DecisionTable::from_cells(sizes.to_vec(), outputs, cells.to_vec())
                .expect("enumerated cells are in range"),
        );
    });
    Ok(out)
}

fn fill(
    idx: usize,
    preds: &[Vec<usize>],
    outputs: u8,
    cells: &mut [u8],
    emit: &mut impl FnMut(&[u8]),
) {
    if idx == cells.len() {
        emit(cells);
        return;
    }
    let lo = preds[idx].iter().map(|&p| cells[p]).max().unwrap_or(1);
    for value in lo..=outputs {
        cells[idx] = value;
        fill(idx + 1, preds, outputs, cells, emit);
    }
}
