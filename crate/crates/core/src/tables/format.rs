//! Plain-text grid layout.
//!
//! ```text
//! # sizes=5x5x5 outputs=5
//! # slice axis3=1
//! 1 1 1 2 2
//! ...
//! ```
//!
//! Rows run over the first input, columns over the second; tables with more
//! than two inputs are printed as one slice per combination of the remaining
//! inputs.

use std::fmt::Write;

use super::DecisionTable;
use crate::error::{Error, Result};

pub(super) fn to_text(table: &DecisionTable) -> String {
    let sizes = table.sizes();
    let dims: Vec<String> = sizes.iter().map(usize::to_string).collect();
    let mut out = format!("# sizes={} outputs={}\n", dims.join("x"), table.outputs());
    let rows = sizes[0];
    let cols = sizes.get(1).copied().unwrap_or(1);
    let rest: Vec<usize> = sizes.iter().skip(2).copied().collect();
    for slice in slices(&rest) {
        if !rest.is_empty() {
            let label: Vec<String> = slice
                .iter()
                .enumerate()
                .map(|(i, v)| format!("axis{}={}", i + 3, v))
                .collect();
            let _ = writeln!(out, "# slice {}", label.join(" "));
        }
        for i in 1..=rows {
            let line: Vec<String> = (1..=cols)
                .map(|j| {
                    let mut coords = vec![i as u8];
                    if sizes.len() > 1 {
                        coords.push(j as u8);
                    }
                    coords.extend(slice.iter().map(|&v| v as u8));
                    table.get(&coords).expect("in range").to_string()
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        if !rest.is_empty() {
            out.push('\n');
        }
    }
    out
}

pub(super) fn from_text(text: &str) -> Result<DecisionTable> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty table file"))?;
    let (sizes, outputs) = parse_header(header)?;
    let mut values = Vec::new();
    for (row, line) in lines.filter(|l| !l.starts_with('#')).enumerate() {
        for tok in line.split_whitespace() {
            values.push(tok.parse::<u8>().map_err(|_| Error::Parse {
                row,
                message: format!("'{tok}' is not a table output"),
            })?);
        }
    }
    let n: usize = sizes.iter().product();
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        });
    }
    let rows = sizes[0];
    let cols = sizes.get(1).copied().unwrap_or(1);
    let rest: Vec<usize> = sizes.iter().skip(2).copied().collect();
    let mut table = DecisionTable::constant(sizes.clone(), outputs, 1)?;
    let mut it = values.into_iter();
    for slice in slices(&rest) {
        for i in 1..=rows {
            for j in 1..=cols {
                let mut coords = vec![i as u8];
                if sizes.len() > 1 {
                    coords.push(j as u8);
                }
                coords.extend(slice.iter().map(|&v| v as u8));
                let v = it.next().expect("length checked");
                table.set(&coords, v)?;
            }
        }
    }
    Ok(table)
}

fn parse_header(line: &str) -> Result<(Vec<usize>, u8)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::validation("table header must start with '#'"))?;
    let mut sizes = None;
    let mut outputs = None;
    for tok in body.split_whitespace() {
        if let Some(v) = tok.strip_prefix("sizes=") {
            sizes = Some(
                v.split('x')
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::validation(format!("bad sizes '{v}'")))?,
            );
        } else if let Some(v) = tok.strip_prefix("outputs=") {
            outputs = Some(
                v.parse::<u8>()
                    .map_err(|_| Error::validation(format!("bad outputs '{v}'")))?,
            );
        }
    }
    match (sizes, outputs) {
        (Some(s), Some(o)) if !s.is_empty() => Ok((s, o)),
        _ => Err(Error::validation("table header needs sizes= and outputs=")),
    }
}

/// All 1-based coordinate tuples over `sizes`, first axis slowest.
fn slices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &size in sizes.iter().rev() {
        out = (1..=size)
            .flat_map(|v| {
                out.iter().map(move |tail| {
                    let mut c = vec![v];
                    c.extend(tail);
                    c
                })
            })
            .collect();
    }
    // reorder so the last axis varies slowest, matching the printed labels
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    out
}
