//! Hierarchical aggregation of sub-model scores through shared decision
//! tables, in the style of the Hamlet Evaluation System.
//!
//! Raw scores in `[1, L]` are rounded to integers, then passed through a DAG
//! of nodes. Each node looks up a named table with its input scores. Nodes
//! naming the same table share it, so replacing a table changes every node
//! that uses it.

mod pd;
mod synth;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{is_monotone, DecisionTable};

pub use pd::{
    pd_curve, pd_function, pd_importance, pd_relative_change, scale_importance,
    scaled_pd_importance, submodel_pd_curve, submodel_pd_importance, ScaledImportance,
};
pub use synth::{generate_hes_data, HesDataSpec};

/// Table key used by two-way nodes in the default wiring.
pub const TWO_WAY: &str = "two_way";
/// Table key used by three-way nodes in the default wiring.
pub const THREE_WAY: &str = "three_way";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// `x.5` goes up.
    #[default]
    HalfUp,
    /// `x.5` goes down.
    HalfDown,
    /// `x.5` goes to the even neighbour.
    HalfEven,
}

/// One aggregation node. Inputs name raw scores (`x1`, `x2`, ...) or other
/// nodes by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub table: String,
    pub inputs: Vec<String>,
}

/// Node wiring without table contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wiring {
    pub n_inputs: usize,
    #[serde(default = "default_levels")]
    pub score_levels: u8,
    #[serde(default)]
    pub rounding: Rounding,
    pub nodes: Vec<Node>,
}

fn default_levels() -> u8 {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Raw(usize),
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawPipeline {
    wiring: Wiring,
    tables: BTreeMap<String, DecisionTable>,
}

/// A validated wiring together with its tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPipeline", into = "RawPipeline")]
pub struct HesPipeline {
    wiring: Wiring,
    tables: BTreeMap<String, DecisionTable>,
    sources: Vec<Vec<Source>>,
    /// Position of each node's table among the table keys, in key order.
    slots: Vec<usize>,
    /// Node indices in evaluation order.
    order: Vec<usize>,
    sink: usize,
}

impl TryFrom<RawPipeline> for HesPipeline {
    type Error = Error;

    fn try_from(raw: RawPipeline) -> Result<Self> {
        HesPipeline::new(raw.wiring, raw.tables)
    }
}

impl From<HesPipeline> for RawPipeline {
    fn from(p: HesPipeline) -> Self {
        RawPipeline {
            wiring: p.wiring,
            tables: p.tables,
        }
    }
}

fn raw_index(name: &str, n_inputs: usize) -> Option<usize> {
    let j: usize = name.strip_prefix('x')?.parse().ok()?;
    (1..=n_inputs).contains(&j).then(|| j - 1)
}

impl HesPipeline {
    pub fn new(wiring: Wiring, tables: BTreeMap<String, DecisionTable>) -> Result<Self> {
        if wiring.n_inputs == 0 {
            return Err(Error::validation("pipeline needs at least one raw input"));
        }
        if wiring.score_levels < 1 {
            return Err(Error::validation("score levels must be at least 1"));
        }
        if wiring.nodes.is_empty() {
            return Err(Error::validation("pipeline has no nodes"));
        }
        let mut ids: HashMap<&str, usize> = HashMap::new();
        for (i, node) in wiring.nodes.iter().enumerate() {
            if raw_index(&node.id, wiring.n_inputs).is_some() {
                return Err(Error::validation(format!(
                    "node id {} collides with a raw input name",
                    node.id
                )));
            }
            if ids.insert(node.id.as_str(), i).is_some() {
                return Err(Error::validation(format!("duplicate node id {}", node.id)));
            }
        }
        let mut sources = Vec::with_capacity(wiring.nodes.len());
        let mut consumed = vec![false; wiring.nodes.len()];
        for node in &wiring.nodes {
            let table = tables.get(&node.table).ok_or_else(|| {
                Error::validation(format!("node {} references missing table {}", node.id, node.table))
            })?;
            if table.arity() != node.inputs.len() {
                return Err(Error::validation(format!(
                    "node {} has {} inputs but table {} has arity {}",
                    node.id,
                    node.inputs.len(),
                    node.table,
                    table.arity()
                )));
            }
            let mut srcs = Vec::with_capacity(node.inputs.len());
            for name in &node.inputs {
                let src = if let Some(j) = raw_index(name, wiring.n_inputs) {
                    Source::Raw(j)
                } else if let Some(&i) = ids.get(name.as_str()) {
                    consumed[i] = true;
                    Source::Node(i)
                } else {
                    return Err(Error::validation(format!(
                        "node {} reads unknown source {name}",
                        node.id
                    )));
                };
                srcs.push(src);
            }
            sources.push(srcs);
        }
        for (key, table) in &tables {
            let levels = wiring.score_levels as usize;
            if table.outputs() != wiring.score_levels || table.sizes().iter().any(|&s| s != levels) {
                return Err(Error::validation(format!(
                    "table {key} must map {{1..{levels}}}^p to {{1..{levels}}}"
                )));
            }
        }
        let sinks: Vec<usize> = (0..wiring.nodes.len()).filter(|&i| !consumed[i]).collect();
        if sinks.len() != 1 {
            return Err(Error::validation(format!(
                "pipeline must have exactly one sink node, found {}",
                sinks.len()
            )));
        }
        let order = topological_order(&sources)?;
        let keys: Vec<&String> = tables.keys().collect();
        let slots = wiring
            .nodes
            .iter()
            .map(|node| keys.iter().position(|k| **k == node.table).expect("checked above"))
            .collect();
        Ok(HesPipeline {
            wiring,
            tables,
            sources,
            slots,
            order,
            sink: sinks[0],
        })
    }

    pub fn wiring(&self) -> &Wiring {
        &self.wiring
    }

    pub fn tables(&self) -> &BTreeMap<String, DecisionTable> {
        &self.tables
    }

    pub fn table(&self, key: &str) -> Option<&DecisionTable> {
        self.tables.get(key)
    }

    pub fn n_inputs(&self) -> usize {
        self.wiring.n_inputs
    }

    pub fn score_levels(&self) -> u8 {
        self.wiring.score_levels
    }

    pub fn sink(&self) -> &Node {
        &self.wiring.nodes[self.sink]
    }

    /// Replaces the table stored under `key`; shape must not change.
    pub fn set_table(&mut self, key: &str, table: DecisionTable) -> Result<()> {
        let slot = self
            .tables
            .get_mut(key)
            .ok_or_else(|| Error::invalid(format!("no table named {key}")))?;
        if !slot.same_shape(&table) {
            return Err(Error::validation(format!("replacement for {key} changes its shape")));
        }
        *slot = table;
        Ok(())
    }

    /// Copy in which the sink reads its own private copy of its table under
    /// `key`, so it can change without touching the other nodes.
    pub fn with_private_sink_table(&self, key: &str) -> Result<HesPipeline> {
        if self.tables.contains_key(key) {
            return Err(Error::invalid(format!("table name {key} already in use")));
        }
        let mut wiring = self.wiring.clone();
        let mut tables = self.tables.clone();
        let current = &wiring.nodes[self.sink].table;
        tables.insert(key.to_string(), self.tables[current].clone());
        wiring.nodes[self.sink].table = key.to_string();
        HesPipeline::new(wiring, tables)
    }

    pub fn validate(&self) -> Result<()> {
        HesPipeline::new(self.wiring.clone(), self.tables.clone()).map(|_| ())
    }

    /// True when every table is monotone.
    pub fn is_monotone(&self) -> bool {
        self.tables.values().all(is_monotone)
    }

    /// Whether raw input `j` (0-based) feeds any node.
    pub fn uses_input(&self, j: usize) -> bool {
        self.sources.iter().flatten().any(|s| *s == Source::Raw(j))
    }

    pub fn round(&self, x: &[f64]) -> Result<Vec<u8>> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        round_scores(x, self.score_levels(), self.wiring.rounding)
    }

    /// Security score for raw inputs `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<u8> {
        Ok(self.evaluate_rounded(&self.round(x)?))
    }

    /// Score for already-rounded inputs.
    pub fn evaluate_rounded(&self, scores: &[u8]) -> u8 {
        self.node_outputs(scores)[self.sink]
    }

    /// Output of every node, indexed like `wiring().nodes`.
    pub fn node_outputs(&self, scores: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.wiring.nodes.len()];
        let mut buf = Vec::with_capacity(3);
        for &i in &self.order {
            buf.clear();
            buf.extend(self.sources[i].iter().map(|s| match *s {
                Source::Raw(j) => scores[j],
                Source::Node(n) => out[n],
            }));
            let table = &self.tables[&self.wiring.nodes[i].table];
            out[i] = table.get(&buf).expect("validated shape");
        }
        out
    }

    /// Score for rounded inputs with `tables` (in key order) substituted for
    /// the pipeline's own tables.
    pub fn evaluate_with(&self, tables: &[DecisionTable], scores: &[u8]) -> u8 {
        let mut out = vec![0u8; self.wiring.nodes.len()];
        let mut buf = Vec::with_capacity(3);
        for &i in &self.order {
            buf.clear();
            buf.extend(self.sources[i].iter().map(|s| match *s {
                Source::Raw(j) => scores[j],
                Source::Node(n) => out[n],
            }));
            out[i] = tables[self.slots[i]].get(&buf).expect("validated shape");
        }
        out[self.sink]
    }

    /// Scores entering the sink node for rounded inputs.
    pub fn sink_inputs_rounded(&self, scores: &[u8]) -> Vec<u8> {
        let out = self.node_outputs(scores);
        self.sources[self.sink]
            .iter()
            .map(|s| match *s {
                Source::Raw(j) => scores[j],
                Source::Node(n) => out[n],
            })
            .collect()
    }

    /// Whether any node other than the sink reads table `key`.
    pub fn table_shared_below_sink(&self, key: &str) -> bool {
        self.wiring
            .nodes
            .iter()
            .enumerate()
            .any(|(i, n)| i != self.sink && n.table == key)
    }

    /// Scores entering the sink node for raw inputs `x`.
    pub fn sink_inputs(&self, x: &[f64]) -> Result<Vec<u8>> {
        Ok(self.sink_inputs_rounded(&self.round(x)?))
    }

    /// The sink's table.
    pub fn sink_table(&self) -> &DecisionTable {
        &self.tables[&self.wiring.nodes[self.sink].table]
    }
}

fn topological_order(sources: &[Vec<Source>]) -> Result<Vec<usize>> {
    let n = sources.len();
    let mut indeg = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, srcs) in sources.iter().enumerate() {
        for s in srcs {
            if let Source::Node(j) = *s {
                indeg[i] += 1;
                users[j].push(i);
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(u);
            }
        }
    }
    if order.len() != n {
        return Err(Error::validation("pipeline wiring contains a cycle"));
    }
    Ok(order)
}

/// Rounds raw scores in `[1, levels]` to the nearest integer.
pub fn round_scores(x: &[f64], levels: u8, rounding: Rounding) -> Result<Vec<u8>> {
    let hi = levels as f64;
    x.iter()
        .enumerate()
        .map(|(j, &v)| {
            if !(1.0..=hi).contains(&v) {
                return Err(Error::validation(format!(
                    "score {v} for input x{} outside [1, {levels}]",
                    j + 1
                )));
            }
            let fl = v.floor();
            let frac = v - fl;
            let r = if frac > 0.5 {
                fl + 1.0
            } else if frac < 0.5 {
                fl
            } else {
                match rounding {
                    Rounding::HalfUp => fl + 1.0,
                    Rounding::HalfDown => fl,
                    Rounding::HalfEven if fl % 2.0 == 0.0 => fl,
                    Rounding::HalfEven => fl + 1.0,
                }
            };
            Ok(r as u8)
        })
        .collect()
}

/// Six level-1 three-way nodes over `x1..x18`, two level-2 three-way nodes
/// that each add one raw input (`x19`, `x20`), a two-way node over the social
/// and economic scores, and a three-way sink.
pub fn default_wiring(score_levels: u8) -> Wiring {
    let node = |id: &str, table: &str, inputs: &[&str]| Node {
        id: id.into(),
        table: table.into(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
    };
    Wiring {
        n_inputs: 20,
        score_levels,
        rounding: Rounding::HalfUp,
        nodes: vec![
            node("enemy_military", THREE_WAY, &["x1", "x2", "x3"]),
            node("friendly_military", THREE_WAY, &["x4", "x5", "x6"]),
            node("enemy_political", THREE_WAY, &["x7", "x8", "x9"]),
            node("government_political", THREE_WAY, &["x10", "x11", "x12"]),
            node("social", THREE_WAY, &["x13", "x14", "x15"]),
            node("economic", THREE_WAY, &["x16", "x17", "x18"]),
            node("military", THREE_WAY, &["enemy_military", "friendly_military", "x19"]),
            node("political", THREE_WAY, &["enemy_political", "government_political", "x20"]),
            node("social_economic", TWO_WAY, &["social", "economic"]),
            node("security", THREE_WAY, &["military", "political", "social_economic"]),
        ],
    }
}

/// Placeholder two-way baseline: floor of the input mean.
pub fn synthetic_two_way(levels: u8) -> DecisionTable {
    let l = levels as usize;
    DecisionTable::from_fn(vec![l, l], levels, |c| (c[0] + c[1]) / 2).expect("valid shape")
}

/// Placeholder three-way baseline: floor of the input mean.
pub fn synthetic_three_way(levels: u8) -> DecisionTable {
    let l = levels as usize;
    DecisionTable::from_fn(vec![l, l, l], levels, |c| {
        ((c[0] as u16 + c[1] as u16 + c[2] as u16) / 3) as u8
    })
    .expect("valid shape")
}

/// Default wiring with the placeholder baseline tables.
pub fn default_pipeline(score_levels: u8) -> HesPipeline {
    let mut tables = BTreeMap::new();
    tables.insert(TWO_WAY.to_string(), synthetic_two_way(score_levels));
    tables.insert(THREE_WAY.to_string(), synthetic_three_way(score_levels));
    HesPipeline::new(default_wiring(score_levels), tables).expect("default pipeline is valid")
}
