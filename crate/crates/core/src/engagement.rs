//! Focus, hierarchical weighting and reflective engagement (RUE).
//!
//! `focus` at a node is the signed balance of pro and con children the user
//! has heard. The total focus of a target is a weighted average of node focus
//! over the non-leaf nodes of its subtree, where each node's weight is the
//! product of a depth weight (`omega_d`, by level offset from the target) and
//! a level-size weight (`omega_n`, the node's share of children on its level).
//! RUE then compares the user's stance with the inverted, rescaled focus:
//!
//! ```text
//! rue = 1 - |e - (1 - (F + 1) / 2)|
//! ```
//!
//! so it peaks when the user has mostly heard the side they lean against.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArgumentGraph, Node, Polarity, Visited};
use crate::stance::StanceEstimate;

/// Which end of the subtree `omega_d` favours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaDirection {
    /// Largest weight on the target's own level, decreasing with depth.
    #[default]
    Example,
    /// Largest weight on the deepest non-leaf level.
    Prose,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementConfig {
    #[serde(default)]
    pub omega_d_direction: OmegaDirection,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("depth offset {offset} outside [1, {levels}]")]
    OffsetOutOfRange { levels: u32, offset: u32 },
    #[error("no levels below the target")]
    NoLevels,
    #[error("component `{0}` is a leaf and carries no level-size weight")]
    LeafNode(String),
    #[error("component `{node}` is not in the subtree of `{target}`")]
    NotInSubtree { node: String, target: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("rue inputs out of range: e = {e}, F = {focus}")]
pub struct RangeError {
    pub e: f64,
    pub focus: f64,
}

/// Depth weight for a node `offset` levels into a subtree spanning `levels`
/// levels below the target (offset 1 is the target's own level).
pub fn omega_d(levels: u32, offset: u32, direction: OmegaDirection) -> Result<f64, WeightError> {
    if levels == 0 {
        return Err(WeightError::NoLevels);
    }
    if offset == 0 || offset > levels {
        return Err(WeightError::OffsetOutOfRange { levels, offset });
    }
    let total = f64::from(levels) * f64::from(levels + 1) / 2.0;
    let rank = match direction {
        OmegaDirection::Example => levels + 1 - offset,
        OmegaDirection::Prose => offset,
    };
    Ok(f64::from(rank) / total)
}

/// Share of `node`'s children among all children of non-leaf nodes on the
/// same level inside `target`'s subtree.
pub fn omega_n(graph: &ArgumentGraph, target: Node, node: Node) -> Result<f64, WeightError> {
    if graph.is_leaf(node) {
        return Err(WeightError::LeafNode(graph.id(node).to_owned()));
    }
    if !graph.is_in_subtree(target, node) {
        return Err(WeightError::NotInSubtree {
            node: graph.id(node).to_owned(),
            target: graph.id(target).to_owned(),
        });
    }
    let level = graph.level(node);
    let level_total: usize = graph
        .subtree(target)
        .into_iter()
        .filter(|&n| graph.level(n) == level)
        .map(|n| graph.children(n).len())
        .sum();
    Ok(graph.children(node).len() as f64 / level_total as f64)
}

/// Per-node counts of visited children by global polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitTally {
    pro: Vec<u32>,
    con: Vec<u32>,
}

impl VisitTally {
    pub fn new(graph: &ArgumentGraph, visited: &Visited) -> Self {
        let mut tally = VisitTally {
            pro: vec![0; graph.len()],
            con: vec![0; graph.len()],
        };
        for node in visited.iter() {
            tally.add(graph, node);
        }
        tally
    }

    /// Records `node` as visited. Callers must not add a node twice.
    pub fn add(&mut self, graph: &ArgumentGraph, node: Node) {
        if let Some(p) = graph.parent(node) {
            match graph.polarity(node) {
                Polarity::Pro => self.pro[p.index()] += 1,
                Polarity::Con => self.con[p.index()] += 1,
            }
        }
    }

    pub fn pro(&self, node: Node) -> u32 {
        self.pro[node.index()]
    }

    pub fn con(&self, node: Node) -> u32 {
        self.con[node.index()]
    }

    pub fn visited_children(&self, node: Node) -> u32 {
        self.pro(node) + self.con(node)
    }

    /// `None` when no child of `node` has been visited.
    pub fn focus(&self, node: Node) -> Option<f64> {
        let total = self.visited_children(node);
        (total > 0).then(|| (f64::from(self.pro(node)) - f64::from(self.con(node))) / f64::from(total))
    }
}

pub fn focus(tally: &VisitTally, node: Node) -> Option<f64> {
    tally.focus(node)
}

/// One summand of the total-focus average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusTerm {
    pub focus: f64,
    pub omega_n: f64,
    pub omega_d: f64,
}

impl FocusTerm {
    pub fn weight(&self) -> f64 {
        self.omega_d * self.omega_n
    }
}

/// Weighted average of focus terms, or `None` for an empty term list.
pub fn weighted_focus(terms: &[FocusTerm]) -> Option<f64> {
    if terms.is_empty() {
        return None;
    }
    let num: f64 = terms.iter().map(|t| t.focus * t.weight()).sum();
    let den: f64 = terms.iter().map(FocusTerm::weight).sum();
    Some((num / den).clamp(-1.0, 1.0))
}

/// Weights of a target's subtree; independent of what has been visited.
#[derive(Debug, Clone)]
pub struct FocusWeights {
    levels: u32,
    omega_d: BTreeMap<u32, f64>,
    /// (node, omega_n, omega_d) for every non-leaf node of the target's subtree.
    nodes: Vec<(Node, f64, f64)>,
}

impl FocusWeights {
    pub fn new(graph: &ArgumentGraph, target: Node, cfg: &EngagementConfig) -> Self {
        weights(graph, target, cfg)
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn total_focus(&self, tally: &VisitTally) -> f64 {
        weighted_focus(&focus_terms(tally, self)).unwrap_or(0.0)
    }
}

fn weights(graph: &ArgumentGraph, target: Node, cfg: &EngagementConfig) -> FocusWeights {
    let subtree = graph.subtree(target);
    let base = graph.level(target);
    let levels = subtree.iter().map(|&n| graph.level(n)).max().unwrap_or(base) - base;
    let mut omega_d_map = BTreeMap::new();
    if levels == 0 {
        return FocusWeights {
            levels,
            omega_d: omega_d_map,
            nodes: Vec::new(),
        };
    }
    for offset in 1..=levels {
        omega_d_map.insert(offset, omega_d(levels, offset, cfg.omega_d_direction).expect("offset in range"));
    }
    let mut per_level = vec![0usize; levels as usize];
    for &n in &subtree {
        let depth = (graph.level(n) - base) as usize;
        if depth < per_level.len() {
            per_level[depth] += graph.children(n).len();
        }
    }
    let nodes = subtree
        .into_iter()
        .filter(|&n| !graph.is_leaf(n))
        .map(|n| {
            let depth = graph.level(n) - base;
            let wn = graph.children(n).len() as f64 / per_level[depth as usize] as f64;
            (n, wn, omega_d_map[&(depth + 1)])
        })
        .collect();
    FocusWeights {
        levels,
        omega_d: omega_d_map,
        nodes,
    }
}

fn focus_terms(tally: &VisitTally, w: &FocusWeights) -> Vec<FocusTerm> {
    w.nodes
        .iter()
        .filter_map(|&(n, omega_n, omega_d)| {
            Some(FocusTerm {
                focus: tally.focus(n)?,
                omega_n,
                omega_d,
            })
        })
        .collect()
}

/// Total normalized focus of `target`. Nodes without visited children are
/// left out of both sums; with nothing left the focus is 0.
pub fn total_focus(graph: &ArgumentGraph, tally: &VisitTally, target: Node, cfg: &EngagementConfig) -> f64 {
    FocusWeights::new(graph, target, cfg).total_focus(tally)
}

/// Reflective engagement for stance `e` and total focus `focus`.
pub fn rue(e: f64, focus: f64) -> Result<f64, RangeError> {
    if !(0.0..=1.0).contains(&e) || !(-1.0..=1.0).contains(&focus) {
        return Err(RangeError { e, focus });
    }
    Ok(1.0 - (e - (1.0 - (focus + 1.0) / 2.0)).abs())
}

/// Every intermediate value of one engagement evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub target: String,
    pub e: f64,
    pub levels: u32,
    pub focus: BTreeMap<String, f64>,
    pub omega_d: BTreeMap<u32, f64>,
    pub omega_n: BTreeMap<String, f64>,
    #[serde(rename = "W")]
    pub w: BTreeMap<String, f64>,
    #[serde(rename = "F")]
    pub total_focus: f64,
    pub rue: f64,
}

pub fn session_rue(
    graph: &ArgumentGraph,
    tally: &VisitTally,
    stance: &StanceEstimate,
    target: Node,
    cfg: &EngagementConfig,
) -> EngagementReport {
    let w = weights(graph, target, cfg);
    let mut focus_map = BTreeMap::new();
    let mut omega_n_map = BTreeMap::new();
    let mut w_map = BTreeMap::new();
    for &(n, wn, wd) in &w.nodes {
        let id = graph.id(n).to_owned();
        if let Some(f) = tally.focus(n) {
            focus_map.insert(id.clone(), f);
        }
        omega_n_map.insert(id.clone(), wn);
        w_map.insert(id, wd * wn);
    }
    let total = w.total_focus(tally);
    let e = stance.of(target);
    EngagementReport {
        target: graph.id(target).to_owned(),
        e,
        levels: w.levels,
        focus: focus_map,
        omega_d: w.omega_d,
        omega_n: omega_n_map,
        w: w_map,
        total_focus: total,
        rue: rue(e, total).expect("stance and focus are range-checked by construction"),
    }
}
