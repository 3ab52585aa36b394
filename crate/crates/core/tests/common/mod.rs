#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use delib_core::graph::{ArgumentGraph, Component, Relation, Visited};
use proptest::prelude::*;
use rand::Rng;

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/corpus").join(name)
}

pub fn bundled(name: &str) -> Arc<ArgumentGraph> {
    Arc::new(delib_core::load_corpus_file(corpus_path(name)).expect("bundled corpus loads"))
}

/// Tree shape as (parent index, is attack) for nodes 1..; node 0 is the root.
pub type Shape = Vec<(usize, bool)>;

pub fn build(shape: &Shape) -> ArgumentGraph {
    let mut cs = vec![Component::root("n0", "root")];
    for (i, &(p, attack)) in shape.iter().enumerate() {
        let rel = if attack { Relation::Attack } else { Relation::Support };
        cs.push(Component::child(format!("n{}", i + 1), format!("text {}", i + 1), format!("n{p}"), rel));
    }
    ArgumentGraph::from_components(cs).expect("generated trees are valid")
}

pub fn random_shape(rng: &mut impl Rng, nodes: usize) -> Shape {
    (1..nodes).map(|i| (rng.random_range(0..i), rng.random_bool(0.5))).collect()
}

pub fn arb_shape(max_nodes: usize) -> impl Strategy<Value = Shape> {
    (1..=max_nodes).prop_flat_map(|n| {
        (1..n)
            .map(|i| (0..i, any::<bool>()))
            .collect::<Vec<_>>()
    })
}

/// Grows a visited set the way a dialogue does: root first, then frontier nodes.
pub fn random_visited(g: &ArgumentGraph, rng: &mut impl Rng, steps: usize) -> Visited {
    let mut v = Visited::with_root(g);
    for _ in 0..steps {
        let f = g.frontier(&v);
        let all: Vec<_> = f.pro.iter().chain(&f.con).copied().collect();
        if all.is_empty() {
            break;
        }
        v.insert(all[rng.random_range(0..all.len())]);
    }
    v
}

pub mod oracle;
