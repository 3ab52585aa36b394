//! User stance estimation from per-argument agree/disagree feedback.
//!
//! Each node's stance is the average of its own feedback and the stances of
//! its children, where an attacking child's stance is inverted before it is
//! averaged in. The root's own feedback slot is taken by the user's
//! normalized self-reported prior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArgumentGraph, Node, Relation, Visited};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    Agree,
    Neutral,
    Disagree,
}

impl Feedback {
    pub fn value(self) -> f64 {
        match self {
            Feedback::Agree => 1.0,
            Feedback::Neutral => 0.5,
            Feedback::Disagree => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("component `{0}` has not been presented yet")]
pub struct NotPresented(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("prior {0} outside [0, 1]")]
pub struct BadPrior(pub f64);

/// Feedback per component; unset entries read as neutral.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackMap {
    values: Vec<Feedback>,
}

impl FeedbackMap {
    pub fn new(graph: &ArgumentGraph) -> Self {
        FeedbackMap {
            values: vec![Feedback::Neutral; graph.len()],
        }
    }

    pub fn get(&self, node: Node) -> Feedback {
        self.values[node.index()]
    }

    /// Last write wins.
    pub fn set(
        &mut self,
        graph: &ArgumentGraph,
        node: Node,
        value: Feedback,
        visited: &Visited,
    ) -> Result<(), NotPresented> {
        if !visited.contains(node) {
            return Err(NotPresented(graph.id(node).to_owned()));
        }
        self.values[node.index()] = value;
        Ok(())
    }

    /// Sets without the presentation check; used by tests and replay tools.
    pub fn set_unchecked(&mut self, node: Node, value: Feedback) {
        self.values[node.index()] = value;
    }

    /// Non-neutral entries.
    pub fn iter_set(&self) -> impl Iterator<Item = (Node, Feedback)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, f)| **f != Feedback::Neutral)
            .map(|(i, f)| (Node::from_index(i), *f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StanceEstimate {
    e: Vec<f64>,
    deviation: Vec<f64>,
    prior: f64,
    root: Node,
}

impl StanceEstimate {
    pub fn of(&self, node: Node) -> f64 {
        self.e[node.index()]
    }

    /// `e - 0.5`, the value the recursion actually works on. Mirroring all
    /// feedback negates it bit for bit.
    pub fn deviation(&self, node: Node) -> f64 {
        self.deviation[node.index()]
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// Stance toward the major claim.
    pub fn overall(&self) -> f64 {
        self.e[self.root.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }
}

pub fn validate_prior(prior: f64) -> Result<f64, BadPrior> {
    if (0.0..=1.0).contains(&prior) {
        Ok(prior)
    } else {
        Err(BadPrior(prior))
    }
}

/// Maps a 1..=5 Likert answer onto [0, 1].
pub fn likert_to_prior(answer: u8) -> Option<f64> {
    (1..=5).contains(&answer).then(|| f64::from(answer - 1) / 4.0)
}

pub fn estimate_stance(graph: &ArgumentGraph, feedback: &FeedbackMap, prior: f64) -> StanceEstimate {
    debug_assert!((0.0..=1.0).contains(&prior));
    // Works on values centered at 0.5 so that inverting an attack is an
    // exact negation and the whole estimate is symmetric under mirroring.
    let mut d = vec![0.0; graph.len()];
    // Reverse preorder visits every child before its parent.
    for node in graph.subtree(graph.root()).into_iter().rev() {
        let own = if node == graph.root() {
            prior - 0.5
        } else {
            feedback.get(node).value() - 0.5
        };
        let children = graph.children(node);
        if children.is_empty() {
            d[node.index()] = own;
            continue;
        }
        let sum: f64 = children
            .iter()
            .map(|&c| match graph.relation(c) {
                Some(Relation::Attack) => -d[c.index()],
                _ => d[c.index()],
            })
            .sum();
        d[node.index()] = (own + sum) / (1 + children.len()) as f64;
    }
    StanceEstimate {
        e: d.iter().map(|x| 0.5 + x).collect(),
        deviation: d,
        prior,
        root: graph.root(),
    }
}

pub fn overall_stance(estimate: &StanceEstimate) -> f64 {
    estimate.overall()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Component;

    fn pair(rel: Relation) -> ArgumentGraph {
        ArgumentGraph::from_components(vec![Component::root("r", "root"), Component::child("c", "child", "r", rel)])
            .unwrap()
    }

    #[test]
    fn support_child_agreed() {
        let g = pair(Relation::Support);
        let c = g.lookup("c").unwrap();
        let mut m = FeedbackMap::new(&g);
        m.set_unchecked(c, Feedback::Agree);
        let s = estimate_stance(&g, &m, 0.5);
        assert_eq!(s.of(c), 1.0);
        assert!((s.overall() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn attack_child_agreed() {
        let g = pair(Relation::Attack);
        let mut m = FeedbackMap::new(&g);
        m.set_unchecked(g.lookup("c").unwrap(), Feedback::Agree);
        assert!((estimate_stance(&g, &m, 0.5).overall() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn neutral_fixed_point() {
        let g = pair(Relation::Attack);
        let s = estimate_stance(&g, &FeedbackMap::new(&g), 0.5);
        assert!(s.values().iter().all(|&x| x == 0.5));
        assert_eq!(overall_stance(&s), 0.5);
    }

    #[test]
    fn prior_with_two_neutral_supporters() {
        let g = ArgumentGraph::from_components(vec![
            Component::root("r", "root"),
            Component::child("a", "a", "r", Relation::Support),
            Component::child("b", "b", "r", Relation::Support),
        ])
        .unwrap();
        let s = estimate_stance(&g, &FeedbackMap::new(&g), 1.0);
        assert!((s.overall() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn feedback_requires_presentation() {
        let g = pair(Relation::Support);
        let c = g.lookup("c").unwrap();
        let mut m = FeedbackMap::new(&g);
        let mut visited = Visited::with_root(&g);
        assert_eq!(m.set(&g, c, Feedback::Agree, &visited), Err(NotPresented("c".into())));
        visited.insert(c);
        m.set(&g, c, Feedback::Disagree, &visited).unwrap();
        m.set(&g, c, Feedback::Agree, &visited).unwrap();
        assert_eq!(m.get(c).value(), 1.0);
    }

    #[test]
    fn likert_mapping() {
        assert_eq!(likert_to_prior(1), Some(0.0));
        assert_eq!(likert_to_prior(3), Some(0.5));
        assert_eq!(likert_to_prior(5), Some(1.0));
        assert_eq!(likert_to_prior(6), None);
        assert!(validate_prior(1.2).is_err());
    }
}
