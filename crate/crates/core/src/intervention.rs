//! Opposite-side suggestions driven by simulated engagement.
//!
//! On every pro/con request the engine simulates the major claim's RUE for
//! each frontier candidate as if it had just been presented, keeping the
//! stance estimate fixed. If the best candidate on the side opposite to the
//! request strictly beats the best candidate on the requested side, the
//! opposite maximizer is suggested instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engagement::{rue, EngagementConfig, FocusWeights, VisitTally};
use crate::graph::{ArgumentGraph, Frontier, Node, Polarity, Visited};
use crate::stance::StanceEstimate;

/// Scores closer than this count as equal. Mathematically tied candidates
/// can differ in the last bit after floating-point evaluation.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("component `{0}` is not a frontier candidate")]
pub struct NotACandidate(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no unheard component is reachable on either side")]
pub struct EmptyFrontier;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("confirm/reject received with no pending intervention")]
pub struct ProtocolError;

/// Read-only view of the session state the intervention needs.
#[derive(Debug, Clone, Copy)]
pub struct SessionView<'a> {
    pub graph: &'a ArgumentGraph,
    pub visited: &'a Visited,
    pub stance: &'a StanceEstimate,
    pub config: &'a EngagementConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionDecision {
    pub requested: Polarity,
    pub triggered: bool,
    pub suggested: Option<String>,
    /// Best simulated RUE on the requested side; absent when that side is empty.
    pub sim_rue_requested: Option<f64>,
    pub sim_rue_opposite: Option<f64>,
    /// Simulated RUE of every candidate on both sides, by component id.
    pub scores: BTreeMap<String, f64>,
}

/// Simulates RUE on the major claim with `candidate` added to the visited set.
pub fn sim_rue(view: SessionView<'_>, candidate: Node) -> Result<f64, NotACandidate> {
    let frontier = view.graph.frontier(view.visited);
    if !frontier.contains(candidate) {
        return Err(NotACandidate(view.graph.id(candidate).to_owned()));
    }
    let sim = Simulator::new(view);
    Ok(sim.score(candidate))
}

struct Simulator<'a> {
    view: SessionView<'a>,
    weights: FocusWeights,
    tally: VisitTally,
    e: f64,
}

impl<'a> Simulator<'a> {
    fn new(view: SessionView<'a>) -> Self {
        let root = view.graph.root();
        Simulator {
            weights: FocusWeights::new(view.graph, root, view.config),
            tally: VisitTally::new(view.graph, view.visited),
            e: view.stance.of(root),
            view,
        }
    }

    fn score(&self, candidate: Node) -> f64 {
        let mut tally = self.tally.clone();
        tally.add(self.view.graph, candidate);
        let f = self.weights.total_focus(&tally);
        rue(self.e, f).expect("stance and focus in range")
    }

    /// (best score, argmax) with near-ties going to the lowest component id.
    fn best(&self, candidates: &[Node], scores: &mut BTreeMap<String, f64>) -> Option<(f64, Node)> {
        let g = self.view.graph;
        let scored: Vec<(f64, Node)> = candidates.iter().map(|&c| (self.score(c), c)).collect();
        for &(s, c) in &scored {
            scores.insert(g.id(c).to_owned(), s);
        }
        let max = scored.iter().map(|&(s, _)| s).fold(f64::NEG_INFINITY, f64::max);
        scored
            .into_iter()
            .filter(|&(s, _)| s >= max - TIE_TOLERANCE)
            .min_by(|a, b| g.id(a.1).cmp(g.id(b.1)))
            .map(|(_, n)| (max, n))
    }
}

/// Global side that answers a pro/con request about `target`.
pub fn requested_side(graph: &ArgumentGraph, target: Node, pro_request: bool) -> Polarity {
    let own = graph.polarity(target);
    if pro_request {
        own
    } else {
        own.opposite()
    }
}

pub fn decide(view: SessionView<'_>, requested: Polarity) -> Result<InterventionDecision, EmptyFrontier> {
    let frontier: Frontier = view.graph.frontier(view.visited);
    decide_with_frontier(view, &frontier, requested)
}

pub(crate) fn decide_with_frontier(
    view: SessionView<'_>,
    frontier: &Frontier,
    requested: Polarity,
) -> Result<InterventionDecision, EmptyFrontier> {
    if frontier.is_empty() {
        return Err(EmptyFrontier);
    }
    let sim = Simulator::new(view);
    let mut scores = BTreeMap::new();
    let req = sim.best(frontier.side(requested), &mut scores);
    let opp = sim.best(frontier.side(requested.opposite()), &mut scores);
    // An empty requested side counts as negative infinity.
    let triggered = match (req, opp) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some((r, _)), Some((o, _))) => o > r + TIE_TOLERANCE,
    };
    Ok(InterventionDecision {
        requested,
        triggered,
        suggested: if triggered {
            opp.map(|(_, n)| view.graph.id(n).to_owned())
        } else {
            None
        },
        sim_rue_requested: req.map(|(s, _)| s),
        sim_rue_opposite: opp.map(|(s, _)| s),
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reply {
    Confirm,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    /// Present the suggested opposite-side component.
    PresentSuggested(String),
    /// Serve the user's original request as if nothing had been suggested.
    ServeOriginal,
}

pub fn resolve(pending: Option<&InterventionDecision>, reply: Reply) -> Result<Resolution, ProtocolError> {
    let decision = pending.filter(|d| d.triggered).ok_or(ProtocolError)?;
    match reply {
        Reply::Confirm => Ok(Resolution::PresentSuggested(
            decision.suggested.clone().ok_or(ProtocolError)?,
        )),
        Reply::Reject => Ok(Resolution::ServeOriginal),
    }
}
