//! Per-session dialogue state machine over the nine speech acts.
//!
//! The manager owns no mutable state itself: [`DialogManager::step`] takes a
//! state and a user act and returns the successor state together with the
//! system's reply, so a failed step never leaves a half-applied turn behind.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engagement::{session_rue, EngagementConfig, EngagementReport, VisitTally};
use crate::graph::{ArgumentGraph, Node, Polarity, Relation, Visited};
use crate::intervention::{self, EmptyFrontier, InterventionDecision, Reply, Resolution, SessionView};
use crate::stance::{estimate_stance, Feedback, FeedbackMap, StanceEstimate};

pub const STATE_SCHEMA_VERSION: u32 = 1;

/// The communication language: three system moves and six user moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechActKind {
    Argue,
    JumpTo,
    Intervene,
    WhyPro,
    WhyCon,
    LevelUp,
    Agree,
    Disagree,
    ConfirmReject,
}

impl SpeechActKind {
    pub const ALL: [SpeechActKind; 9] = [
        SpeechActKind::Argue,
        SpeechActKind::JumpTo,
        SpeechActKind::Intervene,
        SpeechActKind::WhyPro,
        SpeechActKind::WhyCon,
        SpeechActKind::LevelUp,
        SpeechActKind::Agree,
        SpeechActKind::Disagree,
        SpeechActKind::ConfirmReject,
    ];

    pub fn is_system(self) -> bool {
        matches!(self, SpeechActKind::Argue | SpeechActKind::JumpTo | SpeechActKind::Intervene)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserActKind {
    WhyPro,
    WhyCon,
    LevelUp,
    Agree,
    Disagree,
    Confirm,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "snake_case")]
pub enum UserAct {
    WhyPro { target: String },
    WhyCon { target: String },
    LevelUp,
    Agree { target: String },
    Disagree { target: String },
    Confirm,
    Reject,
}

impl UserAct {
    pub fn kind(&self) -> UserActKind {
        match self {
            UserAct::WhyPro { .. } => UserActKind::WhyPro,
            UserAct::WhyCon { .. } => UserActKind::WhyCon,
            UserAct::LevelUp => UserActKind::LevelUp,
            UserAct::Agree { .. } => UserActKind::Agree,
            UserAct::Disagree { .. } => UserActKind::Disagree,
            UserAct::Confirm => UserActKind::Confirm,
            UserAct::Reject => UserActKind::Reject,
        }
    }

    pub fn speech_act(&self) -> SpeechActKind {
        match self.kind() {
            UserActKind::WhyPro => SpeechActKind::WhyPro,
            UserActKind::WhyCon => SpeechActKind::WhyCon,
            UserActKind::LevelUp => SpeechActKind::LevelUp,
            UserActKind::Agree => SpeechActKind::Agree,
            UserActKind::Disagree => SpeechActKind::Disagree,
            UserActKind::Confirm | UserActKind::Reject => SpeechActKind::ConfirmReject,
        }
    }

    pub fn why(target: impl Into<String>, pro: bool) -> Self {
        let target = target.into();
        if pro {
            UserAct::WhyPro { target }
        } else {
            UserAct::WhyCon { target }
        }
    }
}

/// What the system says back after a user act.
///
/// `Argue`, `JumpTo` and `Intervene` are dialogue moves; `Acknowledge` and
/// `Exhausted` are bookkeeping replies that do not move through the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "snake_case")]
pub enum SystemMove {
    Argue {
        premise: String,
        conclusion: String,
        relation: Relation,
    },
    JumpTo {
        target: String,
    },
    Intervene {
        suggested: String,
    },
    Acknowledge {
        target: String,
        feedback: Feedback,
    },
    /// A rejected suggestion left nothing to serve on the requested side.
    Exhausted {
        side: Polarity,
    },
}

impl SystemMove {
    pub fn speech_act(&self) -> Option<SpeechActKind> {
        match self {
            SystemMove::Argue { .. } => Some(SpeechActKind::Argue),
            SystemMove::JumpTo { .. } => Some(SpeechActKind::JumpTo),
            SystemMove::Intervene { .. } => Some(SpeechActKind::Intervene),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialogError {
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("nothing left to present for this request")]
    ExhaustedBranch,
    #[error(transparent)]
    Protocol(#[from] intervention::ProtocolError),
    #[error(transparent)]
    UnknownId(#[from] crate::graph::UnknownId),
}

#[derive(Debug, Error)]
pub enum CorruptState {
    #[error("state blob is not valid: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("state schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("state is inconsistent with the corpus: {0}")]
    Inconsistent(String),
}

/// A triggered intervention waiting for confirm or reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingIntervention {
    pub decision: InterventionDecision,
    pub request: UserAct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogState {
    current: Node,
    visited: Visited,
    feedback: FeedbackMap,
    prior: f64,
    pending: Option<PendingIntervention>,
    seed: u64,
    rng: ChaCha8Rng,
    turn: u64,
}

impl DialogState {
    pub fn current(&self) -> Node {
        self.current
    }

    pub fn visited(&self) -> &Visited {
        &self.visited
    }

    pub fn feedback(&self) -> &FeedbackMap {
        &self.feedback
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn pending(&self) -> Option<&PendingIntervention> {
        self.pending.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn turn(&self) -> u64 {
        self.turn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reply: SystemMove,
    /// Intervention evaluation made during this step, if any.
    pub decision: Option<InterventionDecision>,
    /// Position before the step.
    pub from: Node,
}

#[derive(Debug, Clone)]
pub struct DialogManager {
    graph: Arc<ArgumentGraph>,
    engagement: EngagementConfig,
    interventions: bool,
}

impl DialogManager {
    pub fn new(graph: Arc<ArgumentGraph>, engagement: EngagementConfig, interventions: bool) -> Self {
        DialogManager {
            graph,
            engagement,
            interventions,
        }
    }

    pub fn graph(&self) -> &ArgumentGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<ArgumentGraph> {
        &self.graph
    }

    pub fn interventions_enabled(&self) -> bool {
        self.interventions
    }

    pub fn engagement_config(&self) -> &EngagementConfig {
        &self.engagement
    }

    /// Fresh state positioned at the major claim.
    pub fn start(&self, prior: f64, seed: u64) -> DialogState {
        DialogState {
            current: self.graph.root(),
            visited: Visited::with_root(&self.graph),
            feedback: FeedbackMap::new(&self.graph),
            prior,
            pending: None,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            turn: 0,
        }
    }

    pub fn stance(&self, s: &DialogState) -> StanceEstimate {
        estimate_stance(&self.graph, &s.feedback, s.prior)
    }

    /// Engagement of the major claim for the current state.
    pub fn engagement(&self, s: &DialogState) -> EngagementReport {
        let stance = self.stance(s);
        let tally = VisitTally::new(&self.graph, &s.visited);
        session_rue(&self.graph, &tally, &stance, self.graph.root(), &self.engagement)
    }

    fn unheard_children(&self, s: &DialogState, target: Node, relation: Relation) -> Vec<Node> {
        self.graph
            .children(target)
            .iter()
            .copied()
            .filter(|&c| !s.visited.contains(c) && self.graph.relation(c) == Some(relation))
            .collect()
    }

    fn servable(&self, s: &DialogState, target: Node, pro: bool) -> bool {
        if self.graph.is_leaf(target) {
            return false;
        }
        let relation = if pro { Relation::Support } else { Relation::Attack };
        if !self.unheard_children(s, target, relation).is_empty() {
            return true;
        }
        let side = intervention::requested_side(&self.graph, target, pro);
        let frontier = self.graph.frontier(&s.visited);
        !frontier.side(side).is_empty() || (self.interventions && !frontier.side(side.opposite()).is_empty())
    }

    /// User act kinds available at the current position.
    pub fn legal_moves(&self, s: &DialogState) -> BTreeSet<UserActKind> {
        let mut moves = BTreeSet::new();
        if s.pending.is_some() {
            moves.insert(UserActKind::Confirm);
            moves.insert(UserActKind::Reject);
            return moves;
        }
        moves.insert(UserActKind::Agree);
        moves.insert(UserActKind::Disagree);
        if s.current != self.graph.root() {
            moves.insert(UserActKind::LevelUp);
        }
        if self.servable(s, s.current, true) {
            moves.insert(UserActKind::WhyPro);
        }
        if self.servable(s, s.current, false) {
            moves.insert(UserActKind::WhyCon);
        }
        moves
    }

    /// Target a pro/con request from the current position refers to: the
    /// current node, or its parent when the current node is a leaf.
    pub fn request_target(&self, s: &DialogState) -> Node {
        let cur = s.current;
        if self.graph.is_leaf(cur) {
            self.graph.parent(cur).unwrap_or(cur)
        } else {
            cur
        }
    }

    /// Whether the user has anything left to ask for.
    pub fn is_exhausted(&self, s: &DialogState) -> bool {
        s.pending.is_none() && self.graph.frontier(&s.visited).is_empty()
    }

    pub fn step(&self, s: &DialogState, act: &UserAct) -> Result<(DialogState, StepOutcome), DialogError> {
        let g = &*self.graph;
        if s.pending.is_some() && !matches!(act, UserAct::Confirm | UserAct::Reject) {
            return Err(DialogError::IllegalMove(
                "an intervention is pending; confirm or reject it first".into(),
            ));
        }
        let mut next = s.clone();
        let from = s.current;
        let mut decision = None;
        let reply = match act {
            UserAct::WhyPro { target } | UserAct::WhyCon { target } => {
                let pro = matches!(act, UserAct::WhyPro { .. });
                let target = g.lookup(target)?;
                if !s.visited.contains(target) {
                    return Err(DialogError::IllegalMove(format!("`{}` has not been presented", g.id(target))));
                }
                if g.is_leaf(target) {
                    return Err(DialogError::IllegalMove(format!("`{}` is a leaf", g.id(target))));
                }
                if self.interventions {
                    let stance = self.stance(s);
                    let view = SessionView {
                        graph: g,
                        visited: &s.visited,
                        stance: &stance,
                        config: &self.engagement,
                    };
                    let side = intervention::requested_side(g, target, pro);
                    let d = intervention::decide(view, side).map_err(|EmptyFrontier| DialogError::ExhaustedBranch)?;
                    decision = Some(d.clone());
                    if d.triggered {
                        let suggested = d.suggested.clone().expect("triggered decisions carry a suggestion");
                        next.pending = Some(PendingIntervention {
                            decision: d,
                            request: act.clone(),
                        });
                        next.turn += 1;
                        return Ok((
                            next,
                            StepOutcome {
                                reply: SystemMove::Intervene { suggested },
                                decision,
                                from,
                            },
                        ));
                    }
                }
                let chosen = self.choose(&mut next, target, pro).ok_or(DialogError::ExhaustedBranch)?;
                self.present(&mut next, chosen)
            }
            UserAct::LevelUp => {
                let parent = g
                    .parent(s.current)
                    .ok_or_else(|| DialogError::IllegalMove("already at the major claim".into()))?;
                next.current = parent;
                SystemMove::JumpTo {
                    target: g.id(parent).to_owned(),
                }
            }
            UserAct::Agree { target } | UserAct::Disagree { target } => {
                let node = g.lookup(target)?;
                let value = if matches!(act, UserAct::Agree { .. }) {
                    Feedback::Agree
                } else {
                    Feedback::Disagree
                };
                next.feedback
                    .set(g, node, value, &s.visited)
                    .map_err(|e| DialogError::IllegalMove(e.to_string()))?;
                SystemMove::Acknowledge {
                    target: target.clone(),
                    feedback: value,
                }
            }
            UserAct::Confirm | UserAct::Reject => {
                let reply = if matches!(act, UserAct::Confirm) {
                    Reply::Confirm
                } else {
                    Reply::Reject
                };
                let pending = s.pending.as_ref();
                let resolution = intervention::resolve(pending.map(|p| &p.decision), reply)?;
                let pending = pending.expect("resolve succeeded");
                next.pending = None;
                match resolution {
                    Resolution::PresentSuggested(id) => {
                        let node = g.lookup(&id)?;
                        self.present(&mut next, node)
                    }
                    Resolution::ServeOriginal => {
                        let (target, pro) = match &pending.request {
                            UserAct::WhyPro { target } => (target, true),
                            UserAct::WhyCon { target } => (target, false),
                            _ => unreachable!("only pro/con requests are intervened"),
                        };
                        let target = g.lookup(target)?;
                        match self.choose(&mut next, target, pro) {
                            Some(chosen) => self.present(&mut next, chosen),
                            None => SystemMove::Exhausted {
                                side: pending.decision.requested,
                            },
                        }
                    }
                }
            }
        };
        next.turn += 1;
        Ok((next, StepOutcome { reply, decision, from }))
    }

    /// Uniform choice among unheard children of the requested relation,
    /// falling back to the frontier on the requested side.
    fn choose(&self, s: &mut DialogState, target: Node, pro: bool) -> Option<Node> {
        let relation = if pro { Relation::Support } else { Relation::Attack };
        let mut pool = self.unheard_children(s, target, relation);
        if pool.is_empty() {
            let side = intervention::requested_side(&self.graph, target, pro);
            pool = self.graph.frontier(&s.visited).side(side).to_vec();
        }
        if pool.is_empty() {
            return None;
        }
        let i = s.rng.random_range(0..pool.len());
        Some(pool[i])
    }

    fn present(&self, s: &mut DialogState, node: Node) -> SystemMove {
        let g = &*self.graph;
        s.visited.insert(node);
        s.current = node;
        let parent = g.parent(node).expect("only non-root components are presented");
        SystemMove::Argue {
            premise: g.id(node).to_owned(),
            conclusion: g.id(parent).to_owned(),
            relation: g.relation(node).expect("non-root"),
        }
    }

    pub fn serialize_state(&self, s: &DialogState) -> Vec<u8> {
        let g = &*self.graph;
        let record = StateRecord {
            schema_version: STATE_SCHEMA_VERSION,
            current: g.id(s.current).to_owned(),
            visited: s.visited.iter().map(|n| g.id(n).to_owned()).collect(),
            feedback: s.feedback.iter_set().map(|(n, f)| (g.id(n).to_owned(), f)).collect(),
            prior: s.prior,
            pending: s.pending.clone(),
            seed: s.seed,
            rng: s.rng.clone(),
            turn: s.turn,
        };
        serde_json::to_vec(&record).expect("state is always serializable")
    }

    pub fn restore_state(&self, blob: &[u8]) -> Result<DialogState, CorruptState> {
        let g = &*self.graph;
        let record: StateRecord = serde_json::from_slice(blob)?;
        if record.schema_version != STATE_SCHEMA_VERSION {
            return Err(CorruptState::Version {
                found: record.schema_version,
                expected: STATE_SCHEMA_VERSION,
            });
        }
        let lookup = |id: &str| g.lookup(id).map_err(|e| CorruptState::Inconsistent(e.to_string()));
        let mut visited = Visited::new(g);
        for id in &record.visited {
            if !visited.insert(lookup(id)?) {
                return Err(CorruptState::Inconsistent(format!("`{id}` visited twice")));
            }
        }
        if visited.as_slice().first() != Some(&g.root()) {
            return Err(CorruptState::Inconsistent("root must be visited first".into()));
        }
        let current = lookup(&record.current)?;
        if !visited.contains(current) {
            return Err(CorruptState::Inconsistent("current node not visited".into()));
        }
        let mut feedback = FeedbackMap::new(g);
        for (id, f) in &record.feedback {
            let node = lookup(id)?;
            feedback
                .set(g, node, *f, &visited)
                .map_err(|e| CorruptState::Inconsistent(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&record.prior) {
            return Err(CorruptState::Inconsistent(format!("prior {} out of range", record.prior)));
        }
        Ok(DialogState {
            current,
            visited,
            feedback,
            prior: record.prior,
            pending: record.pending,
            seed: record.seed,
            rng: record.rng,
            turn: record.turn,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    schema_version: u32,
    current: String,
    visited: Vec<String>,
    feedback: BTreeMap<String, Feedback>,
    prior: f64,
    pending: Option<PendingIntervention>,
    seed: u64,
    rng: ChaCha8Rng,
    turn: u64,
}
