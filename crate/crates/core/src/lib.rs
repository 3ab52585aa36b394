//! Argumentation dialogue engine.
//!
//! Users explore a bipolar argument tree through a small set of speech acts
//! while the engine tracks their stance and reflective engagement (RUE) and
//! may suggest arguments from the other side. The crate also contains a
//! synthetic-user simulator for comparing sessions with and without those
//! suggestions.

pub mod dialog;
pub mod engagement;
pub mod graph;
pub mod intervention;
pub mod nlg;
pub mod nlu;
pub mod session;
pub mod simulator;
pub mod stance;
pub mod stats;

pub use dialog::{DialogError, DialogManager, DialogState, StepOutcome, SystemMove, UserAct, UserActKind};
pub use engagement::{rue, total_focus, EngagementConfig, EngagementReport, OmegaDirection};
pub use graph::{
    load_corpus_file, load_corpus_str, ArgumentGraph, Component, Frontier, Node, Polarity, Relation, Visited,
};
pub use intervention::{decide, InterventionDecision, SessionView};
pub use nlg::{TemplatePool, Utterance};
pub use nlu::{IntentClassifier, IntentResult, RuleClassifier};
pub use session::{
    replay, Condition, Input, LogEntry, SessionContext, SessionError, SessionManager, Snapshot, TurnReply,
};
pub use simulator::{run_study, StudyConfig, StudyResult, UserPolicy};
pub use stance::{estimate_stance, Feedback, FeedbackMap, StanceEstimate};
pub use stats::{mann_whitney_u, MannWhitney};
