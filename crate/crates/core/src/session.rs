//! Sessions: one turn pipeline (classify, step, render, log) per user.
//!
//! Every session keeps an append-only log of [`LogEntry`] records. The log
//! holds enough to rebuild the session from scratch with [`replay`], and a
//! replay with the original timestamps reproduces the log byte for byte.
//! [`SessionManager`] owns many sessions and serializes turns within each.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{DialogError, DialogManager, DialogState, SystemMove, UserAct, UserActKind};
use crate::engagement::{EngagementConfig, EngagementReport};
use crate::graph::{ArgumentGraph, Polarity, Relation};
use crate::intervention::InterventionDecision;
use crate::nlg::{TemplatePool, Utterance};
use crate::nlu::{IntentClassifier, IntentResult, RuleClassifier};
use crate::stance::{validate_prior, BadPrior, Feedback};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    #[default]
    Intervention,
    Control,
}

impl Condition {
    pub fn interventions(self) -> bool {
        self == Condition::Intervention
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Intervention => "intervention",
            Condition::Control => "control",
        })
    }
}

/// Source of log timestamps, in milliseconds.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now_millis(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Counts up by one per reading; for reproducible logs.
#[derive(Debug, Default)]
pub struct LogicalClock(AtomicU64);

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for LogicalClock {
    fn now_millis(&self) -> u64 {
        self.0.fetch_add(1, Ordering::Relaxed)
    }
}

/// Hands back recorded timestamps in order, then falls back to zero.
#[derive(Debug)]
pub struct ReplayClock(Mutex<VecDeque<u64>>);

impl ReplayClock {
    pub fn new(stamps: impl IntoIterator<Item = u64>) -> Self {
        ReplayClock(Mutex::new(stamps.into_iter().collect()))
    }
}

impl Clock for ReplayClock {
    fn now_millis(&self) -> u64 {
        self.0.lock().expect("clock lock").pop_front().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Open {
        session_id: String,
        corpus: String,
        condition: Condition,
        prior: f64,
        seed: u64,
        utterance: Utterance,
    },
    User {
        text: Option<String>,
        act: Option<UserAct>,
        confidence: f64,
        pattern: Option<String>,
    },
    System {
        reply: Option<SystemMove>,
        utterance: Utterance,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub schema_version: u32,
    /// Position in the log; strictly increasing from zero.
    pub turn: u64,
    pub timestamp: u64,
    pub actor: Actor,
    pub act: String,
    pub payload: Payload,
    pub engagement: EngagementReport,
    /// Overall stance e on the major claim at this point.
    pub stance: f64,
    pub decision: Option<InterventionDecision>,
}

/// What a client sends for one turn: free text or a pre-classified act.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Text(TextInput),
    Act(UserAct),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextInput {
    pub text: String,
}

impl Input {
    pub fn text(text: impl Into<String>) -> Self {
        Input::Text(TextInput { text: text.into() })
    }
}

impl From<UserAct> for Input {
    fn from(act: UserAct) -> Self {
        Input::Act(act)
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown corpus `{0}`")]
    UnknownCorpus(String),
    #[error(transparent)]
    BadPrior(#[from] BadPrior),
    #[error("session `{0}` is closed")]
    Closed(String),
    #[error(transparent)]
    Dialog(#[from] DialogError),
    #[error("session log: {0}")]
    Io(#[from] io::Error),
}

impl SessionError {
    /// Stable machine-readable error code for the wire format.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::UnknownCorpus(_) => "unknown_corpus",
            SessionError::BadPrior(_) => "bad_prior",
            SessionError::Closed(_) => "closed",
            SessionError::Dialog(DialogError::IllegalMove(_)) => "illegal_move",
            SessionError::Dialog(DialogError::ExhaustedBranch) => "exhausted_branch",
            SessionError::Dialog(DialogError::Protocol(_)) => "protocol_error",
            SessionError::Dialog(DialogError::UnknownId(_)) => "unknown_id",
            SessionError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub corpus: String,
    pub condition: Condition,
    pub prior: f64,
    pub seed: u64,
    pub created_at: u64,
    pub log_path: Option<PathBuf>,
    pub utterance: Utterance,
}

/// Changes caused by one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub newly_visited: Vec<String>,
    pub current: String,
    pub pending: Option<String>,
    pub feedback: Option<(String, Feedback)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReply {
    pub schema_version: u32,
    pub session_id: String,
    pub turn: u64,
    pub intent: IntentResult,
    pub reply: Option<SystemMove>,
    pub utterance: Utterance,
    pub delta: StateDelta,
    pub legal_moves: Vec<UserActKind>,
    pub engagement: EngagementReport,
    pub stance: f64,
    pub decision: Option<InterventionDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: String,
    pub text: String,
    pub parent: Option<String>,
    pub relation: Option<Relation>,
    pub polarity: Polarity,
    pub level: u32,
    pub visited: bool,
    pub current: bool,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    /// The arguing component.
    pub source: String,
    /// The component it supports or attacks.
    pub target: String,
    pub relation: Relation,
}

/// Read-only picture of a session for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub session_id: String,
    pub corpus: String,
    pub condition: Condition,
    pub prior: f64,
    pub turn: u64,
    pub closed: bool,
    pub current: String,
    /// Level-one claim whose subtree holds the current node; none at the root.
    pub claim: Option<String>,
    pub visited: Vec<String>,
    pub pending: Option<String>,
    pub legal_moves: Vec<UserActKind>,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
    pub engagement: EngagementReport,
    pub stance: f64,
}

/// Periodic persisted state; the log stays authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBlob {
    pub schema_version: u32,
    pub session_id: String,
    pub log_entries: u64,
    pub closed: bool,
    pub dialog: serde_json::Value,
    pub nlg_rng: ChaCha8Rng,
}

/// Everything a session needs besides its own state.
#[derive(Clone)]
pub struct SessionContext {
    pub corpus: String,
    pub graph: Arc<ArgumentGraph>,
    pub templates: Arc<TemplatePool>,
    pub classifier: Arc<dyn IntentClassifier>,
    pub engagement: EngagementConfig,
    pub clock: Arc<dyn Clock>,
}

impl SessionContext {
    /// Context with the bundled rules and templates and a logical clock.
    pub fn new(corpus: impl Into<String>, graph: Arc<ArgumentGraph>) -> Self {
        SessionContext {
            corpus: corpus.into(),
            graph,
            templates: Arc::new(TemplatePool::bundled()),
            classifier: Arc::new(RuleClassifier::bundled()),
            engagement: EngagementConfig::default(),
            clock: Arc::new(LogicalClock::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }
}

impl fmt::Debug for SessionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionContext")
            .field("corpus", &self.corpus)
            .field("nodes", &self.graph.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug)]
struct LogSink {
    file: File,
    state_path: PathBuf,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    ctx: SessionContext,
    condition: Condition,
    created_at: u64,
    manager: DialogManager,
    state: DialogState,
    nlg_rng: ChaCha8Rng,
    log: Vec<LogEntry>,
    sink: Option<LogSink>,
    log_path: Option<PathBuf>,
    state_every: u64,
    closed: bool,
}

fn nlg_rng_for(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl Session {
    /// Opens a session at the major claim and logs the opening line.
    pub fn open(
        id: impl Into<String>,
        ctx: SessionContext,
        condition: Condition,
        prior: f64,
        seed: u64,
    ) -> Result<Self, SessionError> {
        let prior = validate_prior(prior)?;
        let manager = DialogManager::new(ctx.graph.clone(), ctx.engagement, condition.interventions());
        let state = manager.start(prior, seed);
        let mut session = Session {
            id: id.into(),
            created_at: 0,
            condition,
            manager,
            state,
            nlg_rng: nlg_rng_for(seed),
            log: Vec::new(),
            sink: None,
            log_path: None,
            state_every: 0,
            closed: false,
            ctx,
        };
        let utterance = session.ctx.templates.render_claim(&session.ctx.graph, &mut session.nlg_rng);
        let entry = session.entry(
            Actor::System,
            "open",
            Payload::Open {
                session_id: session.id.clone(),
                corpus: session.ctx.corpus.clone(),
                condition,
                prior,
                seed,
                utterance,
            },
            None,
        );
        session.created_at = entry.timestamp;
        session.log.push(entry);
        Ok(session)
    }

    /// Starts mirroring the log to `dir/<id>.jsonl` and writing a state blob
    /// to `dir/<id>.state.json` every `state_every` entries (and on close).
    pub fn persist_to(&mut self, dir: &Path, state_every: u64) -> Result<(), SessionError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.jsonl", self.id));
        let mut file = OpenOptions::new().create(true).truncate(true).write(true).open(&path)?;
        for e in &self.log {
            write_entry(&mut file, e)?;
        }
        file.flush()?;
        self.sink = Some(LogSink {
            file,
            state_path: dir.join(format!("{}.state.json", self.id)),
        });
        self.log_path = Some(path);
        self.state_every = state_every;
        self.write_state_blob()?;
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn manager(&self) -> &DialogManager {
        &self.manager
    }

    pub fn state(&self) -> &DialogState {
        &self.state
    }

    pub fn graph(&self) -> &ArgumentGraph {
        &self.ctx.graph
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn record(&self) -> SessionRecord {
        let Payload::Open { utterance, seed, prior, .. } = &self.log[0].payload else {
            unreachable!("the first entry is always the opening");
        };
        SessionRecord {
            schema_version: LOG_SCHEMA_VERSION,
            session_id: self.id.clone(),
            corpus: self.ctx.corpus.clone(),
            condition: self.condition,
            prior: *prior,
            seed: *seed,
            created_at: self.created_at,
            log_path: self.log_path.clone(),
            utterance: utterance.clone(),
        }
    }

    fn entry(&self, actor: Actor, act: &str, payload: Payload, decision: Option<InterventionDecision>) -> LogEntry {
        self.entry_for(&self.state, actor, act, payload, decision)
    }

    fn entry_for(
        &self,
        state: &DialogState,
        actor: Actor,
        act: &str,
        payload: Payload,
        decision: Option<InterventionDecision>,
    ) -> LogEntry {
        let engagement = self.manager.engagement(state);
        LogEntry {
            schema_version: LOG_SCHEMA_VERSION,
            turn: self.log.len() as u64,
            timestamp: self.ctx.clock.now_millis(),
            actor,
            act: act.to_owned(),
            payload,
            stance: engagement.e,
            engagement,
            decision,
        }
    }

    fn append(&mut self, entries: Vec<LogEntry>) -> Result<(), SessionError> {
        if let Some(sink) = &mut self.sink {
            for e in &entries {
                write_entry(&mut sink.file, e)?;
            }
            sink.file.flush()?;
        }
        let before = self.log.len() as u64;
        self.log.extend(entries);
        let after = self.log.len() as u64;
        if self.state_every > 0 && before / self.state_every != after / self.state_every {
            self.write_state_blob()?;
        }
        Ok(())
    }

    pub fn state_blob(&self) -> StateBlob {
        StateBlob {
            schema_version: LOG_SCHEMA_VERSION,
            session_id: self.id.clone(),
            log_entries: self.log.len() as u64,
            closed: self.closed,
            dialog: serde_json::from_slice(&self.manager.serialize_state(&self.state))
                .expect("state serializes to JSON"),
            nlg_rng: self.nlg_rng.clone(),
        }
    }

    fn write_state_blob(&self) -> Result<(), SessionError> {
        let Some(sink) = &self.sink else { return Ok(()) };
        let tmp = sink.state_path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&self.state_blob()).expect("blob serializes"))?;
        fs::rename(&tmp, &sink.state_path)?;
        Ok(())
    }

    /// Runs one atomic turn. On error nothing is logged and the state is
    /// unchanged.
    pub fn post(&mut self, input: Input) -> Result<TurnReply, SessionError> {
        if self.closed {
            return Err(SessionError::Closed(self.id.clone()));
        }
        let (text, intent) = match input {
            Input::Text(t) => {
                let intent = self.ctx.classifier.classify(&t.text, &self.ctx.graph, &self.state);
                (Some(t.text), intent)
            }
            Input::Act(act) => (
                None,
                IntentResult {
                    act: Some(act),
                    confidence: 1.0,
                    pattern: None,
                },
            ),
        };
        let user_payload = Payload::User {
            text,
            act: intent.act.clone(),
            confidence: intent.confidence,
            pattern: intent.pattern.clone(),
        };
        let mut nlg_rng = self.nlg_rng.clone();
        let Some(act) = intent.act.clone() else {
            let utterance = self.ctx.templates.render_help(&mut nlg_rng);
            let user = self.entry(Actor::User, "unrecognized", user_payload, None);
            let mut system = self.entry(
                Actor::System,
                "help",
                Payload::System {
                    reply: None,
                    utterance: utterance.clone(),
                },
                None,
            );
            system.turn += 1;
            let turn = system.turn;
            self.append(vec![user, system])?;
            self.nlg_rng = nlg_rng;
            return Ok(self.reply(turn, intent, None, utterance, 0, None, None));
        };

        let (next, outcome) = self.manager.step(&self.state, &act)?;
        let utterance = self
            .ctx
            .templates
            .render(&outcome.reply, &self.ctx.graph, outcome.from, &mut nlg_rng)
            .map_err(DialogError::from)?;
        let user = self.entry(Actor::User, kind_name(act.kind()), user_payload, None);
        let system_act = system_name(&outcome.reply);
        let mut system = self.entry_for(
            &next,
            Actor::System,
            system_act,
            Payload::System {
                reply: Some(outcome.reply.clone()),
                utterance: utterance.clone(),
            },
            outcome.decision.clone(),
        );
        system.turn += 1;
        let turn = system.turn;
        self.append(vec![user, system])?;
        let visited_before = self.state.visited().len();
        self.state = next;
        self.nlg_rng = nlg_rng;
        let feedback = match &act {
            UserAct::Agree { target } => Some((target.clone(), Feedback::Agree)),
            UserAct::Disagree { target } => Some((target.clone(), Feedback::Disagree)),
            _ => None,
        };
        Ok(self.reply(
            turn,
            intent,
            Some(outcome.reply),
            utterance,
            visited_before,
            outcome.decision,
            feedback,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn reply(
        &self,
        turn: u64,
        intent: IntentResult,
        reply: Option<SystemMove>,
        utterance: Utterance,
        visited_before: usize,
        decision: Option<InterventionDecision>,
        feedback: Option<(String, Feedback)>,
    ) -> TurnReply {
        let g = &*self.ctx.graph;
        let visited = self.state.visited().as_slice();
        let from = if reply.is_some() { visited_before } else { visited.len() };
        let engagement = self.log.last().expect("log is never empty").engagement.clone();
        TurnReply {
            schema_version: LOG_SCHEMA_VERSION,
            session_id: self.id.clone(),
            turn,
            intent,
            reply,
            utterance,
            delta: StateDelta {
                newly_visited: visited[from..].iter().map(|&n| g.id(n).to_owned()).collect(),
                current: g.id(self.state.current()).to_owned(),
                pending: self.pending_suggestion(),
                feedback,
            },
            legal_moves: self.manager.legal_moves(&self.state).into_iter().collect(),
            stance: engagement.e,
            engagement,
            decision,
        }
    }

    fn pending_suggestion(&self) -> Option<String> {
        self.state.pending().and_then(|p| p.decision.suggested.clone())
    }

    pub fn snapshot(&self) -> Snapshot {
        let g = &*self.ctx.graph;
        let s = &self.state;
        let mut claim = Some(s.current()).filter(|&n| n != g.root());
        while let Some(n) = claim {
            match g.parent(n) {
                Some(p) if p != g.root() => claim = Some(p),
                _ => break,
            }
        }
        let nodes = g
            .nodes()
            .map(|n| NodeView {
                id: g.id(n).to_owned(),
                text: g.text(n).to_owned(),
                parent: g.parent(n).map(|p| g.id(p).to_owned()),
                relation: g.relation(n),
                polarity: g.polarity(n),
                level: g.level(n),
                visited: s.visited().contains(n),
                current: n == s.current(),
                feedback: s.feedback().get(n),
            })
            .collect();
        let edges = g
            .nodes()
            .filter_map(|n| {
                Some(EdgeView {
                    source: g.id(n).to_owned(),
                    target: g.id(g.parent(n)?).to_owned(),
                    relation: g.relation(n)?,
                })
            })
            .collect();
        let engagement = self.manager.engagement(s);
        Snapshot {
            schema_version: LOG_SCHEMA_VERSION,
            session_id: self.id.clone(),
            corpus: self.ctx.corpus.clone(),
            condition: self.condition,
            prior: s.prior(),
            turn: self.log.len() as u64,
            closed: self.closed,
            current: g.id(s.current()).to_owned(),
            claim: claim.map(|n| g.id(n).to_owned()),
            visited: s.visited().iter().map(|n| g.id(n).to_owned()).collect(),
            pending: self.pending_suggestion(),
            legal_moves: self.manager.legal_moves(s).into_iter().collect(),
            nodes,
            edges,
            stance: engagement.e,
            engagement,
        }
    }

    /// Appends the closing entry and writes a final state blob. Idempotent.
    pub fn close(&mut self) -> Result<(), SessionError> {
        if self.closed {
            return Ok(());
        }
        let entry = self.entry(Actor::System, "close", Payload::Close, None);
        self.append(vec![entry])?;
        self.closed = true;
        self.write_state_blob()
    }
}

fn write_entry(w: &mut impl Write, e: &LogEntry) -> io::Result<()> {
    serde_json::to_writer(&mut *w, e).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

fn kind_name(kind: UserActKind) -> &'static str {
    match kind {
        UserActKind::WhyPro => "why_pro",
        UserActKind::WhyCon => "why_con",
        UserActKind::LevelUp => "level_up",
        UserActKind::Agree => "agree",
        UserActKind::Disagree => "disagree",
        UserActKind::Confirm => "confirm",
        UserActKind::Reject => "reject",
    }
}

fn system_name(m: &SystemMove) -> &'static str {
    match m {
        SystemMove::Argue { .. } => "argue",
        SystemMove::JumpTo { .. } => "jump_to",
        SystemMove::Intervene { .. } => "intervene",
        SystemMove::Acknowledge { .. } => "acknowledge",
        SystemMove::Exhausted { .. } => "exhausted",
    }
}

/// Serializes a log as JSON lines.
pub fn encode_log(entries: &[LogEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in entries {
        write_entry(&mut out, e).expect("writing to a Vec cannot fail");
    }
    out
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: log schema version {found} is not supported")]
    Version { line: usize, found: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn read_log(reader: impl BufRead) -> Result<Vec<LogEntry>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        if entry.schema_version != LOG_SCHEMA_VERSION {
            return Err(LogError::Version {
                line: i + 1,
                found: entry.schema_version,
            });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogEntry>, LogError> {
    read_log(BufReader::new(File::open(path)?))
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log does not start with an opening entry")]
    MissingHeader,
    #[error("log was recorded on corpus `{found}`, replaying on `{expected}`")]
    CorpusMismatch { found: String, expected: String },
    #[error("turn {turn}: {source}")]
    Session { turn: u64, source: SessionError },
    #[error("replay diverged from the log at entry {0}")]
    Diverged(u64),
}

/// Rebuilds a session by re-running every user turn in `entries`.
///
/// Recorded timestamps are reused, so a faithful replay reproduces the log
/// exactly; any difference is reported as [`ReplayError::Diverged`].
pub fn replay(ctx: SessionContext, entries: &[LogEntry]) -> Result<Session, ReplayError> {
    let Some(LogEntry {
        payload:
            Payload::Open {
                session_id,
                corpus,
                condition,
                prior,
                seed,
                ..
            },
        ..
    }) = entries.first()
    else {
        return Err(ReplayError::MissingHeader);
    };
    if *corpus != ctx.corpus {
        return Err(ReplayError::CorpusMismatch {
            found: corpus.clone(),
            expected: ctx.corpus.clone(),
        });
    }
    let ctx = ctx.with_clock(Arc::new(ReplayClock::new(entries.iter().map(|e| e.timestamp))));
    let mut session = Session::open(session_id.clone(), ctx, *condition, *prior, *seed)
        .map_err(|source| ReplayError::Session { turn: 0, source })?;
    for e in &entries[1..] {
        match &e.payload {
            Payload::User { text, act, .. } => {
                let input = match (text, act) {
                    (Some(t), _) => Input::text(t.clone()),
                    (None, Some(a)) => Input::Act(a.clone()),
                    (None, None) => return Err(ReplayError::Diverged(e.turn)),
                };
                session
                    .post(input)
                    .map_err(|source| ReplayError::Session { turn: e.turn, source })?;
            }
            Payload::Close => session
                .close()
                .map_err(|source| ReplayError::Session { turn: e.turn, source })?,
            Payload::System { .. } | Payload::Open { .. } => {}
        }
    }
    if let Some(i) = session.log.iter().zip(entries).position(|(a, b)| a != b) {
        return Err(ReplayError::Diverged(i as u64));
    }
    if session.log.len() != entries.len() {
        return Err(ReplayError::Diverged(session.log.len().min(entries.len()) as u64));
    }
    Ok(session)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Fresh entropy per session.
    #[default]
    Random,
    /// `base + n` for the n-th session created by this manager.
    Sequential { base: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub log_dir: Option<PathBuf>,
    pub default_condition: Condition,
    pub seed_policy: SeedPolicy,
    /// Write a state blob every this many log entries; 0 only on close.
    pub state_every: u64,
    pub engagement: EngagementConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    pub corpus: String,
    #[serde(default)]
    pub condition: Option<Condition>,
    pub prior: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Concurrent registry of sessions over a fixed set of corpora.
pub struct SessionManager {
    corpora: BTreeMap<String, Arc<ArgumentGraph>>,
    templates: Arc<TemplatePool>,
    classifier: Arc<dyn IntentClassifier>,
    clock: Arc<dyn Clock>,
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    created: AtomicU64,
}

impl fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionManager")
            .field("corpora", &self.corpora.keys().collect::<Vec<_>>())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl SessionManager {
    pub fn new(config: ServiceConfig) -> Self {
        SessionManager {
            corpora: BTreeMap::new(),
            templates: Arc::new(TemplatePool::bundled()),
            classifier: Arc::new(RuleClassifier::bundled()),
            clock: Arc::new(SystemClock),
            config,
            sessions: RwLock::new(HashMap::new()),
            created: AtomicU64::new(0),
        }
    }

    pub fn with_corpus(mut self, id: impl Into<String>, graph: Arc<ArgumentGraph>) -> Self {
        self.corpora.insert(id.into(), graph);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_templates(mut self, templates: TemplatePool) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn IntentClassifier>) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn corpora(&self) -> impl Iterator<Item = &str> {
        self.corpora.keys().map(String::as_str)
    }

    pub fn context(&self, corpus: &str) -> Result<SessionContext, SessionError> {
        let graph = self
            .corpora
            .get(corpus)
            .ok_or_else(|| SessionError::UnknownCorpus(corpus.to_owned()))?;
        Ok(SessionContext {
            corpus: corpus.to_owned(),
            graph: graph.clone(),
            templates: self.templates.clone(),
            classifier: self.classifier.clone(),
            engagement: self.config.engagement,
            clock: self.clock.clone(),
        })
    }

    pub fn create_session(&self, req: CreateRequest) -> Result<SessionRecord, SessionError> {
        let ctx = self.context(&req.corpus)?;
        let prior = validate_prior(req.prior)?;
        let n = self.created.fetch_add(1, Ordering::Relaxed);
        let seed = req.seed.unwrap_or_else(|| match self.config.seed_policy {
            SeedPolicy::Random => rand::random(),
            SeedPolicy::Sequential { base } => base.wrapping_add(n),
        });
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut session = Session::open(id.clone(), ctx, req.condition.unwrap_or(self.config.default_condition), prior, seed)?;
        if let Some(dir) = &self.config.log_dir {
            session.persist_to(dir, self.config.state_every)?;
        }
        let record = session.record();
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(record)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_owned()))
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Result<T, SessionError> {
        let s = self.session(id)?;
        let mut guard = s.lock().unwrap_or_else(|e| e.into_inner());
        Ok(f(&mut guard))
    }

    /// One turn; concurrent calls on the same session run one at a time.
    pub fn post_utterance(&self, id: &str, input: Input) -> Result<TurnReply, SessionError> {
        self.with_session(id, |s| s.post(input))?
    }

    pub fn post_feedback(&self, id: &str, target: &str, feedback: Feedback) -> Result<TurnReply, SessionError> {
        let act = match feedback {
            Feedback::Agree => UserAct::Agree { target: target.to_owned() },
            Feedback::Disagree => UserAct::Disagree { target: target.to_owned() },
            Feedback::Neutral => {
                return Err(DialogError::IllegalMove("neutral is the default and cannot be posted".into()).into())
            }
        };
        self.post_utterance(id, Input::Act(act))
    }

    pub fn get_state(&self, id: &str) -> Result<Snapshot, SessionError> {
        self.with_session(id, |s| s.snapshot())
    }

    pub fn get_log(&self, id: &str) -> Result<Vec<LogEntry>, SessionError> {
        self.with_session(id, |s| s.log().to_vec())
    }

    pub fn close(&self, id: &str) -> Result<SessionRecord, SessionError> {
        self.with_session(id, |s| s.close().map(|_| s.record()))?
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session table lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_corpus_str;

    const CORPUS: &str = r#"{"id":"r","parent":"","relation":"","text":"Cars should be banned."}
{"id":"a","parent":"r","relation":"support","text":"Air gets cleaner."}
{"id":"b","parent":"r","relation":"attack","text":"Shops lose customers."}
{"id":"a1","parent":"a","relation":"support","text":"Asthma rates drop."}
"#;

    fn ctx() -> SessionContext {
        SessionContext::new("test", Arc::new(load_corpus_str(CORPUS).unwrap()))
    }

    #[test]
    fn failed_turn_leaves_no_trace() {
        let mut s = Session::open("s", ctx(), Condition::Control, 0.5, 1).unwrap();
        let before = (s.state().clone(), s.log().len());
        let err = s.post(Input::Act(UserAct::Confirm)).unwrap_err();
        assert_eq!(err.code(), "protocol_error");
        assert_eq!((s.state().clone(), s.log().len()), before);
    }

    #[test]
    fn unrecognized_text_gets_help() {
        let mut s = Session::open("s", ctx(), Condition::Control, 0.5, 1).unwrap();
        let r = s.post(Input::text("flibbertigibbet")).unwrap();
        assert!(r.reply.is_none());
        assert!(!r.intent.is_recognized());
        assert_eq!(s.log().iter().map(|e| e.act.as_str()).collect::<Vec<_>>(), ["open", "unrecognized", "help"]);
        assert!(s.log().windows(2).all(|w| w[0].turn < w[1].turn));
    }

    #[test]
    fn replay_reproduces_log_and_state() {
        let mut s = Session::open("s", ctx().with_clock(Arc::new(SystemClock)), Condition::Intervention, 0.8, 9).unwrap();
        for text in ["Why is that?", "I agree", "Tell me more", "hmm", "yes", "go back"] {
            let _ = s.post(Input::text(text));
        }
        s.close().unwrap();
        let bytes = encode_log(s.log());
        let parsed = read_log(&bytes[..]).unwrap();
        let again = replay(ctx(), &parsed).unwrap();
        assert_eq!(encode_log(again.log()), bytes);
        assert_eq!(again.state_blob(), s.state_blob());
    }

    #[test]
    fn input_wire_forms() {
        let t: Input = serde_json::from_str(r#"{"text":"why?"}"#).unwrap();
        assert_eq!(t, Input::text("why?"));
        let a: Input = serde_json::from_str(r#"{"act":"why_pro","target":"r"}"#).unwrap();
        assert_eq!(a, Input::Act(UserAct::WhyPro { target: "r".into() }));
    }

    #[test]
    fn snapshot_tracks_claim_subtree() {
        let mut s = Session::open("s", ctx(), Condition::Control, 0.5, 3).unwrap();
        let snap = s.snapshot();
        assert_eq!(snap.claim, None);
        assert_eq!(snap.visited, ["r"]);
        assert_eq!(snap.edges.len(), 3);
        s.post(Input::Act(UserAct::WhyPro { target: "r".into() })).unwrap();
        s.post(Input::Act(UserAct::WhyPro { target: "a".into() })).unwrap();
        let snap = s.snapshot();
        assert_eq!(snap.current, "a1");
        assert_eq!(snap.claim.as_deref(), Some("a"));
        assert_eq!(snap.nodes.iter().filter(|n| n.current).count(), 1);
    }
}
