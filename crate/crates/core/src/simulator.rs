//! Synthetic users and the two-condition study.
//!
//! Each simulated user drives a real [`Session`] with structured acts. Users
//! hold a side derived from their prior, ask for their own side with
//! probability `p_same`, accept suggestions with probability `p_accept`
//! and give feedback that agrees with their side. Every decision stream has
//! its own generator, so for example the acceptance coin never shifts the
//! other draws.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{SystemMove, UserAct, UserActKind};
use crate::graph::{ArgumentGraph, Polarity};
use crate::session::{Condition, Input, LogEntry, Payload, Session, SessionContext, SessionError};
use crate::stance::likert_to_prior;
use crate::stats::{self, MannWhitney, StatsError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorDist {
    /// Weights over the five Likert answers.
    Likert { weights: [f64; 5] },
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl PriorDist {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            PriorDist::Fixed { value } => *value,
            PriorDist::Uniform { low, high } => {
                if low == high {
                    *low
                } else {
                    rng.random_range(*low..=*high)
                }
            }
            PriorDist::Likert { weights } => {
                let total: f64 = weights.iter().sum();
                let mut x = rng.random::<f64>() * total;
                for (i, w) in weights.iter().enumerate() {
                    if x < *w {
                        return likert_to_prior(i as u8 + 1).expect("1..=5");
                    }
                    x -= w;
                }
                likert_to_prior(5).expect("5 is valid")
            }
        }
    }

    fn validate(&self) -> Result<(), PolicyError> {
        let ok = match self {
            PriorDist::Fixed { value } => (0.0..=1.0).contains(value),
            PriorDist::Uniform { low, high } => (0.0..=1.0).contains(low) && (0.0..=1.0).contains(high) && low <= high,
            PriorDist::Likert { weights } => {
                weights.iter().all(|w| w.is_finite() && *w >= 0.0) && weights.iter().sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PolicyError::Invalid("prior distribution out of range".into()))
        }
    }
}

fn default_p_accept() -> f64 {
    0.76
}

fn default_n_min() -> u32 {
    10
}

fn default_max_turns() -> u32 {
    200
}

fn default_prior() -> PriorDist {
    PriorDist::Likert {
        weights: [1.0, 1.0, 0.0, 1.0, 1.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPolicy {
    pub name: String,
    /// Probability of asking for the user's own side.
    pub p_same: f64,
    /// Probability of confirming a suggested opposite-side argument.
    #[serde(default = "default_p_accept")]
    pub p_accept: f64,
    /// Probability of giving feedback after hearing an argument.
    #[serde(default)]
    pub p_feedback: f64,
    /// Probability of moving up one level instead of asking.
    #[serde(default)]
    pub p_level_up: f64,
    /// Probability of continuing once `n_min` arguments have been heard.
    #[serde(default)]
    pub p_continue: f64,
    #[serde(default = "default_prior")]
    pub prior: PriorDist,
    /// Arguments to hear before the user may stop.
    #[serde(default = "default_n_min")]
    pub n_min: u32,
    /// Hard cap on user turns per session.
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
}

impl UserPolicy {
    /// The confirmation-biased user: mostly asks for its own side.
    pub fn confirmation_biased() -> Self {
        UserPolicy {
            name: "confirmation-biased".into(),
            p_same: 0.8,
            p_accept: default_p_accept(),
            p_feedback: 0.5,
            p_level_up: 0.0,
            p_continue: 0.0,
            prior: default_prior(),
            n_min: default_n_min(),
            max_turns: default_max_turns(),
        }
    }

    pub fn from_toml(source: &str) -> Result<Self, PolicyError> {
        let p: UserPolicy = toml::from_str(source)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for (name, p) in [
            ("p_same", self.p_same),
            ("p_accept", self.p_accept),
            ("p_feedback", self.p_feedback),
            ("p_level_up", self.p_level_up),
            ("p_continue", self.p_continue),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PolicyError::Invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if self.p_continue >= 1.0 {
            return Err(PolicyError::Invalid("p_continue must be below 1".into()));
        }
        if self.n_min < 1 {
            return Err(PolicyError::Invalid("n_min must be at least 1".into()));
        }
        self.prior.validate()
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid policy: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("n per condition must be at least 1")]
    NoSessions,
    #[error("session {index} ({condition}): {source}")]
    Session {
        index: usize,
        condition: Condition,
        source: SessionError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub index: usize,
    pub condition: Condition,
    pub seed: u64,
    pub prior: f64,
    /// Side the synthetic user holds.
    pub side: Polarity,
    pub rue: f64,
    /// Final overall stance on the major claim.
    pub e: f64,
    pub pro_heard: u32,
    pub con_heard: u32,
    /// `pro_heard / con_heard`; absent when no con argument was heard.
    pub ratio: Option<f64>,
    pub opposing: bool,
    pub offered: u32,
    pub accepted: u32,
    pub user_turns: u32,
    pub exhausted: bool,
}

/// Whether a user heard more arguments against their stance than for it.
/// A neutral stance or equal counts never qualify.
pub fn opposing_engagement(e: f64, pro_heard: u32, con_heard: u32) -> bool {
    (e < 0.5 && pro_heard > con_heard) || (e > 0.5 && con_heard > pro_heard)
}

/// Figures recomputed from a session log alone.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFigures {
    pub rue: f64,
    pub e: f64,
    pub pro_heard: u32,
    pub con_heard: u32,
    pub opposing: bool,
    pub offered: u32,
    pub accepted: u32,
}

pub fn figures_from_log(graph: &ArgumentGraph, log: &[LogEntry]) -> Option<LogFigures> {
    let last = log.last()?;
    let (mut pro, mut con, mut offered, mut accepted) = (0, 0, 0, 0);
    let mut awaiting = false;
    for e in log {
        match &e.payload {
            Payload::System {
                reply: Some(SystemMove::Argue { premise, .. }),
                ..
            } => match graph.polarity(graph.lookup(premise).ok()?) {
                Polarity::Pro => pro += 1,
                Polarity::Con => con += 1,
            },
            Payload::System {
                reply: Some(SystemMove::Intervene { .. }),
                ..
            } => {
                offered += 1;
                awaiting = true;
            }
            Payload::User {
                act: Some(UserAct::Confirm),
                ..
            } if awaiting => {
                accepted += 1;
                awaiting = false;
            }
            Payload::User {
                act: Some(UserAct::Reject),
                ..
            } => awaiting = false,
            _ => {}
        }
    }
    let e = last.engagement.e;
    Some(LogFigures {
        rue: last.engagement.rue,
        e,
        pro_heard: pro,
        con_heard: con,
        opposing: opposing_engagement(e, pro, con),
        offered,
        accepted,
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

// Streams 0 and 1 belong to the session (dialogue choices and templates).
const STREAM_PRIOR: u64 = 2;
const STREAM_ACTIONS: u64 = 3;
const STREAM_ACCEPT: u64 = 4;
const STREAM_FEEDBACK: u64 = 5;
const STREAM_SIDE: u64 = 6;

/// Seed of the `index`-th session; identical across conditions so the two
/// arms are paired.
pub fn session_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Runs one synthetic session and returns the result and the session.
pub fn simulate_session(
    ctx: SessionContext,
    policy: &UserPolicy,
    condition: Condition,
    index: usize,
    seed: u64,
) -> Result<(SessionResult, Session), SessionError> {
    let prior = policy.prior.sample(&mut stream(seed, STREAM_PRIOR));
    let side = if prior > 0.5 {
        Polarity::Pro
    } else if prior < 0.5 {
        Polarity::Con
    } else if stream(seed, STREAM_SIDE).random_bool(0.5) {
        Polarity::Pro
    } else {
        Polarity::Con
    };
    let mut actions = stream(seed, STREAM_ACTIONS);
    let mut accept = stream(seed, STREAM_ACCEPT);
    let mut feedback = stream(seed, STREAM_FEEDBACK);

    let mut session = Session::open(format!("sim-{condition}-{index}"), ctx, condition, prior, seed)?;
    let graph = session.manager().graph_arc().clone();
    let (mut heard, mut turns, mut offered, mut accepted) = (0u32, 0u32, 0u32, 0u32);
    let mut exhausted = false;
    let mut last_argued: Option<String> = None;

    while turns < policy.max_turns {
        let mgr = session.manager();
        let state = session.state();
        let legal = mgr.legal_moves(state);
        let act = if legal.contains(&UserActKind::Confirm) {
            offered += 1;
            if accept.random_bool(policy.p_accept) {
                accepted += 1;
                UserAct::Confirm
            } else {
                UserAct::Reject
            }
        } else if let Some(target) = last_argued.take() {
            // Feedback is its own turn, right after the argument.
            if feedback.random_bool(policy.p_feedback) {
                let node = graph.lookup(&target).expect("argued ids exist");
                if graph.polarity(node) == side {
                    UserAct::Agree { target }
                } else {
                    UserAct::Disagree { target }
                }
            } else {
                continue;
            }
        } else {
            if heard >= policy.n_min && !actions.random_bool(policy.p_continue) {
                break;
            }
            if mgr.is_exhausted(state) {
                exhausted = true;
                break;
            }
            let target = mgr.request_target(state);
            let wants = if actions.random_bool(policy.p_same) { side } else { side.opposite() };
            let go_up = legal.contains(&UserActKind::LevelUp) && actions.random_bool(policy.p_level_up);
            let pro = wants == graph.polarity(target);
            let (first, second) = if pro {
                (UserActKind::WhyPro, UserActKind::WhyCon)
            } else {
                (UserActKind::WhyCon, UserActKind::WhyPro)
            };
            let tid = graph.id(target).to_owned();
            if go_up {
                UserAct::LevelUp
            } else if legal.contains(&first) {
                UserAct::why(tid, first == UserActKind::WhyPro)
            } else if legal.contains(&second) {
                UserAct::why(tid, second == UserActKind::WhyPro)
            } else if legal.contains(&UserActKind::LevelUp) {
                UserAct::LevelUp
            } else {
                exhausted = true;
                break;
            }
        };
        turns += 1;
        let reply = session.post(Input::Act(act))?;
        match reply.reply {
            Some(SystemMove::Argue { premise, .. }) => {
                heard += 1;
                last_argued = Some(premise);
            }
            Some(SystemMove::Exhausted { .. }) => {}
            _ => {}
        }
    }

    let fig = figures_from_log(&graph, session.log()).expect("log is never empty");
    let result = SessionResult {
        index,
        condition,
        seed,
        prior,
        side,
        rue: fig.rue,
        e: fig.e,
        pro_heard: fig.pro_heard,
        con_heard: fig.con_heard,
        ratio: (fig.con_heard > 0).then(|| fig.pro_heard as f64 / fig.con_heard as f64),
        opposing: fig.opposing,
        offered,
        accepted,
        user_turns: turns,
        exhausted,
    };
    Ok((result, session))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub n: usize,
    pub mean_rue: f64,
    pub sd_rue: f64,
    pub median_rue: f64,
    pub mean_e: f64,
    pub mean_pro_heard: f64,
    pub mean_con_heard: f64,
    pub opposing_share: f64,
    pub offered: u32,
    pub accepted: u32,
    pub acceptance_rate: Option<f64>,
}

impl ConditionSummary {
    fn of(results: &[&SessionResult]) -> Self {
        let rue: Vec<f64> = results.iter().map(|r| r.rue).collect();
        let col = |f: fn(&SessionResult) -> f64| stats::mean(&results.iter().map(|r| f(r)).collect::<Vec<_>>());
        let offered = results.iter().map(|r| r.offered).sum();
        let accepted = results.iter().map(|r| r.accepted).sum();
        ConditionSummary {
            n: results.len(),
            mean_rue: stats::mean(&rue),
            sd_rue: stats::std_dev(&rue),
            median_rue: stats::median(&rue),
            mean_e: col(|r| r.e),
            mean_pro_heard: col(|r| r.pro_heard as f64),
            mean_con_heard: col(|r| r.con_heard as f64),
            opposing_share: results.iter().filter(|r| r.opposing).count() as f64 / results.len() as f64,
            offered,
            accepted,
            acceptance_rate: (offered > 0).then(|| accepted as f64 / offered as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RueTest {
    /// Intervention is sample a, control is sample b.
    #[serde(flatten)]
    pub result: Option<MannWhitney>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub schema_version: u32,
    pub corpus: String,
    pub policy: UserPolicy,
    pub n_per_condition: usize,
    pub base_seed: u64,
    pub summaries: BTreeMap<String, ConditionSummary>,
    pub rue_test: Option<RueTest>,
    pub sessions: Vec<SessionResult>,
}

impl StudyResult {
    pub fn summary(&self, c: Condition) -> Option<&ConditionSummary> {
        self.summaries.get(&c.to_string())
    }

    pub fn rue(&self, c: Condition) -> Vec<f64> {
        self.sessions.iter().filter(|r| r.condition == c).map(|r| r.rue).collect()
    }

    pub fn write_json(&self, w: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    /// One row per session, for plotting.
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.sessions {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_files(&self, json: &Path, csv_path: &Path) -> std::io::Result<()> {
        self.write_json(std::fs::File::create(json)?).map_err(std::io::Error::other)?;
        self.write_csv(std::fs::File::create(csv_path)?).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n_per_condition: usize,
    pub base_seed: u64,
    /// Run only these conditions; both by default.
    pub conditions: Vec<Condition>,
}

impl StudyConfig {
    pub fn new(n_per_condition: usize, base_seed: u64) -> Self {
        StudyConfig {
            n_per_condition,
            base_seed,
            conditions: vec![Condition::Intervention, Condition::Control],
        }
    }
}

/// Runs `n` sessions per condition in parallel; results are ordered by
/// condition, then index, whatever the thread schedule.
pub fn run_study(ctx: &SessionContext, policy: &UserPolicy, cfg: &StudyConfig) -> Result<StudyResult, SimError> {
    policy.validate()?;
    if cfg.n_per_condition == 0 {
        return Err(SimError::NoSessions);
    }
    let jobs: Vec<(Condition, usize)> = cfg
        .conditions
        .iter()
        .flat_map(|&c| (0..cfg.n_per_condition).map(move |i| (c, i)))
        .collect();
    let sessions = jobs
        .par_iter()
        .map(|&(condition, index)| {
            let ctx = ctx.clone().with_clock(Arc::new(crate::session::LogicalClock::new()));
            simulate_session(ctx, policy, condition, index, session_seed(cfg.base_seed, index))
                .map(|(r, _)| r)
                .map_err(|source| SimError::Session {
                    index,
                    condition,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut summaries = BTreeMap::new();
    for &c in &cfg.conditions {
        let rows: Vec<&SessionResult> = sessions.iter().filter(|r| r.condition == c).collect();
        summaries.insert(c.to_string(), ConditionSummary::of(&rows));
    }
    let pick = |c| -> Vec<f64> { sessions.iter().filter(|r| r.condition == c).map(|r| r.rue).collect() };
    let rue_test = (cfg.conditions.contains(&Condition::Intervention) && cfg.conditions.contains(&Condition::Control))
        .then(|| match stats::mann_whitney_u(&pick(Condition::Intervention), &pick(Condition::Control)) {
            Ok(r) => RueTest {
                result: Some(r),
                error: None,
            },
            Err(e @ StatsError::DegenerateSample) | Err(e @ StatsError::EmptySample) | Err(e @ StatsError::NotANumber) => {
                RueTest {
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        });
    Ok(StudyResult {
        schema_version: REPORT_SCHEMA_VERSION,
        corpus: ctx.corpus.clone(),
        policy: policy.clone(),
        n_per_condition: cfg.n_per_condition,
        base_seed: cfg.base_seed,
        summaries,
        rue_test,
        sessions,
    })
}
