//! Mapping free text onto user speech acts.
//!
//! The bundled classifier is an ordered list of regular-expression rules
//! loaded from a TOML file (see `data/rules.toml`). Argument references in
//! feedback utterances are resolved with a token-overlap similarity score.
//! Anything implementing [`IntentClassifier`] can replace the rule set.

use std::collections::BTreeSet;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{DialogState, UserAct, UserActKind};
use crate::graph::{ArgumentGraph, Node};

pub const DEFAULT_RULES: &str = include_str!("../data/rules.toml");

/// Outcome of classifying one utterance. `act` is `None` when nothing matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentResult {
    pub act: Option<UserAct>,
    pub confidence: f64,
    pub pattern: Option<String>,
}

impl IntentResult {
    pub fn unrecognized() -> Self {
        IntentResult {
            act: None,
            confidence: 0.0,
            pattern: None,
        }
    }

    pub fn kind(&self) -> Option<UserActKind> {
        self.act.as_ref().map(UserAct::kind)
    }

    pub fn target(&self) -> Option<&str> {
        match self.act.as_ref()? {
            UserAct::WhyPro { target }
            | UserAct::WhyCon { target }
            | UserAct::Agree { target }
            | UserAct::Disagree { target } => Some(target),
            _ => None,
        }
    }

    pub fn is_recognized(&self) -> bool {
        self.act.is_some()
    }
}

pub trait IntentClassifier: Send + Sync {
    fn classify(&self, text: &str, graph: &ArgumentGraph, state: &DialogState) -> IntentResult;
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rules file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("rule `{rule}`: bad pattern: {source}")]
    Pattern { rule: String, source: regex::Error },
    #[error("rule `{rule}`: confidence {value} outside [0, 1]")]
    Confidence { rule: String, value: f64 },
    #[error("rule `{0}` has no patterns")]
    NoPatterns(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum When {
    Pending,
    Idle,
    Any,
}

#[derive(Debug, Deserialize)]
struct RuleSpec {
    id: String,
    act: UserActKind,
    #[serde(default = "any")]
    when: When,
    confidence: f64,
    patterns: Vec<String>,
}

fn any() -> When {
    When::Any
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    #[allow(dead_code)]
    version: u32,
    rule: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
struct Rule {
    id: String,
    act: UserActKind,
    when: When,
    confidence: f64,
    patterns: Vec<Regex>,
}

/// Ordered pattern rules; first match wins.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    rules: Vec<Rule>,
}

impl RuleClassifier {
    pub fn from_toml(source: &str) -> Result<Self, RulesError> {
        let file: RulesFile = toml::from_str(source)?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for spec in file.rule {
            if !(0.0..=1.0).contains(&spec.confidence) {
                return Err(RulesError::Confidence {
                    rule: spec.id,
                    value: spec.confidence,
                });
            }
            if spec.patterns.is_empty() {
                return Err(RulesError::NoPatterns(spec.id));
            }
            let patterns = spec
                .patterns
                .iter()
                .map(|p| {
                    RegexBuilder::new(p)
                        .case_insensitive(true)
                        .build()
                        .map_err(|source| RulesError::Pattern {
                            rule: spec.id.clone(),
                            source,
                        })
                })
                .collect::<Result<_, _>>()?;
            rules.push(Rule {
                id: spec.id,
                act: spec.act,
                when: spec.when,
                confidence: spec.confidence,
                patterns,
            });
        }
        Ok(RuleClassifier { rules })
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_RULES).expect("bundled rules are valid")
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.id.as_str())
    }
}

impl Default for RuleClassifier {
    fn default() -> Self {
        Self::bundled()
    }
}

fn normalize(text: &str) -> String {
    text.trim().replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

/// Pro/con requests address the current node, or its parent at a leaf.
fn request_target(graph: &ArgumentGraph, state: &DialogState) -> Node {
    let cur = state.current();
    if graph.is_leaf(cur) {
        graph.parent(cur).unwrap_or(cur)
    } else {
        cur
    }
}

/// Feedback targets the current node unless the text clearly names another
/// presented component.
fn feedback_target(text: &str, graph: &ArgumentGraph, state: &DialogState) -> Node {
    const MIN_SCORE: f64 = 0.5;
    let others: Vec<Node> = state.visited().iter().filter(|&n| n != state.current()).collect();
    if others.is_empty() || tokens(text).len() < 3 {
        return state.current();
    }
    let ranked = similarity(text, graph, &others);
    match ranked.first() {
        Some(&(node, score)) if score >= MIN_SCORE => node,
        _ => state.current(),
    }
}

impl IntentClassifier for RuleClassifier {
    fn classify(&self, text: &str, graph: &ArgumentGraph, state: &DialogState) -> IntentResult {
        let norm = normalize(text);
        if norm.is_empty() {
            return IntentResult::unrecognized();
        }
        let pending = state.pending().is_some();
        for rule in &self.rules {
            let applies = match rule.when {
                When::Any => true,
                When::Pending => pending,
                When::Idle => !pending,
            };
            if !applies || !rule.patterns.iter().any(|p| p.is_match(&norm)) {
                continue;
            }
            let id = |n: Node| graph.id(n).to_owned();
            let act = match rule.act {
                UserActKind::WhyPro => UserAct::WhyPro {
                    target: id(request_target(graph, state)),
                },
                UserActKind::WhyCon => UserAct::WhyCon {
                    target: id(request_target(graph, state)),
                },
                UserActKind::LevelUp => UserAct::LevelUp,
                UserActKind::Agree => UserAct::Agree {
                    target: id(feedback_target(text, graph, state)),
                },
                UserActKind::Disagree => UserAct::Disagree {
                    target: id(feedback_target(text, graph, state)),
                },
                UserActKind::Confirm => UserAct::Confirm,
                UserActKind::Reject => UserAct::Reject,
            };
            return IntentResult {
                act: Some(act),
                confidence: rule.confidence,
                pattern: Some(rule.id.clone()),
            };
        }
        IntentResult::unrecognized()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "also", "an", "and", "are", "as", "at", "be", "because", "been", "but", "by", "can", "do",
    "does", "for", "from", "had", "has", "have", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me",
    "more", "most", "much", "my", "of", "on", "one", "or", "so", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "to", "too", "very", "was", "we", "were", "what",
    "when", "which", "who", "will", "with", "would", "you", "your",
];

fn stem(word: &str) -> String {
    let w = word;
    if w.len() > 5 {
        for (suffix, repl) in [("ies", "y"), ("ing", ""), ("ers", "er"), ("ed", ""), ("es", ""), ("ly", "")] {
            if let Some(base) = w.strip_suffix(suffix) {
                return format!("{base}{repl}");
            }
        }
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        return w[..w.len() - 1].to_owned();
    }
    w.to_owned()
}

/// Content-word stems of `text`.
pub fn tokens(text: &str) -> BTreeSet<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(stem)
        .collect()
}

/// Dice overlap of content-word stems, in [0, 1].
pub fn similarity_score(a: &str, b: &str) -> f64 {
    if normalize(a) == normalize(b) {
        return 1.0;
    }
    let ta = tokens(a);
    let tb = tokens(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let shared = ta.intersection(&tb).count();
    2.0 * shared as f64 / (ta.len() + tb.len()) as f64
}

/// Candidates ranked by similarity to `text`, best first; ties by component id.
pub fn similarity(text: &str, graph: &ArgumentGraph, candidates: &[Node]) -> Vec<(Node, f64)> {
    let mut ranked: Vec<(Node, f64)> = candidates
        .iter()
        .map(|&n| (n, similarity_score(text, graph.text(n))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| graph.id(a.0).cmp(graph.id(b.0))));
    ranked
}
