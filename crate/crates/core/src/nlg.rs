//! Template-based rendering of system replies.
//!
//! Templates live in a per-locale TOML file (see `data/templates.en.toml`).
//! Argument text is always inserted verbatim, and the rendered
//! [`Utterance`] records where, so clients can highlight or recover it.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::SystemMove;
use crate::graph::{ArgumentGraph, Node, Relation};
use crate::stance::Feedback;

pub const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.en.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    Claim,
    ArgueSupport,
    ArgueAttack,
    Navigation,
    JumpTo,
    Intervene,
    AcknowledgeAgree,
    AcknowledgeDisagree,
    Exhausted,
    Help,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 10] = [
        TemplateKind::Claim,
        TemplateKind::ArgueSupport,
        TemplateKind::ArgueAttack,
        TemplateKind::Navigation,
        TemplateKind::JumpTo,
        TemplateKind::Intervene,
        TemplateKind::AcknowledgeAgree,
        TemplateKind::AcknowledgeDisagree,
        TemplateKind::Exhausted,
        TemplateKind::Help,
    ];

    pub fn key(self) -> &'static str {
        match self {
            TemplateKind::Claim => "claim",
            TemplateKind::ArgueSupport => "argue_support",
            TemplateKind::ArgueAttack => "argue_attack",
            TemplateKind::Navigation => "navigation",
            TemplateKind::JumpTo => "jump_to",
            TemplateKind::Intervene => "intervene",
            TemplateKind::AcknowledgeAgree => "acknowledge_agree",
            TemplateKind::AcknowledgeDisagree => "acknowledge_disagree",
            TemplateKind::Exhausted => "exhausted",
            TemplateKind::Help => "help",
        }
    }

    fn slots(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Claim => &["text"],
            TemplateKind::ArgueSupport | TemplateKind::ArgueAttack => &["preamble", "text", "conclusion"],
            TemplateKind::Navigation => &["conclusion"],
            TemplateKind::JumpTo | TemplateKind::AcknowledgeAgree | TemplateKind::AcknowledgeDisagree => &["target"],
            TemplateKind::Intervene | TemplateKind::Exhausted | TemplateKind::Help => &[],
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("no templates for `{0}` (at least two required)")]
    MissingTemplate(&'static str),
    #[error("template for `{kind}` uses unknown slot `{{{slot}}}`")]
    UnknownSlot { kind: &'static str, slot: String },
    #[error("template for `{0}` has an unterminated slot")]
    Unterminated(&'static str),
    #[error("intervention prompts must end with a question mark: `{0}`")]
    NotAQuestion(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    /// Byte range of the verbatim component text inside `text`.
    pub component: Option<Range<usize>>,
}

impl Utterance {
    pub fn component_text(&self) -> Option<&str> {
        self.component.clone().map(|r| &self.text[r])
    }
}

#[derive(Debug, Clone)]
pub struct TemplatePool {
    locale: String,
    templates: BTreeMap<TemplateKind, Vec<String>>,
}

#[derive(Deserialize)]
struct TemplateFile {
    #[allow(dead_code)]
    version: u32,
    locale: String,
    #[serde(flatten)]
    pools: BTreeMap<String, Vec<String>>,
}

/// Splits a template into literal text and `{slot}` names.
fn parse_template(t: &str) -> Option<Vec<(bool, &str)>> {
    let mut parts = Vec::new();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            parts.push((false, &rest[..open]));
        }
        let close = rest[open..].find('}')? + open;
        parts.push((true, &rest[open + 1..close]));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        parts.push((false, rest));
    }
    Some(parts)
}

impl TemplatePool {
    pub fn from_toml(source: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(source)?;
        let mut templates = BTreeMap::new();
        for kind in TemplateKind::ALL {
            let list = file.pools.get(kind.key()).cloned().unwrap_or_default();
            if list.len() < 2 {
                return Err(TemplateError::MissingTemplate(kind.key()));
            }
            for t in &list {
                let parts = parse_template(t).ok_or(TemplateError::Unterminated(kind.key()))?;
                for (is_slot, name) in parts {
                    if is_slot && !kind.slots().contains(&name) {
                        return Err(TemplateError::UnknownSlot {
                            kind: kind.key(),
                            slot: name.to_owned(),
                        });
                    }
                }
                if kind == TemplateKind::Intervene && !t.trim_end().ends_with('?') {
                    return Err(TemplateError::NotAQuestion(t.clone()));
                }
            }
            templates.insert(kind, list);
        }
        Ok(TemplatePool {
            locale: file.locale,
            templates,
        })
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn templates(&self, kind: TemplateKind) -> &[String] {
        &self.templates[&kind]
    }

    fn pick<R: Rng + ?Sized>(&self, kind: TemplateKind, rng: &mut R) -> &str {
        let list = &self.templates[&kind];
        &list[rng.random_range(0..list.len())]
    }

    fn fill<R: Rng + ?Sized>(&self, kind: TemplateKind, rng: &mut R, slots: &[(&str, &str)]) -> Utterance {
        let template = self.pick(kind, rng);
        let mut text = String::new();
        let mut component = None;
        for (is_slot, part) in parse_template(template).expect("validated at load") {
            if !is_slot {
                text.push_str(part);
                continue;
            }
            let value = slots.iter().find(|(k, _)| *k == part).map(|(_, v)| *v).unwrap_or("");
            let start = text.len();
            text.push_str(value);
            if part == "text" {
                component = Some(start..text.len());
            }
        }
        Utterance { text, component }
    }

    /// Opening line announcing the major claim.
    pub fn render_claim<R: Rng + ?Sized>(&self, graph: &ArgumentGraph, rng: &mut R) -> Utterance {
        self.fill(TemplateKind::Claim, rng, &[("text", graph.text(graph.root()))])
    }

    pub fn render_help<R: Rng + ?Sized>(&self, rng: &mut R) -> Utterance {
        self.fill(TemplateKind::Help, rng, &[])
    }

    /// Renders a system reply. `from` is the position before the move; an
    /// argument attached somewhere else gets a navigation preamble.
    pub fn render<R: Rng + ?Sized>(
        &self,
        reply: &SystemMove,
        graph: &ArgumentGraph,
        from: Node,
        rng: &mut R,
    ) -> Result<Utterance, crate::graph::UnknownId> {
        Ok(match reply {
            SystemMove::Argue {
                premise,
                conclusion,
                relation,
            } => {
                let premise = graph.text(graph.lookup(premise)?);
                let conclusion_node = graph.lookup(conclusion)?;
                let conclusion = graph.text(conclusion_node);
                let preamble = if conclusion_node != from {
                    self.fill(TemplateKind::Navigation, rng, &[("conclusion", conclusion)]).text
                } else {
                    String::new()
                };
                let kind = match relation {
                    Relation::Support => TemplateKind::ArgueSupport,
                    Relation::Attack => TemplateKind::ArgueAttack,
                };
                self.fill(
                    kind,
                    rng,
                    &[("preamble", &preamble), ("text", premise), ("conclusion", conclusion)],
                )
            }
            SystemMove::JumpTo { target } => {
                let text = graph.text(graph.lookup(target)?);
                self.fill(TemplateKind::JumpTo, rng, &[("target", text)])
            }
            SystemMove::Intervene { .. } => self.fill(TemplateKind::Intervene, rng, &[]),
            SystemMove::Acknowledge { target, feedback } => {
                let text = graph.text(graph.lookup(target)?);
                let kind = match feedback {
                    Feedback::Disagree => TemplateKind::AcknowledgeDisagree,
                    _ => TemplateKind::AcknowledgeAgree,
                };
                self.fill(kind, rng, &[("target", text)])
            }
            SystemMove::Exhausted { .. } => self.fill(TemplateKind::Exhausted, rng, &[]),
        })
    }
}

impl Default for TemplatePool {
    fn default() -> Self {
        Self::bundled()
    }
}
