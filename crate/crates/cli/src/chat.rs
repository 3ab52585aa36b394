//! Line-oriented chat loop over a single in-process session.
//!
//! Plain lines go to the dialogue. Lines starting with `/` are commands:
//! `/agree <id>`, `/disagree <id>`, `/state`, `/moves`, `/quit`.

use std::io::{BufRead, Write};

use anyhow::Result;
use delib_core::session::{Condition, Input, Session, SessionContext, SessionError};
use delib_core::UserAct;

pub struct ChatOptions {
    pub condition: Condition,
    pub prior: f64,
    pub seed: u64,
    pub show_scores: bool,
}

fn show_error(out: &mut impl Write, e: &SessionError) -> std::io::Result<()> {
    writeln!(out, "! {} ({})", e, e.code())
}

/// Runs until `/quit` or end of input and returns the finished session.
pub fn run(ctx: SessionContext, opts: &ChatOptions, input: impl BufRead, mut out: impl Write) -> Result<Session> {
    let mut session = Session::open("chat", ctx, opts.condition, opts.prior, opts.seed)?;
    writeln!(out, "system: {}", session.record().utterance.text)?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let result = match line.split_once(' ').unwrap_or((line, "")) {
            ("/quit", _) => break,
            ("/state", _) => {
                let snap = session.snapshot();
                writeln!(
                    out,
                    "at {} | visited {} | e = {:.3} | F = {:.3} | RUE = {:.3}",
                    snap.current,
                    snap.visited.len(),
                    snap.stance,
                    snap.engagement.total_focus,
                    snap.engagement.rue
                )?;
                continue;
            }
            ("/moves", _) => {
                let moves: Vec<String> = session.snapshot().legal_moves.iter().map(|m| format!("{m:?}")).collect();
                writeln!(out, "legal: {}", moves.join(", "))?;
                continue;
            }
            ("/agree", id) => session.post(Input::Act(UserAct::Agree {
                target: id.trim().to_owned(),
            })),
            ("/disagree", id) => session.post(Input::Act(UserAct::Disagree {
                target: id.trim().to_owned(),
            })),
            _ if line.starts_with('/') => {
                writeln!(out, "! unknown command")?;
                continue;
            }
            _ => session.post(Input::text(line)),
        };
        match result {
            Ok(reply) => {
                writeln!(out, "system: {}", reply.utterance.text)?;
                if opts.show_scores {
                    writeln!(
                        out,
                        "  [e = {:.3}, F = {:.3}, RUE = {:.3}{}]",
                        reply.stance,
                        reply.engagement.total_focus,
                        reply.engagement.rue,
                        if reply.decision.as_ref().is_some_and(|d| d.triggered) { ", intervening" } else { "" }
                    )?;
                }
            }
            Err(e) => show_error(&mut out, &e)?,
        }
    }
    session.close()?;
    Ok(session)
}
