use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use delib_cli::chat::{self, ChatOptions};
use delib_cli::config::{corpus_id, Config, CorpusEntry};
use delib_cli::server::{self, AppState};
use delib_core::session::{self, Condition, Payload, SessionContext, StateBlob};
use delib_core::simulator::StudyConfig;
use delib_core::{load_corpus_file, run_study, ArgumentGraph, UserPolicy};

#[derive(Parser)]
#[command(name = "delib", version, about = "Argumentative dialogue engine with engagement-driven interventions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arms {
    Both,
    Intervention,
    Control,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    Intervention,
    Control,
}

impl From<Arm> for Condition {
    fn from(a: Arm) -> Self {
        match a {
            Arm::Intervention => Condition::Intervention,
            Arm::Control => Condition::Control,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated two-condition study.
    Simulate {
        /// Corpus file (JSON lines).
        #[arg(long)]
        corpus: PathBuf,
        /// User policy TOML; the confirmation-biased user by default.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Sessions per condition.
        #[arg(short, long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Arms::Both)]
        condition: Arms,
        /// Full result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// One CSV row per session.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Serve the HTTP session API.
    Serve {
        /// Service config TOML; `DELIB_*` variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        /// Extra corpus files, served under their file stem.
        #[arg(long)]
        corpus: Vec<PathBuf>,
    },
    /// Talk to the system on stdin/stdout.
    Chat {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Arm::Intervention)]
        condition: Arm,
        /// Prior stance on the major claim, in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        prior: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print stance, focus and RUE after each turn.
        #[arg(long)]
        scores: bool,
    },
    /// Re-run a session log and check it reproduces exactly.
    Replay {
        log: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// State blob to compare against the replayed state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Check corpus files and print their shape.
    Validate {
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
    },
}

fn load(path: &Path) -> Result<Arc<ArgumentGraph>> {
    Ok(Arc::new(
        load_corpus_file(path).with_context(|| format!("loading {}", path.display()))?,
    ))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Simulate {
            corpus,
            policy,
            n,
            seed,
            condition,
            out,
            table,
        } => {
            let policy = match policy {
                Some(p) => UserPolicy::from_toml(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => UserPolicy::confirmation_biased(),
            };
            let ctx = SessionContext::new(corpus_id(&corpus), load(&corpus)?);
            let mut cfg = StudyConfig::new(n, seed);
            cfg.conditions = match condition {
                Arms::Both => vec![Condition::Intervention, Condition::Control],
                Arms::Intervention => vec![Condition::Intervention],
                Arms::Control => vec![Condition::Control],
            };
            let result = run_study(&ctx, &policy, &cfg)?;
            for (name, s) in &result.summaries {
                println!(
                    "{name:<13} n={:<3} RUE mean {:.3} sd {:.3} median {:.3} | e {:.3} | pro {:.1} con {:.1} | opposing {:.0}%{}",
                    s.n,
                    s.mean_rue,
                    s.sd_rue,
                    s.median_rue,
                    s.mean_e,
                    s.mean_pro_heard,
                    s.mean_con_heard,
                    100.0 * s.opposing_share,
                    s.acceptance_rate
                        .map(|a| format!(" | accepted {}/{} ({:.2})", s.accepted, s.offered, a))
                        .unwrap_or_default()
                );
            }
            if let Some(t) = &result.rue_test {
                match (&t.result, &t.error) {
                    (Some(mw), _) => println!("Mann-Whitney U = {} (p = {:.3e}, {:?})", mw.u, mw.p, mw.method),
                    (None, Some(e)) => println!("Mann-Whitney: {e}"),
                    _ => {}
                }
            }
            if let Some(p) = out {
                result.write_json(BufWriter::new(std::fs::File::create(&p)?))?;
            }
            if let Some(p) = table {
                result.write_csv(BufWriter::new(std::fs::File::create(&p)?))?;
            }
        }
        Command::Serve { config, bind, corpus } => {
            let mut cfg = Config::load(config.as_deref())?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            cfg.corpus.extend(corpus.into_iter().map(|path| CorpusEntry {
                id: corpus_id(&path),
                path,
            }));
            let manager = cfg.build_manager()?;
            let app = AppState::new(manager, cfg.token.clone())
                .with_static_dir(cfg.static_dir.clone())
                .with_cors(cfg.cors);
            tokio::runtime::Runtime::new()?.block_on(server::serve(app, &cfg.bind))?;
        }
        Command::Chat {
            corpus,
            condition,
            prior,
            seed,
            scores,
        } => {
            let ctx = SessionContext::new(corpus_id(&corpus), load(&corpus)?);
            let opts = ChatOptions {
                condition: condition.into(),
                prior,
                seed,
                show_scores: scores,
            };
            chat::run(ctx, &opts, io::stdin().lock(), io::stdout().lock())?;
        }
        Command::Replay { log, corpus, state } => {
            let entries = session::read_log_file(&log)?;
            let Some(Payload::Open { corpus: id, .. }) = entries.first().map(|e| &e.payload) else {
                bail!("{} does not start with an opening entry", log.display());
            };
            let ctx = SessionContext::new(id.clone(), load(&corpus)?);
            let replayed = session::replay(ctx.clone(), &entries)?;
            println!("log ok: {} entries reproduced", entries.len());
            if let Some(p) = state {
                let blob: StateBlob = serde_json::from_slice(&std::fs::read(&p)?)?;
                let n = blob.log_entries as usize;
                if n > entries.len() {
                    bail!("state blob covers {n} entries but the log has {}", entries.len());
                }
                let at = session::replay(ctx, &entries[..n])?;
                if at.state_blob() != blob {
                    bail!("state blob differs from the replayed state at entry {n}");
                }
                println!("state ok: matches replay at entry {n}");
            }
            let snap = replayed.snapshot();
            println!(
                "final: visited {} | e = {:.4} | F = {:.4} | RUE = {:.4}",
                snap.visited.len(),
                snap.stance,
                snap.engagement.total_focus,
                snap.engagement.rue
            );
        }
        Command::Validate { corpus } => {
            let mut failed = false;
            for path in corpus {
                match load_corpus_file(&path) {
                    Ok(g) => {
                        let depth = g.nodes().map(|n| g.level(n)).max().unwrap_or(0);
                        let leaves = g.nodes().filter(|&n| g.is_leaf(n)).count();
                        println!(
                            "{}: ok, {} components, root `{}`, depth {}, {} leaves",
                            path.display(),
                            g.len(),
                            g.id(g.root()),
                            depth,
                            leaves
                        );
                    }
                    Err(e) => {
                        failed = true;
                        println!("{}: {e}", path.display());
                    }
                }
            }
            if failed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
