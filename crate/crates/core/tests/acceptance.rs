//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::oracle::{self, Tree};
use common::{build, random_shape, random_visited};
use delib_core::dialog::{SystemMove, UserAct};
use delib_core::engagement::{omega_d, omega_n, rue, weighted_focus, EngagementConfig, FocusTerm, OmegaDirection, VisitTally};
use delib_core::graph::{Polarity, Relation};
use delib_core::intervention::{decide, EmptyFrontier, SessionView};
use delib_core::session::{encode_log, replay, Condition, Input, LogicalClock, Session, SessionContext, SystemClock};
use delib_core::simulator::{run_study, StudyConfig, UserPolicy};
use delib_core::stance::{estimate_stance, Feedback, FeedbackMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(started: Instant, limit: Duration) -> Result<(), String> {
    ensure(started.elapsed() < limit, || format!("took {:?}, limit {limit:?}", started.elapsed()))
}

/// Worked example: three focus terms give F = 0.49 and RUE 0.745 at e = 0.
type Criterion = (&'static str, fn() -> Outcome);

fn worked_example() -> Outcome {
    let t = Instant::now();
    let terms = [
        FocusTerm { focus: 1.0, omega_n: 0.167, omega_d: 0.17 },
        FocusTerm { focus: 1.0, omega_n: 0.4, omega_d: 0.33 },
        FocusTerm { focus: 0.33, omega_n: 1.0, omega_d: 0.5 },
    ];
    let f = weighted_focus(&terms).ok_or("no terms")?;
    let r = rue(0.0, f).map_err(|e| e.to_string())?;
    ensure((f - 0.49).abs() <= 0.005, || format!("F = {f}"))?;
    ensure((r - 0.745).abs() <= 0.005, || format!("RUE = {r}"))?;
    within_time(t, Duration::from_secs(1))?;
    Ok(format!("F = {f:.4}, RUE = {r:.4}"))
}

fn depth_weights() -> Outcome {
    let w: Vec<f64> = (1..=3)
        .map(|j| omega_d(3, j, OmegaDirection::Example))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for (got, want) in w.iter().zip([0.5, 0.333, 0.167]) {
        ensure((got - want).abs() <= 0.005, || format!("weights {w:?}"))?;
    }
    let sum: f64 = w.iter().sum();
    ensure((sum - 1.0).abs() <= 1e-12, || format!("sum {sum}"))?;
    Ok(format!("{:.3} {:.3} {:.3}", w[0], w[1], w[2]))
}

fn closed_form_properties() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = (1u64 << 20) as f64;
    for _ in 0..CASES {
        let e: f64 = rng.random_range(0.0..=1.0);
        let f: f64 = rng.random_range(-1.0..=1.0);
        let r = rue(e, f).map_err(|x| x.to_string())?;
        ensure((0.0..=1.0).contains(&r), || format!("rue({e}, {f}) = {r}"))?;
        let ideal = 1.0 - 2.0 * e;
        if (-1.0..=1.0).contains(&ideal) {
            let at = rue(e, ideal).unwrap();
            ensure((at - 1.0).abs() <= 1e-12, || format!("rue on ideal line {at}"))?;
        }
        if (f - ideal).abs() > 4e-12 {
            ensure(r < 1.0 - 1e-12, || format!("rue({e}, {f}) = 1 off the ideal line"))?;
        }
        // Mirror symmetry is exact on a dyadic grid, where no step rounds.
        let ed = rng.random_range(0..=(1u64 << 20)) as f64 / grid;
        let fd = rng.random_range(-(1i64 << 20)..=(1i64 << 20)) as f64 / grid;
        ensure(rue(ed, fd).unwrap() == rue(1.0 - ed, -fd).unwrap(), || format!("mirror at ({ed}, {fd})"))?;
    }
    let mut trees = 0;
    while trees < CASES / 10 {
        let n = rng.random_range(1..=31);
        let g = build(&random_shape(&mut rng, n));
        let steps = rng.random_range(0..n);
        let v = random_visited(&g, &mut rng, steps);
        let tally = VisitTally::new(&g, &v);
        let mut per_level = std::collections::BTreeMap::<u32, f64>::new();
        for node in g.nodes() {
            if let Some(x) = tally.focus(node) {
                ensure((-1.0..=1.0).contains(&x), || format!("focus {x}"))?;
            }
            if !g.is_leaf(node) {
                *per_level.entry(g.level(node)).or_default() += omega_n(&g, g.root(), node).unwrap();
            }
        }
        for (level, s) in per_level {
            ensure((s - 1.0).abs() <= 1e-12, || format!("level {level} weights sum to {s}"))?;
        }
        trees += 1;
    }
    Ok(format!("{CASES} score cases, {trees} trees"))
}

fn intervention_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut ties, mut triggered) = (0, 0);
    let cfg = EngagementConfig::default();
    for case in 0..200 {
        let n = rng.random_range(1..=31);
        let shape = random_shape(&mut rng, n);
        let g = build(&shape);
        let steps = rng.random_range(0..n);
        let v = random_visited(&g, &mut rng, steps);
        let mut fb = FeedbackMap::new(&g);
        let mut raw = vec![0.5; n];
        for (i, slot) in raw.iter_mut().enumerate().skip(1) {
            let node = g.lookup(&Tree::id(i)).unwrap();
            if v.contains(node) {
                let f = [Feedback::Disagree, Feedback::Neutral, Feedback::Agree][rng.random_range(0..3)];
                fb.set_unchecked(node, f);
                *slot = f.value();
            }
        }
        let prior = [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)];
        let side = if rng.random_bool(0.5) { Polarity::Pro } else { Polarity::Con };
        let stance = estimate_stance(&g, &fb, prior);
        let view = SessionView { graph: &g, visited: &v, stance: &stance, config: &cfg };
        let mask: Vec<bool> = (0..n).map(|i| v.contains(g.lookup(&Tree::id(i)).unwrap())).collect();
        let want = oracle::decide(&Tree::new(&shape), &mask, &raw, prior, side == Polarity::Pro);
        match (decide(view, side), want) {
            (Err(EmptyFrontier), None) => {}
            (Ok(d), Some(w)) => {
                ensure(d.triggered == w.triggered && d.suggested == w.suggested, || {
                    format!("case {case}: engine {:?}/{:?}, oracle {:?}/{:?}", d.triggered, d.suggested, w.triggered, w.suggested)
                })?;
                if let (Some(r), Some(o)) = (w.best_requested, w.best_opposite) {
                    if (r - o).abs() <= oracle::TIE {
                        ties += 1;
                        ensure(!d.triggered, || format!("case {case}: tie triggered"))?;
                    }
                }
                triggered += d.triggered as usize;
            }
            (got, want) => return Err(format!("case {case}: engine {got:?}, oracle {want:?}")),
        }
    }
    within_time(t, Duration::from_secs(30))?;
    Ok(format!("200/200 agree ({triggered} triggered, {ties} ties)"))
}

fn stance_recursion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values = [Feedback::Disagree, Feedback::Neutral, Feedback::Agree];
    let mut assignments = 0u64;
    for n in 1..=7usize {
        for _ in 0..10 {
            let shape = random_shape(&mut rng, n);
            let g = build(&shape);
            let tree = Tree::new(&shape);
            let nodes: Vec<_> = (0..n).map(|i| g.lookup(&Tree::id(i)).unwrap()).collect();
            for prior in [0.0, 0.25, 0.5, 0.75, 1.0] {
                for code in 0..3usize.pow(n as u32 - 1) {
                    let mut c = code;
                    let mut fb = FeedbackMap::new(&g);
                    let mut mirrored = FeedbackMap::new(&g);
                    let mut raw = vec![0.5; n];
                    for i in 1..n {
                        let k = c % 3;
                        c /= 3;
                        fb.set_unchecked(nodes[i], values[k]);
                        mirrored.set_unchecked(nodes[i], values[2 - k]);
                        raw[i] = values[k].value();
                    }
                    let est = estimate_stance(&g, &fb, prior);
                    let mir = estimate_stance(&g, &mirrored, 1.0 - prior);
                    for (i, &node) in nodes.iter().enumerate() {
                        let want = oracle::stance(&tree, &raw, prior, i);
                        let got = est.of(node);
                        ensure((got - want).abs() <= 1e-12, || format!("n{i}: {got} vs oracle {want}"))?;
                        ensure(est.deviation(node) == -mir.deviation(node), || format!("mirror broken at n{i}"))?;
                    }
                    assignments += 1;
                }
            }
        }
    }
    Ok(format!("{assignments} assignments"))
}

fn study_replication() -> Outcome {
    let t = Instant::now();
    let ctx = SessionContext::new("city_cars", common::bundled("city_cars.jsonl"));
    let policy = UserPolicy::confirmation_biased();
    ensure(policy.p_same == 0.8 && policy.p_accept == 0.76, || "policy drifted".into())?;
    let r = run_study(&ctx, &policy, &StudyConfig::new(30, 7)).map_err(|e| e.to_string())?;
    let i = r.summary(Condition::Intervention).ok_or("missing intervention arm")?;
    let c = r.summary(Condition::Control).ok_or("missing control arm")?;
    let test = r.rue_test.as_ref().and_then(|t| t.result.as_ref()).ok_or("no test result")?;
    let detail = format!(
        "RUE {:.3} vs {:.3}, U = {}, p = {:.2e}, opposing {:.0}% vs {:.0}%",
        i.mean_rue,
        c.mean_rue,
        test.u,
        test.p,
        i.opposing_share * 100.0,
        c.opposing_share * 100.0
    );
    ensure(i.n == 30 && c.n == 30, || format!("arm sizes {} and {}", i.n, c.n))?;
    ensure(i.mean_rue > c.mean_rue, || detail.clone())?;
    ensure(test.p < 0.05, || detail.clone())?;
    ensure(i.opposing_share > c.opposing_share, || detail.clone())?;
    within_time(t, Duration::from_secs(120))?;
    Ok(detail)
}

fn transcript_replay() -> Outcome {
    let graph = common::bundled("uniforms.jsonl");
    for seed in 0..16 {
        let ctx = SessionContext::new("uniforms", graph.clone());
        let mut s = Session::open("replay", ctx, Condition::Intervention, 0.5, seed).map_err(|e| e.to_string())?;
        let mut post = |text: &str| s.post(Input::text(text)).map_err(|e| format!("seed {seed}, {text:?}: {e}"));
        let first = post("Tell me more")?;
        let Some(SystemMove::Argue { premise, conclusion, relation: Relation::Support }) = first.reply else {
            return Err(format!("seed {seed}: opening reply {:?}", first.reply));
        };
        ensure(conclusion == "u0", || format!("seed {seed}: argued for {conclusion}"))?;
        ensure(first.intent.act == Some(UserAct::WhyPro { target: "u0".into() }), || "opening intent".into())?;
        let ack = post("I agree")?;
        ensure(
            ack.reply == Some(SystemMove::Acknowledge { target: premise.clone(), feedback: Feedback::Agree }),
            || format!("seed {seed}: {:?}", ack.reply),
        )?;
        let ask = post("Give me another supporting argument")?;
        let Some(SystemMove::Intervene { suggested }) = ask.reply else {
            return Err(format!("seed {seed}: expected an intervention, got {:?}", ask.reply));
        };
        let yes = post("Yes")?;
        ensure(yes.intent.act == Some(UserAct::Confirm), || "yes was not a confirmation".into())?;
        match yes.reply {
            Some(SystemMove::Argue { premise: p, relation: Relation::Attack, .. }) if p == suggested => {
                let node = graph.lookup(&p).map_err(|e| e.to_string())?;
                ensure(graph.polarity(node) == Polarity::Con, || "suggestion not opposite".into())?;
            }
            other => return Err(format!("seed {seed}: after confirm {other:?}")),
        }
    }
    Ok("16 seeds: argue, acknowledge, intervene, confirm, opposite argue".into())
}

fn log_determinism() -> Outcome {
    let graph = common::bundled("city_cars.jsonl");
    let texts = ["why", "I agree", "what is against this", "yes", "no", "go back", "tell me more", "hmm", "I disagree"];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for run in 0..25 {
        let script: Vec<&str> = (0..40).map(|_| texts[rng.random_range(0..texts.len())]).collect();
        let seed = rng.random::<u64>();
        let condition = if run % 2 == 0 { Condition::Intervention } else { Condition::Control };
        let play = |clock: Arc<dyn delib_core::session::Clock>| {
            let ctx = SessionContext::new("city_cars", graph.clone()).with_clock(clock);
            let mut s = Session::open("det", ctx, condition, 0.75, seed).unwrap();
            for t in &script {
                let _ = s.post(Input::text(*t));
            }
            s.close().unwrap();
            s
        };
        let a = encode_log(play(Arc::new(LogicalClock::new())).log());
        let b = encode_log(play(Arc::new(LogicalClock::new())).log());
        ensure(a == b, || format!("run {run}: logs differ"))?;
        let live = play(Arc::new(SystemClock));
        let again = replay(SessionContext::new("city_cars", graph.clone()), live.log()).map_err(|e| e.to_string())?;
        ensure(encode_log(again.log()) == encode_log(live.log()), || format!("run {run}: replay differs"))?;
    }
    Ok("25 scripts, identical bytes on rerun and replay".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("worked-example total focus and RUE", worked_example),
        ("depth weights for three levels", depth_weights),
        ("closed-form score properties", closed_form_properties),
        ("intervention decision vs exhaustive oracle", intervention_oracle),
        ("stance recursion vs straight-line oracle", stance_recursion),
        ("two-condition study direction and significance", study_replication),
        ("scripted transcript replay", transcript_replay),
        ("byte-identical session logs", log_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name} ({detail}) [{:.2?}]", t.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{:.2?}]", t.elapsed());
            }
        }
    }
    println!("{} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
