//! Snapshot fixtures for web client tests, kept in `docs/fixtures/`.
//!
//! Run with `UPDATE_FIXTURES=1` to regenerate after a deliberate wire change.

use std::path::PathBuf;
use std::sync::Arc;

use delib_core::load_corpus_file;
use delib_core::session::{Condition, Input, Session, SessionContext, Snapshot};

fn fixtures() -> Vec<(&'static str, Snapshot)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/corpus/uniforms.jsonl");
    let ctx = SessionContext::new("uniforms", Arc::new(load_corpus_file(root).unwrap()));
    let open = |seed| Session::open("fixture", ctx.clone(), Condition::Intervention, 0.5, seed).unwrap();
    let fresh = open(0).snapshot();
    let mut s = (0..64)
        .map(open)
        .find_map(|mut s| {
            let r = s.post(Input::text("Tell me more")).unwrap();
            (r.delta.newly_visited == ["u1"]).then_some(s)
        })
        .expect("some seed opens with u1");
    s.post(Input::text("I agree")).unwrap();
    s.post(Input::text("Give me another supporting argument")).unwrap();
    let pending = s.snapshot();
    s.post(Input::text("Yes")).unwrap();
    vec![("fresh", fresh), ("pending", pending), ("confirmed", s.snapshot())]
}

#[test]
fn snapshot_fixtures_are_current() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/fixtures");
    let update = std::env::var_os("UPDATE_FIXTURES").is_some();
    for (name, snap) in fixtures() {
        let path = dir.join(format!("snapshot_{name}.json"));
        let json = serde_json::to_string_pretty(&snap).unwrap() + "\n";
        if update {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &json).unwrap();
            continue;
        }
        let stored = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(stored, json, "{} is stale; rerun with UPDATE_FIXTURES=1", path.display());
        let back: Snapshot = serde_json::from_str(&stored).unwrap();
        assert_eq!(back, snap);
    }
}

#[test]
fn fixtures_cover_the_color_states() {
    let snaps = fixtures();
    for (_, s) in &snaps {
        assert_eq!(s.nodes.iter().filter(|n| n.current).count(), 1);
        assert_eq!(s.edges.len(), s.nodes.len() - 1);
    }
    let fresh = &snaps[0].1;
    assert_eq!(fresh.visited, ["u0"]);
    assert!(fresh.nodes.iter().filter(|n| n.id != "u0").all(|n| !n.visited));
    assert!(snaps[1].1.pending.is_some());
    assert_eq!(snaps[1].1.legal_moves.len(), 2);
    let done = &snaps[2].1;
    assert_eq!(done.current, "u2");
    assert!(done.edges.iter().any(|e| e.relation == delib_core::Relation::Support));
    assert!(done.edges.iter().any(|e| e.relation == delib_core::Relation::Attack));
}
