//! Stance recursion against a straight-line oracle over every feedback
//! assignment of small trees.

mod common;

use common::oracle::{self, Tree};
use common::{arb_shape, build, random_shape};
use delib_core::graph::Node;
use delib_core::stance::{estimate_stance, Feedback, FeedbackMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const VALUES: [Feedback; 3] = [Feedback::Disagree, Feedback::Neutral, Feedback::Agree];

fn node(g: &delib_core::ArgumentGraph, i: usize) -> Node {
    g.lookup(&format!("n{i}")).unwrap()
}

fn mirror(f: Feedback) -> Feedback {
    match f {
        Feedback::Agree => Feedback::Disagree,
        Feedback::Disagree => Feedback::Agree,
        Feedback::Neutral => Feedback::Neutral,
    }
}

/// Runs `check` on every assignment of the three feedback values to the
/// non-root nodes.
fn for_all_assignments(n: usize, mut check: impl FnMut(&[Feedback])) {
    let total = 3usize.pow((n - 1) as u32);
    let mut fb = vec![Feedback::Neutral; n];
    for code in 0..total {
        let mut c = code;
        for slot in fb.iter_mut().skip(1) {
            *slot = VALUES[c % 3];
            c /= 3;
        }
        check(&fb);
    }
}

#[test]
fn exhaustive_agreement_up_to_seven_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0u64;
    for n in 1..=7 {
        for _ in 0..12 {
            let shape = random_shape(&mut rng, n);
            let g = build(&shape);
            let tree = Tree::new(&shape);
            for prior in [0.0, 0.25, 0.5, 0.75, 1.0, 0.3] {
                for_all_assignments(n, |fb| {
                    let mut map = FeedbackMap::new(&g);
                    for (i, &f) in fb.iter().enumerate().skip(1) {
                        map.set_unchecked(node(&g, i), f);
                    }
                    let est = estimate_stance(&g, &map, prior);
                    let raw: Vec<f64> = fb.iter().map(|f| f.value()).collect();
                    for i in 0..n {
                        let want = oracle::stance(&tree, &raw, prior, i);
                        let got = est.of(node(&g, i));
                        assert!((got - want).abs() <= 1e-12, "n{i}: {got} vs {want}");
                        assert!((0.0..=1.0).contains(&got));
                    }
                    checked += 1;
                });
            }
        }
    }
    assert!(checked > 50_000);
}

#[test]
fn mirror_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=7 {
        for _ in 0..8 {
            let shape = random_shape(&mut rng, n);
            let g = build(&shape);
            for prior in [0.0, 0.25, 0.5, 0.625, 1.0] {
                for_all_assignments(n, |fb| {
                    let mut a = FeedbackMap::new(&g);
                    let mut b = FeedbackMap::new(&g);
                    for (i, &f) in fb.iter().enumerate().skip(1) {
                        a.set_unchecked(node(&g, i), f);
                        b.set_unchecked(node(&g, i), mirror(f));
                    }
                    let ea = estimate_stance(&g, &a, prior);
                    let eb = estimate_stance(&g, &b, 1.0 - prior);
                    for n in g.nodes() {
                        assert_eq!(ea.deviation(n), -eb.deviation(n));
                        assert!((ea.of(n) + eb.of(n) - 1.0).abs() <= f64::EPSILON);
                    }
                });
            }
        }
    }
}

proptest! {
    #[test]
    fn agreeing_never_lowers_support(shape in arb_shape(25), seed in any::<u64>(), prior in 0.0f64..=1.0) {
        use rand::Rng;
        let g = build(&shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = FeedbackMap::new(&g);
        for n in g.nodes().skip(1) {
            map.set_unchecked(n, VALUES[rng.random_range(0..3)]);
        }
        let before = estimate_stance(&g, &map, prior);
        // Raising feedback on a pro node never lowers the overall stance.
        for n in g.nodes().skip(1) {
            let mut up = map.clone();
            up.set_unchecked(n, Feedback::Agree);
            let after = estimate_stance(&g, &up, prior);
            let delta = after.overall() - before.overall();
            match g.polarity(n) {
                delib_core::Polarity::Pro => prop_assert!(delta >= -1e-12),
                delib_core::Polarity::Con => prop_assert!(delta <= 1e-12),
            }
        }
        prop_assert!(before.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
