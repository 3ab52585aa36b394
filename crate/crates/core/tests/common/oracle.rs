//! Reference implementations written straight from the definitions, on the
//! raw tree shape, without going through the library's graph queries.

use std::collections::BTreeMap;

use super::Shape;

pub struct Tree {
    pub parent: Vec<Option<usize>>,
    pub attack: Vec<bool>,
    pub children: Vec<Vec<usize>>,
    pub depth: Vec<u32>,
    pub pro: Vec<bool>,
}

impl Tree {
    pub fn new(shape: &Shape) -> Self {
        let n = shape.len() + 1;
        let mut t = Tree {
            parent: vec![None; n],
            attack: vec![false; n],
            children: vec![Vec::new(); n],
            depth: vec![0; n],
            pro: vec![true; n],
        };
        for (i, &(p, a)) in shape.iter().enumerate() {
            let c = i + 1;
            t.parent[c] = Some(p);
            t.attack[c] = a;
            t.children[p].push(c);
            // Parents always precede children in a shape.
            t.depth[c] = t.depth[p] + 1;
            t.pro[c] = t.pro[p] != a;
        }
        t
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn id(i: usize) -> String {
        format!("n{i}")
    }
}

/// e(i) = (own + sum of children, attackers inverted) / (1 + #children).
pub fn stance(t: &Tree, feedback: &[f64], prior: f64, i: usize) -> f64 {
    let own = if i == 0 { prior } else { feedback[i] };
    if t.children[i].is_empty() {
        return own;
    }
    let mut total = own;
    for &c in &t.children[i] {
        let e = stance(t, feedback, prior, c);
        total += if t.attack[c] { 1.0 - e } else { e };
    }
    total / (1 + t.children[i].len()) as f64
}

/// Total focus of the root for a visited mask.
pub fn total_focus(t: &Tree, visited: &[bool]) -> f64 {
    let levels = *t.depth.iter().max().unwrap();
    if levels == 0 {
        return 0.0;
    }
    let triangle = (levels * (levels + 1)) as f64 / 2.0;
    let mut per_depth = vec![0usize; levels as usize + 1];
    for i in 0..t.len() {
        per_depth[t.depth[i] as usize] += t.children[i].len();
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..t.len() {
        if t.children[k].is_empty() {
            continue;
        }
        let seen: Vec<usize> = t.children[k].iter().copied().filter(|&c| visited[c]).collect();
        if seen.is_empty() {
            continue;
        }
        let plus = seen.iter().filter(|&&c| t.pro[c]).count() as f64;
        let minus = seen.len() as f64 - plus;
        let focus = (plus - minus) / seen.len() as f64;
        let omega_d = (levels - t.depth[k]) as f64 / triangle;
        let omega_n = t.children[k].len() as f64 / per_depth[t.depth[k] as usize] as f64;
        num += omega_d * omega_n * focus;
        den += omega_d * omega_n;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(-1.0, 1.0)
    }
}

pub fn rue(e: f64, f: f64) -> f64 {
    1.0 - (e - (1.0 - (f + 1.0) / 2.0)).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub triggered: bool,
    pub suggested: Option<String>,
    pub best_requested: Option<f64>,
    pub best_opposite: Option<f64>,
    pub scores: BTreeMap<String, f64>,
}

pub const TIE: f64 = 1e-12;

/// Exhaustive both-sides simulation. `None` when nothing is reachable.
pub fn decide(t: &Tree, visited: &[bool], feedback: &[f64], prior: f64, requested_pro: bool) -> Option<Decision> {
    let e = stance(t, feedback, prior, 0);
    let mut scores = BTreeMap::new();
    let mut sides: [Vec<(String, f64)>; 2] = [Vec::new(), Vec::new()];
    for c in 0..t.len() {
        let Some(p) = t.parent[c] else { continue };
        if visited[c] || !visited[p] {
            continue;
        }
        let mut v = visited.to_vec();
        v[c] = true;
        let s = rue(e, total_focus(t, &v));
        scores.insert(Tree::id(c), s);
        let same = t.pro[c] == requested_pro;
        sides[if same { 0 } else { 1 }].push((Tree::id(c), s));
    }
    if scores.is_empty() {
        return None;
    }
    let best = |side: &[(String, f64)]| -> Option<(f64, String)> {
        let max = side.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        side.iter()
            .filter(|x| x.1 >= max - TIE)
            .map(|x| x.0.clone())
            .min()
            .map(|id| (max, id))
    };
    let req = best(&sides[0]);
    let opp = best(&sides[1]);
    let triggered = match (&req, &opp) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some((r, _)), Some((o, _))) => *o > *r + TIE,
    };
    Some(Decision {
        triggered,
        suggested: if triggered { opp.as_ref().map(|x| x.1.clone()) } else { None },
        best_requested: req.map(|x| x.0),
        best_opposite: opp.map(|x| x.0),
        scores,
    })
}

/// Mann-Whitney U of sample a by direct pair counting.
pub fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact p by enumerating every split of the pooled sample.
pub fn p_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let observed = (u_by_pairs(a, b) - mean).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let pick = |chosen: bool| -> Vec<f64> {
            (0..n).filter(|&i| (mask & (1 << i) != 0) == chosen).map(|i| pooled[i]).collect()
        };
        let (x, y) = (pick(true), pick(false));
        total += 1;
        if (u_by_pairs(&x, &y) - mean).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}
