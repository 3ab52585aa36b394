//! Mann-Whitney U test with midranks for ties.
//!
//! Small samples (combined size up to [`EXACT_LIMIT`]) get an exact p-value
//! from the permutation distribution of the rank sum, which stays exact in
//! the presence of ties. Larger samples use the tie-corrected normal
//! approximation with a continuity correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("all observations are identical; the test is undefined")]
    DegenerateSample,
    #[error("samples must not contain NaN")]
    NotANumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub n_a: usize,
    pub n_b: usize,
    /// Number of (a, b) pairs with a > b, counting ties as one half.
    pub u_a: f64,
    pub u_b: f64,
    /// `min(u_a, u_b)`, the conventionally reported statistic.
    pub u: f64,
    /// Standardized statistic; only set for the normal approximation.
    pub z: Option<f64>,
    /// Two-sided p-value.
    pub p: f64,
    pub method: Method,
}

/// Midranks (1-based) of `values` and the sizes of all tie groups.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(StatsError::NotANumber);
    }
    let (n_a, n_b) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    if ties.len() == 1 {
        return Err(StatsError::DegenerateSample);
    }
    let r_a: f64 = ranks[..n_a].iter().sum();
    let u_a = r_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let u_b = (n_a * n_b) as f64 - u_a;
    let u = u_a.min(u_b);
    let (p, z, method) = if n_a + n_b <= EXACT_LIMIT {
        (exact_p(&ranks, n_a, u_a), None, Method::Exact)
    } else {
        let (p, z) = normal_p(n_a, n_b, u_a, &ties);
        (p, Some(z), Method::Normal)
    };
    Ok(MannWhitney {
        n_a,
        n_b,
        u_a,
        u_b,
        u,
        z,
        p,
        method,
    })
}

/// Two-sided p from the exact distribution of the rank sum of group a over
/// all equally likely group assignments. Ranks are doubled to integers.
fn exact_p(ranks: &[f64], n_a: usize, u_a: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: assignments choosing k items with doubled rank sum s.
    let mut counts = vec![vec![0f64; max_sum + 1]; n_a + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=n_a).rev() {
            for s in (r..=max_sum).rev() {
                let add = counts[k - 1][s - r];
                if add != 0.0 {
                    counts[k][s] += add;
                }
            }
        }
    }
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    let mean = (n_a * (ranks.len() - n_a)) as f64 / 2.0;
    let observed = (u_a - mean).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (s, &c) in counts[n_a].iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        total += c;
        let u = s as f64 / 2.0 - offset;
        if (u - mean).abs() >= observed - 1e-9 {
            extreme += c;
        }
    }
    (extreme / total).min(1.0)
}

fn normal_p(n_a: usize, n_b: usize, u_a: f64, ties: &[usize]) -> (f64, f64) {
    let n = (n_a + n_b) as f64;
    let (na, nb) = (n_a as f64, n_b as f64);
    let mean = na * nb / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term);
    let sd = var.sqrt();
    let z = ((u_a - mean).abs() - 0.5).max(0.0) / sd;
    let std = Normal::standard();
    ((2.0 * (1.0 - std.cdf(z))).min(1.0), z)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for one value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
