//! Rank statistics: Spearman correlation and the Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Both samples at most this large use exact enumeration.
pub const EXACT_MAX_N: usize = 8;

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ with a two-sided p-value from the t approximation.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFew { needed: 3, got: n });
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if (1.0 - rho.abs()) < 1e-15 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * dist.sf(t.abs())
    };
    Ok((rho, p.min(1.0)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// The first sample tends to be larger.
    #[default]
    Greater,
    Less,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs where it is larger, ties counting 1/2.
    pub u: f64,
    pub p_value: f64,
    pub method: PMethod,
}

/// U statistic of `a` from pooled mid-ranks.
fn u_from_ranks(ranks_a: impl Iterator<Item = f64>, n_a: usize) -> f64 {
    let sum: f64 = ranks_a.sum();
    sum - (n_a * (n_a + 1)) as f64 / 2.0
}

/// Mann-Whitney U test. Exact permutation distribution (over pooled
/// mid-ranks) when both samples have at most [`EXACT_MAX_N`] values,
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (n_a, n_b) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let u = u_from_ranks(ranks[..n_a].iter().copied(), n_a);

    if n_a <= EXACT_MAX_N && n_b <= EXACT_MAX_N {
        let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
        for_each_subset(pooled.len(), n_a, &mut |subset| {
            let us = u_from_ranks(subset.iter().map(|&i| ranks[i]), n_a);
            total += 1;
            if us >= u - 1e-9 {
                ge += 1;
            }
            if us <= u + 1e-9 {
                le += 1;
            }
        });
        let (p_ge, p_le) = (ge as f64 / total as f64, le as f64 / total as f64);
        let p_value = match alternative {
            Alternative::Greater => p_ge,
            Alternative::Less => p_le,
            Alternative::TwoSided => (2.0 * p_ge.min(p_le)).min(1.0),
        };
        return Ok(MannWhitney {
            u,
            p_value,
            method: PMethod::Exact,
        });
    }

    let n = (n_a + n_b) as f64;
    let (fa, fb) = (n_a as f64, n_b as f64);
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let mean = fa * fb / 2.0;
    let var = fa * fb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let std = var.max(0.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let upper = |shift: f64| {
        if std == 0.0 {
            1.0
        } else {
            normal.sf((shift - 0.5) / std)
        }
    };
    let p_ge = upper(u - mean);
    let p_le = upper(mean - u);
    let p_value = match alternative {
        Alternative::Greater => p_ge,
        Alternative::Less => p_le,
        Alternative::TwoSided => (2.0 * p_ge.min(p_le)).min(1.0),
    };
    Ok(MannWhitney {
        u,
        p_value,
        method: PMethod::Normal,
    })
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}
