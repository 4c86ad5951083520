use std::collections::BTreeMap;
use std::fmt::Display;

use num_traits::Float;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{average_ranks, cast, from_f64, to_f64, PValueMethod, StatsError};
use crate::scalar::{self, Scalar};

/// Enumerations beyond this many group assignments are refused.
const EXACT_LIMIT: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSumResult<T> {
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    /// Mann–Whitney U of group a; U of group b is `n_a·n_b − u`.
    pub statistic: T,
    pub z: T,
    /// Two-tailed.
    pub p_value: T,
    pub median_a: T,
    pub median_b: T,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Mann–Whitney rank-sum test between the two groups named in `groups`.
/// The lexicographically smaller label is group a.
pub fn group_compare<T: Float + Scalar, L: Ord + Clone + Display>(
    scores: &[T],
    groups: &[L],
    p_method: PValueMethod,
) -> Result<RankSumResult<T>, StatsError> {
    if scores.len() != groups.len() {
        return Err(StatsError::LengthMismatch(scores.len(), groups.len()));
    }
    let mut by_group: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    match by_group.len() {
        0 | 1 => return Err(StatsError::SingleGroup),
        2 => {}
        k => return Err(StatsError::TooManyGroups(k)),
    }
    let mut it = by_group.iter();
    let (label_a, idx_a) = it.next().expect("two groups");
    let (label_b, idx_b) = it.next().expect("two groups");

    let n = scores.len();
    let (n_a, n_b) = (idx_a.len(), idx_b.len());
    let ranks = average_ranks(scores);
    let rank_sum_a = idx_a.iter().fold(T::zero(), |acc, &i| acc + ranks[i]);
    let u_of = |rank_sum: T| rank_sum - cast::<T>(n_a * (n_a + 1)) / cast::<T>(2);
    let u = u_of(rank_sum_a);
    let mean_u = cast::<T>(n_a * n_b) / cast::<T>(2);

    // tie correction: Σ(t³ − t) over tied groups
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut tie_term = 0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (na, nb, nf) = (n_a as f64, n_b as f64, n as f64);
    let variance = na * nb / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let diff = to_f64(u) - to_f64(mean_u);
    let z = if variance > 0.0 { diff / variance.sqrt() } else { 0.0 };

    let p_value = match p_method {
        PValueMethod::Asymptotic => {
            if variance > 0.0 {
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
        PValueMethod::Permutation { .. } => {
            let total = binomial(n, n_a);
            if total > EXACT_LIMIT {
                return Err(StatsError::TooLargeForExact(total));
            }
            let ranks_f: Vec<f64> = ranks.iter().map(|&r| to_f64(r)).collect();
            let observed = diff.abs();
            let offset = na * (na + 1.0) / 2.0;
            let mut hits = 0u128;
            let mut combo: Vec<usize> = (0..n_a).collect();
            loop {
                let sum: f64 = combo.iter().map(|&k| ranks_f[k]).sum();
                if (sum - offset - na * nb / 2.0).abs() >= observed - 1e-9 {
                    hits += 1;
                }
                // next k-combination in lexicographic order
                let mut pos = n_a;
                while pos > 0 && combo[pos - 1] == n - n_a + pos - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                combo[pos - 1] += 1;
                for q in pos..n_a {
                    combo[q] = combo[q - 1] + 1;
                }
            }
            hits as f64 / total as f64
        }
    };

    let pick = |idx: &[usize]| -> T {
        let vals: Vec<T> = idx.iter().map(|&i| scores[i]).collect();
        scalar::median(&vals).expect("non-empty group")
    };
    Ok(RankSumResult {
        group_a: label_a.to_string(),
        group_b: label_b.to_string(),
        n_a,
        n_b,
        statistic: u,
        z: from_f64(z),
        p_value: from_f64(p_value),
        median_a: pick(idx_a),
        median_b: pick(idx_b),
    })
}
