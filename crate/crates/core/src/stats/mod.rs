//! Reliability and outcome statistics.
//!
//! Everything here is generic over `num_traits::Float`; the crate root
//! exports `f64` aliases. Distribution tails for p-values are evaluated in
//! `f64`.

mod correlation;
mod descriptive;
mod kappa;
mod ranksum;
mod study;

pub use correlation::{correlate, pearson, spearman, Correlation, CorrelationMethod};
pub use descriptive::{descriptive, Descriptive};
pub use kappa::{cohen_kappa, kappa_from_labels, paired_labels, KappaResult};
pub use ranksum::{group_compare, RankSumResult};
pub use study::{
    learning_gain, parse_study_records, study_report, Analysis, Gain, Gender, StudyRecord, StudyReport,
};

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("comparison needs two non-empty groups")]
    SingleGroup,
    #[error("comparison needs exactly two groups, found {0}")]
    TooManyGroups(usize),
    #[error("turn {turn} in scope is not coded by `{coder}`")]
    ScopeNotCovered { turn: usize, coder: String },
    #[error("annotations cover different conversations (`{0}` vs `{1}`)")]
    ConversationMismatch(String, String),
    #[error("exact enumeration would need {0} permutations")]
    TooLargeForExact(u128),
    #[error("study table: {0}")]
    StudyTable(String),
}

/// How p-values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// t (correlation) or tie-corrected normal (rank-sum) approximation.
    #[default]
    Asymptotic,
    /// Rank-sum: full enumeration of group assignments. Correlation: seeded
    /// Monte Carlo over `rounds` permutations.
    Permutation { rounds: usize, seed: u64 },
}

pub(crate) fn cast<T: Float>(n: usize) -> T {
    T::from(n).expect("count fits in float")
}

pub(crate) fn to_f64<T: Float>(x: T) -> f64 {
    num_traits::cast(x).unwrap_or(f64::NAN)
}

pub(crate) fn from_f64<T: Float>(x: f64) -> T {
    T::from(x).unwrap_or_else(T::nan)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks<T: Float>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1) + (j+1)) / 2
        let rank = cast::<T>(i + j + 2) / cast::<T>(2);
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}
