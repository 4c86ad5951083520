//! Relational control coding for dyadic tutor/tutee conversations.
//!
//! The pipeline runs transcript → numeric codes (human or [`autocoder`]) →
//! control codes ([`codebook`]) → turn-pair transactions ([`transactions`])
//! → control and agreement scores ([`metrics`]), with reliability and
//! outcome statistics in [`stats`].
//!
//! Score aggregation is generic over [`Scalar`] (`f32`, `f64` or the exact
//! [`Exact`] rational); the statistics are generic over `num_traits::Float`.
//! The aliases below fix the common instantiations.

pub mod annotation;
pub mod autocoder;
pub mod canonical;
pub mod codebook;
pub mod metrics;
pub mod scalar;
pub mod stats;
pub mod transactions;
pub mod transcript;

pub use annotation::{Annotation, AUTO_CODER};
pub use autocoder::{auto_code_conversation, default_rules, Level, RuleSet};
pub use codebook::{
    default_matrix, load_matrix, translate, ControlCode, MessageFormat, NumericCode, ResponseMode,
    TranslationMatrix,
};
pub use metrics::{aggregate, scorecard, Score, ScoreOptions, ScoreSummary, Scorecard};
pub use scalar::Scalar;
pub use transactions::{classify, pair_conversation, Transaction, TransactionClass};
pub use transcript::{normalize, parse_json, parse_plaintext, Conversation, MergePolicy, Role, Turn};

/// Exact rational scalar for reproducing published aggregates.
pub type Exact = num_rational::BigRational;

pub type StudyAggregate = metrics::StudyAggregate<f64>;
pub type ExactStudyAggregate = metrics::StudyAggregate<Exact>;
pub type Summary = metrics::Summary<f64>;
pub type ExactSummary = metrics::Summary<Exact>;
pub type KappaResult = stats::KappaResult<f64>;
pub type Descriptive = stats::Descriptive<f64>;
pub type Correlation = stats::Correlation<f64>;
pub type RankSumResult = stats::RankSumResult<f64>;
