use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{average_ranks, cast, from_f64, to_f64, PValueMethod, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(CorrelationMethod::Pearson),
            "spearman" => Ok(CorrelationMethod::Spearman),
            other => Err(format!("unknown method `{other}` (pearson|spearman)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation<T> {
    pub method: CorrelationMethod,
    pub coefficient: T,
    pub n: usize,
    /// Two-tailed.
    pub p_value: T,
}

fn check<T: Float>(x: &[T], y: &[T]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(())
}

/// Pearson's r by the centred two-pass formula.
pub fn pearson<T: Float>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = cast::<T>(x.len());
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ConstantInput);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Spearman's rho: Pearson over average ranks.
pub fn spearman<T: Float>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    pearson(&average_ranks(x), &average_ranks(y))
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

pub fn correlate<T: Float>(
    x: &[T],
    y: &[T],
    method: CorrelationMethod,
    p_method: PValueMethod,
) -> Result<Correlation<T>, StatsError> {
    check(x, y)?;
    let (xs, ys) = match method {
        CorrelationMethod::Pearson => (x.to_vec(), y.to_vec()),
        CorrelationMethod::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let coefficient = pearson(&xs, &ys)?;
    let p_value = match p_method {
        PValueMethod::Asymptotic => t_test_p(to_f64(coefficient), x.len()),
        PValueMethod::Permutation { rounds, seed } => {
            let observed = to_f64(coefficient).abs();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = ys.clone();
            let mut hits = 0usize;
            for _ in 0..rounds {
                shuffled.shuffle(&mut rng);
                let r = to_f64(pearson(&xs, &shuffled)?).abs();
                if r >= observed - 1e-12 {
                    hits += 1;
                }
            }
            (hits + 1) as f64 / (rounds + 1) as f64
        }
    };
    Ok(Correlation {
        method,
        coefficient,
        n: x.len(),
        p_value: from_f64(p_value),
    })
}
