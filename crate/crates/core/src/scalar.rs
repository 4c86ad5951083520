//! Scalar abstraction shared by the score and statistics code.
//!
//! Scores are ratios of counts. Aggregates over them can be computed in
//! floating point or exactly; both go through [`Scalar`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

pub trait Scalar: Clone + PartialOrd + Debug + Num {
    fn from_ratio(num: u64, den: u64) -> Self;

    fn from_count(n: usize) -> Self {
        Self::from_ratio(n as u64, 1)
    }

    fn to_f64(&self) -> f64;

    /// Four decimal places, half away from zero.
    fn render4(&self) -> String;
}

impl Scalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn render4(&self) -> String {
        format!("{:.4}", self)
    }
}

impl Scalar for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn render4(&self) -> String {
        format!("{:.4}", self)
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn render4(&self) -> String {
        let negative = self.is_negative();
        let abs = self.abs();
        let scaled = abs.numer() * BigInt::from(20_000u32) + abs.denom();
        let q: BigInt = scaled / (abs.denom() * BigInt::from(2u32));
        let (int, frac) = (&q / BigInt::from(10_000u32), &q % BigInt::from(10_000u32));
        let sign = if negative && !q.is_zero() { "-" } else { "" };
        format!("{sign}{int}.{:04}", frac.to_u32().unwrap_or(0))
    }
}

/// Renders `num / den` to four decimals, half up, in integer arithmetic.
pub fn render_ratio4(num: u64, den: u64) -> String {
    let q = (u128::from(num) * 20_000 + u128::from(den)) / (2 * u128::from(den));
    format!("{}.{:04}", q / 10_000, q % 10_000)
}

/// Parses a plain decimal such as `0.7045` into an exact ratio.
pub fn parse_decimal(s: &str) -> Option<(u64, u64)> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let den = 10u64.checked_pow(frac.len() as u32)?;
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some((int.checked_mul(den)?.checked_add(frac)?, den))
}

pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().cloned().fold(S::zero(), |acc, v| acc + v);
    Some(sum / S::from_count(values.len()))
}

/// Median with the midpoint average for even lengths.
pub fn median<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Some(sorted[mid].clone())
    } else {
        let two = S::one() + S::one();
        Some((sorted[mid - 1].clone() + sorted[mid].clone()) / two)
    }
}

pub(crate) fn min_max<S: Scalar>(values: &[S]) -> Option<(S, S)> {
    let mut it = values.iter();
    let first = it.next()?.clone();
    Some(it.fold((first.clone(), first), |(lo, hi), v| {
        let lo = if *v < lo { v.clone() } else { lo };
        let hi = if *v > hi { v.clone() } else { hi };
        (lo, hi)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_rendering_is_half_up() {
        assert_eq!(render_ratio4(61, 855), "0.0713");
        assert_eq!(render_ratio4(56465, 100_000), "0.5647");
        assert_eq!(render_ratio4(3, 3), "1.0000");
        assert_eq!(render_ratio4(0, 7), "0.0000");
        assert_eq!(BigRational::from_ratio(56465, 100_000).render4(), "0.5647");
        assert_eq!((-BigRational::from_ratio(56465, 100_000)).render4(), "-0.5647");
    }

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("0.7045"), Some((7045, 10_000)));
        assert_eq!(parse_decimal("1"), Some((1, 1)));
        assert_eq!(parse_decimal(".5"), Some((5, 10)));
        assert_eq!(parse_decimal("-0.5"), None);
        assert_eq!(parse_decimal(""), None);
    }

    #[test]
    fn mean_and_median() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(mean::<f64>(&[]), None);
        let exact: Vec<BigRational> = [1u64, 2].iter().map(|&n| BigRational::from_ratio(n, 3)).collect();
        assert_eq!(mean(&exact), Some(BigRational::from_ratio(1, 2)));
    }
}
