use num_traits::Float;
use serde::Serialize;

use super::{cast, StatsError};
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Descriptive<T> {
    pub n: usize,
    pub mean: T,
    pub median: T,
    /// Sample standard deviation (n − 1); `None` below two observations.
    pub sd: Option<T>,
}

pub fn descriptive<T: Float + Scalar>(values: &[T]) -> Result<Descriptive<T>, StatsError> {
    let mean = scalar::mean(values).ok_or(StatsError::EmptyInput)?;
    let median = scalar::median(values).ok_or(StatsError::EmptyInput)?;
    let sd = (values.len() >= 2).then(|| {
        let ss = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        (ss / cast::<T>(values.len() - 1)).sqrt()
    });
    Ok(Descriptive {
        n: values.len(),
        mean,
        median,
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        let d = descriptive(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(d.median, 2.5);
        assert_eq!(d.mean, 2.5);
        assert!((d.sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(descriptive(&[7.0f32; 5]).unwrap().sd, Some(0.0));
        assert_eq!(descriptive(&[7.0]).unwrap().sd, None);
        assert_eq!(descriptive::<f64>(&[]), Err(StatsError::EmptyInput));
    }
}
