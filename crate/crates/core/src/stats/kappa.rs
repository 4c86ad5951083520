use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;
use serde::Serialize;

use super::{cast, StatsError};
use crate::annotation::Annotation;
use crate::autocoder::{level_label, Level};
use crate::codebook::TranslationMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaResult<T> {
    pub n: usize,
    pub categories: Vec<String>,
    pub observed_agreement: T,
    pub expected_agreement: T,
    pub kappa: T,
    /// Both raters used one single category throughout (p_e = 1); kappa is
    /// reported as 1 by convention.
    pub degenerate: bool,
}

/// Cohen's kappa over two parallel label sequences.
pub fn kappa_from_labels<T: Float, L: Ord + Clone + ToString>(
    a: &[L],
    b: &[L],
) -> Result<KappaResult<T>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = a.len();
    let mut marg_a: BTreeMap<&L, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&L, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let categories: BTreeSet<&L> = marg_a.keys().chain(marg_b.keys()).copied().collect();
    let nf = cast::<T>(n);
    let observed = cast::<T>(agree) / nf;
    let expected = categories.iter().fold(T::zero(), |acc, k| {
        let pa = cast::<T>(marg_a.get(k).copied().unwrap_or(0)) / nf;
        let pb = cast::<T>(marg_b.get(k).copied().unwrap_or(0)) / nf;
        acc + pa * pb
    });
    let degenerate = expected >= T::one();
    let kappa = if degenerate {
        T::one()
    } else {
        (observed - expected) / (T::one() - expected)
    };
    Ok(KappaResult {
        n,
        categories: categories.iter().map(|c| c.to_string()).collect(),
        observed_agreement: observed,
        expected_agreement: expected,
        kappa,
        degenerate,
    })
}

/// Labels of both coders over `scope` (default: every turn either coded).
pub fn paired_labels(
    a: &Annotation,
    b: &Annotation,
    level: Level,
    scope: Option<&BTreeSet<usize>>,
    matrix: &TranslationMatrix,
) -> Result<(Vec<String>, Vec<String>), StatsError> {
    if a.conversation_id != b.conversation_id {
        return Err(StatsError::ConversationMismatch(
            a.conversation_id.clone(),
            b.conversation_id.clone(),
        ));
    }
    let turns: BTreeSet<usize> = match scope {
        Some(s) => s.clone(),
        None => a.codes.keys().chain(b.codes.keys()).copied().collect(),
    };
    let mut la = Vec::with_capacity(turns.len());
    let mut lb = Vec::with_capacity(turns.len());
    for turn in turns {
        for (ann, out) in [(a, &mut la), (b, &mut lb)] {
            let code = ann.codes.get(&turn).ok_or_else(|| StatsError::ScopeNotCovered {
                turn,
                coder: ann.coder_id.clone(),
            })?;
            out.push(level_label(*code, level, matrix));
        }
    }
    Ok((la, lb))
}

pub fn cohen_kappa<T: Float>(
    a: &Annotation,
    b: &Annotation,
    level: Level,
    scope: Option<&BTreeSet<usize>>,
    matrix: &TranslationMatrix,
) -> Result<KappaResult<T>, StatsError> {
    let (la, lb) = paired_labels(a, b, level, scope, matrix)?;
    kappa_from_labels(&la, &lb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{default_matrix, NumericCode};

    #[test]
    fn hand_computed_tables() {
        let k: KappaResult<f64> = kappa_from_labels(&["X", "X", "Y", "Y"], &["X", "Y", "X", "Y"]).unwrap();
        assert_eq!((k.observed_agreement, k.expected_agreement, k.kappa), (0.5, 0.5, 0.0));

        let k: KappaResult<f64> = kappa_from_labels(&[1, 1, 2, 2, 2], &[1, 1, 2, 2, 1]).unwrap();
        assert!((k.observed_agreement - 0.8).abs() < 1e-12);
        assert!((k.expected_agreement - 0.48).abs() < 1e-12);
        assert!((k.kappa - 0.32 / 0.52).abs() < 1e-12);
    }

    #[test]
    fn single_category_is_degenerate() {
        let k: KappaResult<f32> = kappa_from_labels(&["a"; 3], &["a"; 3]).unwrap();
        assert!(k.degenerate);
        assert_eq!(k.kappa, 1.0);
    }

    #[test]
    fn scope_must_be_covered() {
        let m = default_matrix();
        let c = |f, mo| NumericCode::from_parts(f, mo).unwrap();
        let a = Annotation::new("A", "c").with_codes([(0, c(1, '1')), (1, c(1, '3'))]);
        let b = Annotation::new("B", "c").with_codes([(0, c(1, '1'))]);
        assert_eq!(
            cohen_kappa::<f64>(&a, &b, Level::Numeric, None, &m),
            Err(StatsError::ScopeNotCovered {
                turn: 1,
                coder: "B".into()
            })
        );
        let scope: BTreeSet<usize> = [0].into();
        assert!(cohen_kappa::<f64>(&a, &b, Level::Numeric, Some(&scope), &m).is_ok());
        let empty = BTreeSet::new();
        assert_eq!(
            cohen_kappa::<f64>(&a, &b, Level::Numeric, Some(&empty), &m),
            Err(StatsError::EmptyInput)
        );
    }
}
