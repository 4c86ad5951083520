//! Turn-pair transactions.
//!
//! Every adjacent pair of coded turns forms a transaction. Its class depends
//! only on the two control codes: `{↑,↓}` is complementary, equal codes are
//! symmetrical, and a pair with exactly one `→` is transitory.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::ControlCode;
use crate::transcript::Conversation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransactionClass {
    Complementary,
    Symmetrical,
    Transitory,
}

impl TransactionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TransactionClass::Complementary => "complementary",
            TransactionClass::Symmetrical => "symmetrical",
            TransactionClass::Transitory => "transitory",
        }
    }
}

impl fmt::Display for TransactionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify(a: ControlCode, b: ControlCode) -> TransactionClass {
    use ControlCode::*;
    match (a, b) {
        _ if a == b => TransactionClass::Symmetrical,
        (OneUp, OneDown) | (OneDown, OneUp) => TransactionClass::Complementary,
        _ => TransactionClass::Transitory,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub conversation_id: String,
    pub first_index: usize,
    pub second_index: usize,
    pub first_control: ControlCode,
    pub second_control: ControlCode,
    pub class: TransactionClass,
}

impl Transaction {
    pub fn controls(&self) -> String {
        format!("{}{}", self.first_control.arrow(), self.second_control.arrow())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OmissionReason {
    Uncoded,
    Degenerate,
    SameSpeaker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Omission {
    pub first: usize,
    pub second: usize,
    pub reason: OmissionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pairing {
    pub transactions: Vec<Transaction>,
    pub omissions: Vec<Omission>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransactionError {
    #[error("turn {turn} has no control code")]
    MissingCode { turn: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairingOptions {
    /// Treat an uncoded non-degenerate turn as an error instead of a gap.
    pub strict: bool,
}

/// Pairs each turn with its successor. Pairs touching an uncoded or
/// degenerate turn, or joining two turns of the same speaker, are omitted
/// and listed in [`Pairing::omissions`].
pub fn pair_conversation(
    conv: &Conversation,
    controls: &BTreeMap<usize, ControlCode>,
    options: PairingOptions,
) -> Result<Pairing, TransactionError> {
    if options.strict {
        if let Some(t) = conv
            .turns
            .iter()
            .find(|t| !t.is_degenerate() && !controls.contains_key(&t.index))
        {
            return Err(TransactionError::MissingCode { turn: t.index });
        }
    }
    let mut pairing = Pairing::default();
    for w in conv.turns.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let omit = |reason| Omission {
            first: a.index,
            second: b.index,
            reason,
        };
        if a.is_degenerate() || b.is_degenerate() {
            pairing.omissions.push(omit(OmissionReason::Degenerate));
            continue;
        }
        let (Some(&ca), Some(&cb)) = (controls.get(&a.index), controls.get(&b.index)) else {
            pairing.omissions.push(omit(OmissionReason::Uncoded));
            continue;
        };
        if a.speaker_id == b.speaker_id {
            pairing.omissions.push(omit(OmissionReason::SameSpeaker));
            continue;
        }
        pairing.transactions.push(Transaction {
            conversation_id: conv.id.clone(),
            first_index: a.index,
            second_index: b.index,
            first_control: ca,
            second_control: cb,
            class: classify(ca, cb),
        });
    }
    Ok(pairing)
}

/// Pairs a bare control sequence, as if every turn alternated speakers.
pub fn pair_sequence(controls: &[ControlCode]) -> Vec<TransactionClass> {
    controls.windows(2).map(|w| classify(w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub complementary: u64,
    pub symmetrical: u64,
    pub transitory: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.complementary + self.symmetrical + self.transitory
    }

    pub fn add(&mut self, class: TransactionClass) {
        match class {
            TransactionClass::Complementary => self.complementary += 1,
            TransactionClass::Symmetrical => self.symmetrical += 1,
            TransactionClass::Transitory => self.transitory += 1,
        }
    }
}

impl FromIterator<TransactionClass> for ClassCounts {
    fn from_iter<I: IntoIterator<Item = TransactionClass>>(iter: I) -> Self {
        let mut counts = ClassCounts::default();
        for c in iter {
            counts.add(c);
        }
        counts
    }
}

/// `[{first, second, controls, class}]`
pub fn to_json_value(transactions: &[Transaction]) -> serde_json::Value {
    transactions
        .iter()
        .map(|t| {
            serde_json::json!({
                "first": t.first_index,
                "second": t.second_index,
                "controls": t.controls(),
                "class": t.class.as_str(),
            })
        })
        .collect()
}

pub fn to_tsv(transactions: &[Transaction]) -> String {
    let mut out = String::from("first\tsecond\tcontrols\tclass\n");
    for t in transactions {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            t.first_index,
            t.second_index,
            t.controls(),
            t.class
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::parse_plaintext;
    use ControlCode::*;
    use TransactionClass::*;

    fn conv(n: usize) -> Conversation {
        let body: String = (0..n)
            .map(|i| format!("{}: turn {i}\n", if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        parse_plaintext("c", &format!("#speaker a tutee\n#speaker b tutor\n{body}")).unwrap()
    }

    fn controls(codes: &[ControlCode]) -> BTreeMap<usize, ControlCode> {
        codes.iter().copied().enumerate().collect()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(OneDown, OneUp), Complementary);
        assert_eq!(classify(OneDown, OneDown), Symmetrical);
        assert_eq!(classify(OneAcross, OneUp), Transitory);
        assert_eq!(classify(OneAcross, OneAcross), Symmetrical);
    }

    #[test]
    fn classification_partitions_all_nine_pairs() {
        let mut counts = ClassCounts::default();
        for a in ControlCode::ALL {
            for b in ControlCode::ALL {
                let class = classify(a, b);
                assert_eq!(class, classify(b, a));
                let across = [a, b].iter().filter(|c| **c == OneAcross).count();
                match class {
                    Complementary => assert!(a != b && across == 0),
                    Symmetrical => assert_eq!(a, b),
                    Transitory => assert_eq!(across, 1),
                }
                counts.add(class);
            }
        }
        assert_eq!((counts.complementary, counts.symmetrical, counts.transitory), (2, 3, 4));
    }

    #[test]
    fn okay_excerpt_pairs() {
        let p = pair_conversation(&conv(4), &controls(&[OneDown, OneDown, OneAcross, OneUp]), Default::default())
            .unwrap();
        let classes: Vec<_> = p.transactions.iter().map(|t| t.class).collect();
        assert_eq!(classes, vec![Symmetrical, Transitory, Transitory]);
        assert_eq!(p.transactions[1].controls(), "↓→");
        assert!(p.omissions.is_empty());
    }

    #[test]
    fn alternating_down_up_is_complementary() {
        let p = pair_conversation(&conv(4), &controls(&[OneDown, OneUp, OneDown, OneUp]), Default::default())
            .unwrap();
        assert!(p.transactions.iter().all(|t| t.class == Complementary));
        assert_eq!(p.transactions.len(), 3);
    }

    #[test]
    fn single_turn_has_no_transactions() {
        let p = pair_conversation(&conv(1), &controls(&[OneUp]), Default::default()).unwrap();
        assert!(p.transactions.is_empty());
    }

    #[test]
    fn gaps_break_the_chain() {
        let mut c = controls(&[OneDown, OneUp, OneDown, OneUp]);
        c.remove(&1);
        let p = pair_conversation(&conv(4), &c, Default::default()).unwrap();
        assert_eq!(p.transactions.len(), 1);
        assert_eq!(p.omissions.len(), 2);
        assert!(p.omissions.iter().all(|o| o.reason == OmissionReason::Uncoded));
        assert_eq!(
            pair_conversation(&conv(4), &c, PairingOptions { strict: true }),
            Err(TransactionError::MissingCode { turn: 1 })
        );
    }

    #[test]
    fn same_speaker_pairs_skipped() {
        let doc = "#speaker a tutee\n#speaker b tutor\na: one\na: two\nb: three\n";
        let c = parse_plaintext("c", doc).unwrap();
        let p = pair_conversation(&c, &controls(&[OneUp, OneDown, OneUp]), Default::default()).unwrap();
        assert_eq!(p.transactions.len(), 1);
        assert_eq!(p.omissions[0].reason, OmissionReason::SameSpeaker);
    }

    #[test]
    fn exports() {
        let p = pair_conversation(&conv(2), &controls(&[OneDown, OneUp]), Default::default()).unwrap();
        assert_eq!(
            to_json_value(&p.transactions).to_string(),
            r#"[{"class":"complementary","controls":"↓↑","first":0,"second":1}]"#
        );
        assert_eq!(to_tsv(&p.transactions), "first\tsecond\tcontrols\tclass\n0\t1\t↓↑\tcomplementary\n");
    }
}
