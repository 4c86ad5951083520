//! Control and agreement scores.
//!
//! The control score of a speaker is the share of their coded turns that
//! are one-up. The agreement score of a conversation is the share of its
//! transactions that are complementary. Both are kept as exact count ratios;
//! the four-decimal rendering is for display only.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::annotation::Annotation;
use crate::codebook::{
    translate, validate_annotation_set, AnnotationIssue, ControlCode, NumericCode, ResponseMode,
    TranslationMatrix,
};
use crate::scalar::{self, parse_decimal, render_ratio4, Scalar};
use crate::transactions::{pair_conversation, ClassCounts, PairingOptions, Transaction, TransactionClass, TransactionError};
use crate::transcript::{Conversation, Role};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("speaker has no coded turns")]
    NoCodedTurns,
    #[error("no transactions")]
    NoTransactions,
    #[error("empty input")]
    EmptyInput,
    #[error("annotation does not validate: {}", render_issues(.0))]
    InvalidAnnotation(Vec<AnnotationIssue>),
    #[error(transparent)]
    Transactions(#[from] TransactionError),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

fn render_issues(issues: &[AnnotationIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// An exact ratio of counts, kept unreduced so the counts stay visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub numerator: u64,
    pub denominator: u64,
}

impl Score {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        assert!(denominator > 0, "score denominator must be positive");
        Score {
            numerator,
            denominator,
        }
    }

    pub fn from_decimal(s: &str) -> Option<Self> {
        parse_decimal(s).map(|(n, d)| Score::new(n, d))
    }

    pub fn to_scalar<S: Scalar>(&self) -> S {
        S::from_ratio(self.numerator, self.denominator)
    }

    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn render(&self) -> String {
        render_ratio4(self.numerator, self.denominator)
    }

    /// Compares the exact values (cross-multiplied).
    pub fn same_value(&self, other: &Score) -> bool {
        u128::from(self.numerator) * u128::from(other.denominator)
            == u128::from(other.numerator) * u128::from(self.denominator)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Score", 3)?;
        st.serialize_field("numerator", &self.numerator)?;
        st.serialize_field("denominator", &self.denominator)?;
        st.serialize_field("value", &self.render())?;
        st.end()
    }
}

/// Where a speaker's one-up turns came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OneUpBreakdown {
    pub initiation: u64,
    pub topic_change: u64,
    pub instruction_or_order: u64,
    pub disconfirmation: u64,
    pub talk_over: u64,
    pub pedagogical_question: u64,
    pub other: u64,
}

impl OneUpBreakdown {
    pub fn total(&self) -> u64 {
        self.initiation
            + self.topic_change
            + self.instruction_or_order
            + self.disconfirmation
            + self.talk_over
            + self.pedagogical_question
            + self.other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpeakerTally {
    pub speaker_id: String,
    pub role: Role,
    pub coded_turns: u64,
    pub one_up: u64,
    pub one_down: u64,
    pub one_across: u64,
    /// One-up turns per numeric code.
    #[serde(serialize_with = "serialize_code_map")]
    pub one_up_by_code: BTreeMap<NumericCode, u64>,
}

fn serialize_code_map<S: Serializer>(map: &BTreeMap<NumericCode, u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
}

impl SpeakerTally {
    pub fn new(speaker_id: impl Into<String>, role: Role) -> Self {
        SpeakerTally {
            speaker_id: speaker_id.into(),
            role,
            coded_turns: 0,
            one_up: 0,
            one_down: 0,
            one_across: 0,
            one_up_by_code: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, code: NumericCode, control: ControlCode) {
        self.coded_turns += 1;
        match control {
            ControlCode::OneUp => {
                self.one_up += 1;
                *self.one_up_by_code.entry(code).or_default() += 1;
            }
            ControlCode::OneDown => self.one_down += 1,
            ControlCode::OneAcross => self.one_across += 1,
        }
    }

    pub fn merge(&mut self, other: &SpeakerTally) {
        self.coded_turns += other.coded_turns;
        self.one_up += other.one_up;
        self.one_down += other.one_down;
        self.one_across += other.one_across;
        for (code, n) in &other.one_up_by_code {
            *self.one_up_by_code.entry(*code).or_default() += n;
        }
    }

    /// Categorizes one-up turns; talk-over takes precedence over the mode.
    pub fn breakdown(&self) -> OneUpBreakdown {
        let mut b = OneUpBreakdown::default();
        for (code, &n) in &self.one_up_by_code {
            let slot = if code.format.code() == 4 {
                &mut b.talk_over
            } else {
                match code.mode {
                    ResponseMode::Digit(9) => &mut b.initiation,
                    ResponseMode::Digit(8) => &mut b.topic_change,
                    ResponseMode::Digit(5 | 6) => &mut b.instruction_or_order,
                    ResponseMode::Digit(7) => &mut b.disconfirmation,
                    ResponseMode::Pedagogical => &mut b.pedagogical_question,
                    ResponseMode::Digit(_) => &mut b.other,
                }
            };
            *slot += n;
        }
        b
    }
}

pub fn control_score(tally: &SpeakerTally) -> Result<Score, MetricsError> {
    if tally.coded_turns == 0 {
        return Err(MetricsError::NoCodedTurns);
    }
    Ok(Score::new(tally.one_up, tally.coded_turns))
}

pub fn agreement_score(transactions: &[Transaction]) -> Result<Score, MetricsError> {
    if transactions.is_empty() {
        return Err(MetricsError::NoTransactions);
    }
    let complementary = transactions
        .iter()
        .filter(|t| t.class == TransactionClass::Complementary)
        .count();
    Ok(Score::new(complementary as u64, transactions.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TurnScore {
    pub index: usize,
    pub speaker: String,
    pub role: Role,
    pub code: Option<String>,
    pub control: Option<String>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransactionView {
    pub first: usize,
    pub second: usize,
    pub controls: String,
    pub class: TransactionClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Scorecard {
    pub conversation_id: String,
    pub participant: String,
    pub gender: Option<String>,
    pub coder: String,
    pub revision: u64,
    pub matrix_version: String,
    pub tutor: SpeakerTally,
    pub tutee: SpeakerTally,
    /// Tutor turns only; `None` when the tutor has no coded turns.
    pub control_score_tutor: Option<Score>,
    pub control_score_tutee: Option<Score>,
    /// `None` when no transaction could be formed.
    pub agreement_score: Option<Score>,
    pub transaction_counts: ClassCounts,
    pub turns: Vec<TurnScore>,
    pub transactions: Vec<TransactionView>,
    pub uncoded_turns: Vec<usize>,
    pub degenerate_turns: Vec<usize>,
    pub omitted_pairs: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub strict: bool,
}

/// Translates, pairs and tallies one coded conversation.
pub fn scorecard(
    conv: &Conversation,
    annotation: &Annotation,
    matrix: &TranslationMatrix,
    options: ScoreOptions,
) -> Result<Scorecard, MetricsError> {
    let issues: Vec<AnnotationIssue> = validate_annotation_set(conv, annotation, matrix)
        .into_iter()
        .filter(|i| i.is_blocking() || options.strict)
        .collect();
    if !issues.is_empty() {
        return Err(MetricsError::InvalidAnnotation(issues));
    }

    let speaker_for = |role: Role| {
        conv.speaker_with_role(role)
            .map(|s| s.id.clone())
            .unwrap_or_default()
    };
    let mut tutor = SpeakerTally::new(speaker_for(Role::Tutor), Role::Tutor);
    let mut tutee = SpeakerTally::new(speaker_for(Role::Tutee), Role::Tutee);
    let mut controls = BTreeMap::new();
    let mut turns = Vec::with_capacity(conv.turns.len());
    let mut uncoded_turns = Vec::new();
    let mut degenerate_turns = Vec::new();

    for turn in &conv.turns {
        let role = conv.role_of(&turn.speaker_id).unwrap_or(Role::Tutee);
        let degenerate = turn.is_degenerate();
        let code = annotation.codes.get(&turn.index).copied();
        let control = match code {
            Some(code) => {
                let control = translate(code, matrix).expect("validated above");
                controls.insert(turn.index, control);
                let tally = if role == Role::Tutor { &mut tutor } else { &mut tutee };
                tally.record(code, control);
                Some(control)
            }
            None => {
                if degenerate {
                    degenerate_turns.push(turn.index);
                } else {
                    uncoded_turns.push(turn.index);
                }
                None
            }
        };
        turns.push(TurnScore {
            index: turn.index,
            speaker: turn.speaker_id.clone(),
            role,
            code: code.map(|c| c.to_string()),
            control: control.map(|c| c.arrow().to_string()),
            degenerate,
        });
    }

    let pairing = pair_conversation(conv, &controls, PairingOptions { strict: options.strict })?;
    let transaction_counts: ClassCounts = pairing.transactions.iter().map(|t| t.class).collect();

    Ok(Scorecard {
        conversation_id: conv.id.clone(),
        participant: conv.participant().to_string(),
        gender: conv.metadata.get("gender").cloned(),
        coder: annotation.coder_id.clone(),
        revision: annotation.revision,
        matrix_version: matrix.version.clone(),
        control_score_tutor: control_score(&tutor).ok(),
        control_score_tutee: control_score(&tutee).ok(),
        agreement_score: agreement_score(&pairing.transactions).ok(),
        tutor,
        tutee,
        transaction_counts,
        transactions: pairing
            .transactions
            .iter()
            .map(|t| TransactionView {
                first: t.first_index,
                second: t.second_index,
                controls: t.controls(),
                class: t.class,
            })
            .collect(),
        turns,
        uncoded_turns,
        degenerate_turns,
        omitted_pairs: pairing.omissions.len(),
    })
}

impl Scorecard {
    /// Arrow per coded turn, in turn order.
    pub fn arrows(&self) -> String {
        self.turns.iter().filter_map(|t| t.control.as_deref()).collect()
    }

    pub fn summary(&self) -> ScoreSummary {
        ScoreSummary {
            participant: self.participant.clone(),
            gender: self.gender.clone(),
            control: self.control_score_tutor,
            agreement: self.agreement_score,
            tutor_counts: Some(TallyCounts::of(&self.tutor)),
            tutee_counts: Some(TallyCounts::of(&self.tutee)),
            transaction_counts: Some(self.transaction_counts),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_canonical_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TallyCounts {
    pub one_up: u64,
    pub one_down: u64,
    pub one_across: u64,
    pub coded: u64,
}

impl TallyCounts {
    pub fn of(t: &SpeakerTally) -> Self {
        TallyCounts {
            one_up: t.one_up,
            one_down: t.one_down,
            one_across: t.one_across,
            coded: t.coded_turns,
        }
    }
}

/// One row of a study-level score table. Rows read from a published table
/// carry only the rounded scores; rows from scorecards carry the counts too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    pub participant: String,
    pub gender: Option<String>,
    pub control: Option<Score>,
    pub agreement: Option<Score>,
    pub tutor_counts: Option<TallyCounts>,
    pub tutee_counts: Option<TallyCounts>,
    pub transaction_counts: Option<ClassCounts>,
}

pub const SCORE_TSV_HEADER: &str = "participant\tgender\tcontrol_score\tagreement_score\t\
tutor_one_up\ttutor_one_down\ttutor_one_across\ttutor_coded\t\
tutee_one_up\ttutee_one_down\ttutee_one_across\ttutee_coded\t\
complementary\tsymmetrical\ttransitory";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summaries_to_tsv(rows: &[ScoreSummary]) -> String {
    let mut out = format!("{SCORE_TSV_HEADER}\n");
    for r in rows {
        let t = r.tutor_counts;
        let e = r.tutee_counts;
        let c = r.transaction_counts;
        let cols = [
            r.participant.clone(),
            r.gender.clone().unwrap_or_default(),
            opt(r.control),
            opt(r.agreement),
            opt(t.map(|t| t.one_up)),
            opt(t.map(|t| t.one_down)),
            opt(t.map(|t| t.one_across)),
            opt(t.map(|t| t.coded)),
            opt(e.map(|t| t.one_up)),
            opt(e.map(|t| t.one_down)),
            opt(e.map(|t| t.one_across)),
            opt(e.map(|t| t.coded)),
            opt(c.map(|c| c.complementary)),
            opt(c.map(|c| c.symmetrical)),
            opt(c.map(|c| c.transitory)),
        ];
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    out
}

/// Reads a score table. Only `participant`, `gender`, `control_score` and
/// `agreement_score` are required; count columns may be absent or blank.
/// When counts are present the scores are rebuilt from them exactly.
pub fn summaries_from_tsv(source: &str) -> Result<Vec<ScoreSummary>, MetricsError> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Err(MetricsError::EmptyInput);
    };
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let col = |name: &str| names.iter().position(|n| *n == name);
    let (Some(p), Some(g), Some(cs), Some(ag)) = (
        col("participant"),
        col("gender"),
        col("control_score"),
        col("agreement_score"),
    ) else {
        return Err(MetricsError::MalformedRow {
            line: 1,
            reason: "header needs participant, gender, control_score, agreement_score".into(),
        });
    };

    let mut rows = Vec::new();
    for (line, raw) in lines {
        let cells: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let get = |i: usize| cells.get(i).copied().filter(|c| !c.is_empty());
        let count = |name: &str| -> Result<Option<u64>, MetricsError> {
            match col(name).and_then(get) {
                None => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| MetricsError::MalformedRow {
                    line,
                    reason: format!("`{name}` is not a count"),
                }),
            }
        };
        let score = |i: usize| -> Result<Option<Score>, MetricsError> {
            match get(i) {
                None => Ok(None),
                Some(v) => Score::from_decimal(v).map(Some).ok_or(MetricsError::MalformedRow {
                    line,
                    reason: format!("`{v}` is not a decimal score"),
                }),
            }
        };
        let tally = |prefix: &str| -> Result<Option<TallyCounts>, MetricsError> {
            let parts = (
                count(&format!("{prefix}_one_up"))?,
                count(&format!("{prefix}_one_down"))?,
                count(&format!("{prefix}_one_across"))?,
                count(&format!("{prefix}_coded"))?,
            );
            Ok(match parts {
                (Some(one_up), Some(one_down), Some(one_across), Some(coded)) => Some(TallyCounts {
                    one_up,
                    one_down,
                    one_across,
                    coded,
                }),
                _ => None,
            })
        };
        let tutor_counts = tally("tutor")?;
        let tutee_counts = tally("tutee")?;
        let transaction_counts = match (count("complementary")?, count("symmetrical")?, count("transitory")?) {
            (Some(complementary), Some(symmetrical), Some(transitory)) => Some(ClassCounts {
                complementary,
                symmetrical,
                transitory,
            }),
            _ => None,
        };
        let control = match tutor_counts {
            Some(t) if t.coded > 0 => Some(Score::new(t.one_up, t.coded)),
            _ => score(cs)?,
        };
        let agreement = match transaction_counts {
            Some(c) if c.total() > 0 => Some(Score::new(c.complementary, c.total())),
            _ => score(ag)?,
        };
        rows.push(ScoreSummary {
            participant: get(p).unwrap_or_default().to_string(),
            gender: get(g).map(str::to_string),
            control,
            agreement,
            tutor_counts,
            tutee_counts,
            transaction_counts,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary<S> {
    pub n: usize,
    pub mean: S,
    pub median: S,
    pub min: S,
    pub max: S,
}

impl<S: Scalar> Summary<S> {
    pub fn of(values: &[S]) -> Option<Self> {
        let (min, max) = scalar::min_max(values)?;
        Some(Summary {
            n: values.len(),
            mean: scalar::mean(values)?,
            median: scalar::median(values)?,
            min,
            max,
        })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "mean": self.mean.render4(),
            "median": self.median.render4(),
            "min": self.min.render4(),
            "max": self.max.render4(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyAggregate<S> {
    pub conversations: usize,
    pub control: Option<Summary<S>>,
    pub agreement: Option<Summary<S>>,
    /// Σ one-up / Σ coded over all tutee tallies.
    pub pooled_tutee_control: Option<Score>,
    pub pooled_tutor_control: Option<Score>,
}

impl<S: Scalar> StudyAggregate<S> {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "conversations": self.conversations,
            "control": self.control.as_ref().map(Summary::to_json_value),
            "agreement": self.agreement.as_ref().map(Summary::to_json_value),
            "pooled_tutee_control": self.pooled_tutee_control,
            "pooled_tutor_control": self.pooled_tutor_control,
        })
    }
}

fn pooled(counts: impl Iterator<Item = TallyCounts>) -> Option<Score> {
    let (up, coded) = counts.fold((0, 0), |(u, c), t| (u + t.one_up, c + t.coded));
    (coded > 0).then(|| Score::new(up, coded))
}

/// Study-level statistics. Pooled control scores sum the counts rather than
/// averaging per-conversation ratios.
pub fn aggregate<S: Scalar>(rows: &[ScoreSummary]) -> Result<StudyAggregate<S>, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let control: Vec<S> = rows.iter().filter_map(|r| r.control).map(|s| s.to_scalar()).collect();
    let agreement: Vec<S> = rows.iter().filter_map(|r| r.agreement).map(|s| s.to_scalar()).collect();
    Ok(StudyAggregate {
        conversations: rows.len(),
        control: Summary::of(&control),
        agreement: Summary::of(&agreement),
        pooled_tutee_control: pooled(rows.iter().filter_map(|r| r.tutee_counts)),
        pooled_tutor_control: pooled(rows.iter().filter_map(|r| r.tutor_counts)),
    })
}
