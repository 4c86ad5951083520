//! Numeric codes, control codes and the translation matrix between them.
//!
//! A numeric code pairs a message format (1..=5) with a response mode
//! (0..=9, or `P` for a pedagogical question). The matrix maps every cell of
//! the declared grid to one of three control codes. Cells fixed by the
//! published coding tables carry [`Provenance::Paper`] and cannot be changed
//! by a matrix file unless overrides are explicitly allowed; everything else
//! is [`Provenance::Extended`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotation::Annotation;
use crate::transcript::{Conversation, Role};

pub const MATRIX_HEADER: &str = "format\tmode\tcontrol\tprovenance\tlabel";
pub const DEFAULT_MATRIX_VERSION: &str = "rcccs-default-1";
/// Bundled default matrix, byte-identical to [`TranslationMatrix::to_tsv`]
/// of [`default_matrix`].
pub const DEFAULT_MATRIX_TSV: &str = include_str!("../data/rcccs-default.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageFormat(u8);

impl MessageFormat {
    pub const ASSERTION: MessageFormat = MessageFormat(1);
    pub const QUESTION: MessageFormat = MessageFormat(2);
    pub const NONCOMPLETE: MessageFormat = MessageFormat(3);
    pub const TALK_OVER: MessageFormat = MessageFormat(4);
    pub const OTHER: MessageFormat = MessageFormat(5);

    pub const ALL: [MessageFormat; 5] = [
        Self::ASSERTION,
        Self::QUESTION,
        Self::NONCOMPLETE,
        Self::TALK_OVER,
        Self::OTHER,
    ];

    pub fn new(code: u8) -> Option<Self> {
        (1..=5).contains(&code).then_some(MessageFormat(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "assertion",
            2 => "question",
            3 => "noncomplete",
            4 => "talk-over",
            _ => "other",
        }
    }
}

impl fmt::Display for MessageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Response mode: a digit 0..=9 or the pedagogical-question symbol `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResponseMode {
    Digit(u8),
    Pedagogical,
}

impl ResponseMode {
    pub const SUPPORT: ResponseMode = ResponseMode::Digit(1);
    pub const NON_SUPPORT: ResponseMode = ResponseMode::Digit(2);
    pub const EXTENSION: ResponseMode = ResponseMode::Digit(3);
    pub const ANSWER: ResponseMode = ResponseMode::Digit(4);
    pub const INSTRUCTION: ResponseMode = ResponseMode::Digit(5);
    pub const ORDER: ResponseMode = ResponseMode::Digit(6);
    pub const DISCONFIRMATION: ResponseMode = ResponseMode::Digit(7);
    pub const TOPIC_CHANGE: ResponseMode = ResponseMode::Digit(8);
    pub const INITIATION: ResponseMode = ResponseMode::Digit(9);
    pub const OTHER: ResponseMode = ResponseMode::Digit(0);

    /// Grid order used for rendering: 1..=9, 0, P.
    pub const ALL: [ResponseMode; 11] = [
        ResponseMode::Digit(1),
        ResponseMode::Digit(2),
        ResponseMode::Digit(3),
        ResponseMode::Digit(4),
        ResponseMode::Digit(5),
        ResponseMode::Digit(6),
        ResponseMode::Digit(7),
        ResponseMode::Digit(8),
        ResponseMode::Digit(9),
        ResponseMode::Digit(0),
        ResponseMode::Pedagogical,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ResponseMode::Digit(1) => "support",
            ResponseMode::Digit(2) => "non-support",
            ResponseMode::Digit(3) => "extension",
            ResponseMode::Digit(4) => "answer",
            ResponseMode::Digit(5) => "instruction",
            ResponseMode::Digit(6) => "order",
            ResponseMode::Digit(7) => "disconfirmation",
            ResponseMode::Digit(8) => "topic change",
            ResponseMode::Digit(9) => "initiation",
            ResponseMode::Digit(_) => "other",
            ResponseMode::Pedagogical => "pedagogical question",
        }
    }

    /// Resolves a label, accepting "response" as an alias of answer.
    pub fn from_label(label: &str) -> Option<ResponseMode> {
        let label = label.trim().to_ascii_lowercase();
        if label == "response" {
            return Some(ResponseMode::ANSWER);
        }
        ResponseMode::ALL.into_iter().find(|m| m.label() == label)
    }

    /// Only the tutor may ask pedagogical questions.
    pub fn role_gate(self) -> Option<Role> {
        match self {
            ResponseMode::Pedagogical => Some(Role::Tutor),
            ResponseMode::Digit(_) => None,
        }
    }

    fn sort_key(self) -> u8 {
        match self {
            ResponseMode::Digit(0) => 10,
            ResponseMode::Digit(d) => d,
            ResponseMode::Pedagogical => 11,
        }
    }
}

impl fmt::Display for ResponseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseMode::Digit(d) => write!(f, "{d}"),
            ResponseMode::Pedagogical => f.write_str("P"),
        }
    }
}

impl FromStr for ResponseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P" | "p" => Ok(ResponseMode::Pedagogical),
            d if d.len() == 1 && d.as_bytes()[0].is_ascii_digit() => {
                Ok(ResponseMode::Digit(d.as_bytes()[0] - b'0'))
            }
            other => Err(format!("invalid response mode `{other}`")),
        }
    }
}

impl Serialize for ResponseMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResponseMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumericCode {
    pub format: MessageFormat,
    pub mode: ResponseMode,
}

impl NumericCode {
    pub fn new(format: MessageFormat, mode: ResponseMode) -> Self {
        NumericCode { format, mode }
    }

    /// Shorthand for tests and fixtures: `code(1, '4')`, `code(2, 'P')`.
    pub fn from_parts(format: u8, mode: char) -> Option<Self> {
        let format = MessageFormat::new(format)?;
        let mode = mode.to_string().parse().ok()?;
        Some(NumericCode { format, mode })
    }

    pub fn label(&self) -> String {
        format!("{}, {}", self.format.label(), self.mode.label())
    }
}

impl fmt::Display for NumericCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.format, self.mode)
    }
}

impl PartialOrd for ResponseModeOrd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(PartialEq, Eq)]
struct ResponseModeOrd(ResponseMode);

impl Ord for ResponseModeOrd {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.sort_key().cmp(&other.0.sort_key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControlCode {
    OneUp,
    OneDown,
    OneAcross,
}

impl ControlCode {
    pub const ALL: [ControlCode; 3] = [ControlCode::OneUp, ControlCode::OneDown, ControlCode::OneAcross];

    pub fn arrow(self) -> char {
        match self {
            ControlCode::OneUp => '↑',
            ControlCode::OneDown => '↓',
            ControlCode::OneAcross => '→',
        }
    }

    pub fn from_arrow(c: char) -> Option<Self> {
        ControlCode::ALL.into_iter().find(|cc| cc.arrow() == c)
    }

    /// Keyword used in matrix files.
    pub fn keyword(self) -> &'static str {
        match self {
            ControlCode::OneUp => "up",
            ControlCode::OneDown => "down",
            ControlCode::OneAcross => "across",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        ControlCode::ALL.into_iter().find(|cc| cc.keyword() == s.trim())
    }
}

impl fmt::Display for ControlCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.arrow())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Paper,
    Extended,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Paper => "paper",
            Provenance::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixEntry {
    pub control: ControlCode,
    pub provenance: Provenance,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: cell {code} listed twice")]
    DuplicateCell { line: usize, code: NumericCode },
    #[error("cell {code} deviates from the published table ({expected} expected, {found} found)")]
    PaperCellOverridden {
        code: NumericCode,
        expected: ControlCode,
        found: ControlCode,
    },
    #[error("cell {code} is tagged paper but the published tables do not fix it")]
    UnanchoredPaperCell { code: NumericCode },
    #[error("grid is incomplete: missing {missing:?}")]
    IncompleteGrid { missing: Vec<String> },
    #[error("line {line}: label `{label}` does not match cell {code}")]
    LabelMismatch {
        line: usize,
        code: NumericCode,
        label: String,
    },
    #[error("no matrix cell for {0}")]
    UnknownCell(NumericCode),
}

/// Control code fixed by the published coding tables, if any.
///
/// These are the twelve cells of the partial translation table plus the
/// columns the text states are always one-up: pedagogical questions,
/// instructions, orders, disconfirmations and initiations.
pub fn paper_anchor(code: NumericCode) -> Option<ControlCode> {
    use ControlCode::*;
    match code.mode {
        ResponseMode::Pedagogical => return Some(OneUp),
        ResponseMode::Digit(5 | 6 | 7 | 9) => return Some(OneUp),
        _ => {}
    }
    let table = match (code.format.code(), code.mode) {
        (1, ResponseMode::Digit(1)) => OneDown,
        (1, ResponseMode::Digit(2)) => OneUp,
        (1, ResponseMode::Digit(3)) => OneAcross,
        (1, ResponseMode::Digit(4)) => OneUp,
        (2, ResponseMode::Digit(1)) => OneDown,
        (2, ResponseMode::Digit(2)) => OneUp,
        (2, ResponseMode::Digit(3)) => OneDown,
        (2, ResponseMode::Digit(4)) => OneUp,
        (4, ResponseMode::Digit(1)) => OneDown,
        (4, ResponseMode::Digit(2)) => OneUp,
        (4, ResponseMode::Digit(3)) => OneUp,
        (4, ResponseMode::Digit(4)) => OneUp,
        _ => return None,
    };
    Some(table)
}

fn extended_cell(code: NumericCode) -> ControlCode {
    use ControlCode::*;
    // Rows without published values follow the assertion row.
    let row = match code.format.code() {
        3 | 5 => 1,
        f => f,
    };
    match (row, code.mode) {
        (2, ResponseMode::Digit(8 | 0)) => OneDown,
        (4, ResponseMode::Digit(8 | 0)) => OneUp,
        (_, ResponseMode::Digit(8)) => OneUp,
        (_, ResponseMode::Digit(0)) => OneAcross,
        _ => paper_anchor(NumericCode::new(MessageFormat(row), code.mode)).unwrap_or(OneAcross),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationMatrix {
    pub version: String,
    entries: BTreeMap<NumericCode, MatrixEntry>,
}

/// The bundled matrix: published cells plus the documented grid completion
/// over all five formats and eleven modes.
pub fn default_matrix() -> TranslationMatrix {
    let mut entries = BTreeMap::new();
    for format in MessageFormat::ALL {
        for mode in ResponseMode::ALL {
            let code = NumericCode::new(format, mode);
            let (control, provenance) = match paper_anchor(code) {
                Some(c) => (c, Provenance::Paper),
                None => (extended_cell(code), Provenance::Extended),
            };
            entries.insert(
                code,
                MatrixEntry {
                    control,
                    provenance,
                    label: code.label(),
                },
            );
        }
    }
    TranslationMatrix {
        version: DEFAULT_MATRIX_VERSION.to_string(),
        entries,
    }
}

impl Default for TranslationMatrix {
    fn default() -> Self {
        default_matrix()
    }
}

impl TranslationMatrix {
    pub fn get(&self, code: NumericCode) -> Option<&MatrixEntry> {
        self.entries.get(&code)
    }

    pub fn contains(&self, code: NumericCode) -> bool {
        self.entries.contains_key(&code)
    }

    pub fn entries(&self) -> impl Iterator<Item = (NumericCode, &MatrixEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn formats(&self) -> BTreeSet<MessageFormat> {
        self.entries.keys().map(|c| c.format).collect()
    }

    pub fn modes(&self) -> Vec<ResponseMode> {
        let mut modes: Vec<ResponseMode> = self
            .entries
            .keys()
            .map(|c| c.mode)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        modes.sort_by_key(|m| m.sort_key());
        modes
    }

    /// Renders the matrix in the TSV interchange form.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#version {}\n{MATRIX_HEADER}\n", self.version);
        for format in self.formats() {
            for mode in self.modes() {
                let code = NumericCode::new(format, mode);
                if let Some(e) = self.entries.get(&code) {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        format,
                        mode,
                        e.control.keyword(),
                        e.provenance.as_str(),
                        e.label
                    ));
                }
            }
        }
        out
    }

    /// JSON view used by the service: version plus one object per cell.
    pub fn to_json_value(&self) -> serde_json::Value {
        let cells: Vec<_> = self
            .entries()
            .map(|(code, e)| {
                serde_json::json!({
                    "format": code.format.code(),
                    "mode": code.mode.to_string(),
                    "control": e.control.keyword(),
                    "arrow": e.control.arrow().to_string(),
                    "provenance": e.provenance.as_str(),
                    "label": e.label,
                })
            })
            .collect();
        serde_json::json!({ "version": self.version, "cells": cells })
    }
}

/// Parses a matrix TSV document and validates it.
pub fn load_matrix(source: &str, allow_override: bool) -> Result<TranslationMatrix, MatrixError> {
    let mut version = String::from("unversioned");
    let mut entries: BTreeMap<NumericCode, MatrixEntry> = BTreeMap::new();
    let mut saw_header = false;

    for (n, raw) in source.lines().enumerate() {
        let line = n + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            if let Some(v) = comment.strip_prefix("version") {
                version = v.trim().to_string();
            }
            continue;
        }
        if !saw_header {
            if raw.trim_end() != MATRIX_HEADER {
                return Err(MatrixError::MalformedRow {
                    line,
                    reason: format!("expected header `{MATRIX_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() < 4 || cols.len() > 5 {
            return Err(row_err(line, "expected 4 or 5 tab-separated columns"));
        }
        let format = cols[0]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(MessageFormat::new)
            .ok_or_else(|| row_err(line, "format must be 1..5"))?;
        let mode: ResponseMode = cols[1].parse().map_err(|e: String| row_err(line, &e))?;
        let control = ControlCode::from_keyword(cols[2])
            .ok_or_else(|| row_err(line, "control must be up, down or across"))?;
        let provenance = match cols[3].trim() {
            "paper" => Provenance::Paper,
            "extended" => Provenance::Extended,
            _ => return Err(row_err(line, "provenance must be paper or extended")),
        };
        let code = NumericCode::new(format, mode);
        let label = match cols.get(4).map(|l| l.trim()).filter(|l| !l.is_empty()) {
            Some(l) => {
                check_label(code, l).map_err(|_| MatrixError::LabelMismatch {
                    line,
                    code,
                    label: l.to_string(),
                })?;
                l.to_string()
            }
            None => code.label(),
        };
        if entries.contains_key(&code) {
            return Err(MatrixError::DuplicateCell { line, code });
        }
        entries.insert(
            code,
            MatrixEntry {
                control,
                provenance,
                label,
            },
        );
    }

    let matrix = TranslationMatrix { version, entries };
    validate_matrix(&matrix, allow_override)?;
    Ok(matrix)
}

fn row_err(line: usize, reason: &str) -> MatrixError {
    MatrixError::MalformedRow {
        line,
        reason: reason.to_string(),
    }
}

/// Labels are `<format label>, <mode label>`; matching is case-insensitive
/// and accepts "response" for the answer mode.
fn check_label(code: NumericCode, label: &str) -> Result<(), ()> {
    let Some((f, m)) = label.split_once(',') else {
        return Err(());
    };
    let format_ok = f.trim().eq_ignore_ascii_case(code.format.label());
    let mode_ok = ResponseMode::from_label(m) == Some(code.mode);
    (format_ok && mode_ok).then_some(()).ok_or(())
}

/// Checks the matrix invariants: published cells unchanged, paper tags only
/// on anchored cells, and a complete rectangular grid covering the
/// published rows and columns.
pub fn validate_matrix(matrix: &TranslationMatrix, allow_override: bool) -> Result<(), MatrixError> {
    for (code, entry) in matrix.entries() {
        match paper_anchor(code) {
            Some(expected) if expected != entry.control && !allow_override => {
                return Err(MatrixError::PaperCellOverridden {
                    code,
                    expected,
                    found: entry.control,
                });
            }
            None if entry.provenance == Provenance::Paper => {
                return Err(MatrixError::UnanchoredPaperCell { code });
            }
            _ => {}
        }
    }

    let mut formats = matrix.formats();
    formats.extend([MessageFormat::ASSERTION, MessageFormat::QUESTION, MessageFormat::TALK_OVER]);
    let mut modes: BTreeSet<ResponseModeOrd> = matrix.modes().into_iter().map(ResponseModeOrd).collect();
    modes.extend((1..=4).map(|d| ResponseModeOrd(ResponseMode::Digit(d))));

    let missing: Vec<String> = formats
        .iter()
        .flat_map(|f| modes.iter().map(move |m| NumericCode::new(*f, m.0)))
        .filter(|c| !matrix.contains(*c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(MatrixError::IncompleteGrid { missing });
    }
    Ok(())
}

/// Looks up the control code for a numeric code.
pub fn translate(code: NumericCode, matrix: &TranslationMatrix) -> Result<ControlCode, MatrixError> {
    matrix
        .get(code)
        .map(|e| e.control)
        .ok_or(MatrixError::UnknownCell(code))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationIssue {
    ConversationMismatch { expected: String, found: String },
    MissingCode { turn: usize },
    DanglingCode { turn: usize },
    DegenerateCoded { turn: usize },
    RoleGateViolation { turn: usize, code: String },
    UnknownCell { turn: usize, code: String },
}

impl AnnotationIssue {
    pub fn turn(&self) -> Option<usize> {
        match self {
            AnnotationIssue::ConversationMismatch { .. } => None,
            AnnotationIssue::MissingCode { turn }
            | AnnotationIssue::DanglingCode { turn }
            | AnnotationIssue::DegenerateCoded { turn }
            | AnnotationIssue::RoleGateViolation { turn, .. }
            | AnnotationIssue::UnknownCell { turn, .. } => Some(*turn),
        }
    }

    /// Issues that make an annotation unusable; a missing code only leaves
    /// a gap in the transaction chain.
    pub fn is_blocking(&self) -> bool {
        !matches!(self, AnnotationIssue::MissingCode { .. })
    }
}

impl fmt::Display for AnnotationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationIssue::ConversationMismatch { expected, found } => {
                write!(f, "annotation is for `{found}`, not `{expected}`")
            }
            AnnotationIssue::MissingCode { turn } => write!(f, "turn {turn}: no code"),
            AnnotationIssue::DanglingCode { turn } => {
                write!(f, "dangling code: turn {turn} does not exist")
            }
            AnnotationIssue::DegenerateCoded { turn } => {
                write!(f, "turn {turn}: degenerate turns cannot be coded")
            }
            AnnotationIssue::RoleGateViolation { turn, code } => {
                write!(f, "role gate violation: turn {turn} code {code} is reserved for the tutor")
            }
            AnnotationIssue::UnknownCell { turn, code } => {
                write!(f, "turn {turn}: code {code} is not a matrix cell")
            }
        }
    }
}

/// Cross-checks an annotation against its conversation and the matrix.
pub fn validate_annotation_set(
    conv: &Conversation,
    annotation: &Annotation,
    matrix: &TranslationMatrix,
) -> Vec<AnnotationIssue> {
    let mut issues = Vec::new();
    if annotation.conversation_id != conv.id {
        issues.push(AnnotationIssue::ConversationMismatch {
            expected: conv.id.clone(),
            found: annotation.conversation_id.clone(),
        });
    }
    for turn in &conv.turns {
        if !turn.is_degenerate() && !annotation.codes.contains_key(&turn.index) {
            issues.push(AnnotationIssue::MissingCode { turn: turn.index });
        }
    }
    for (&index, &code) in &annotation.codes {
        let Some(turn) = conv.turn(index) else {
            issues.push(AnnotationIssue::DanglingCode { turn: index });
            continue;
        };
        if turn.is_degenerate() {
            issues.push(AnnotationIssue::DegenerateCoded { turn: index });
        }
        if let Some(gate) = code.mode.role_gate() {
            if conv.role_of(&turn.speaker_id) != Some(gate) {
                issues.push(AnnotationIssue::RoleGateViolation {
                    turn: index,
                    code: code.to_string(),
                });
            }
        }
        if !matrix.contains(code) {
            issues.push(AnnotationIssue::UnknownCell {
                turn: index,
                code: code.to_string(),
            });
        }
    }
    issues
}
