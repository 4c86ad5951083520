//! Rule-based pre-annotation.
//!
//! Rules are data: an ordered JSON array of `{id, priority, when, emit}`
//! objects. For each turn the highest-priority rule whose `when` predicate
//! holds emits the numeric code. Lexical predicates operate on the spoken
//! text (markers removed), lowercase-folded with punctuation stripped.
//!
//! The output is an [`Annotation`] under the reserved coder id `auto`; it is
//! never merged with human codes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{Annotation, AUTO_CODER};
use crate::codebook::{translate, MessageFormat, NumericCode, ResponseMode, TranslationMatrix};
use crate::transcript::{Conversation, Role, Turn};

pub const DEFAULT_RULES_JSON: &str = include_str!("../data/default-rules.json");

#[derive(Debug, Error, PartialEq)]
pub enum AutocodeError {
    #[error("invalid rule file: {0}")]
    Json(String),
    #[error("rules `{first}` and `{second}` share priority {priority}")]
    DuplicatePriority {
        first: String,
        second: String,
        priority: i32,
    },
    #[error("rule `{rule}` emits format {format}, which is not 1..5")]
    BadFormat { rule: String, format: u8 },
    #[error("rule `{rule}` emits {code}, which is not a matrix cell")]
    UnknownCell { rule: String, code: NumericCode },
    #[error("no rule matched turn {index}")]
    NoRuleMatched { index: usize },
    #[error("annotations cover different conversations (`{0}` vs `{1}`)")]
    ConversationMismatch(String, String),
}

/// Conditions a turn must meet; absent fields are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_turn: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub talk_over: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    /// Spoken text ends with `?`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<bool>,
    /// Message format of the previous coded turn is one of these.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_format: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_other_speaker: Option<bool>,
    /// Whole normalized text equals one of these phrases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_in: Option<Vec<String>>,
    /// Normalized text starts with one of these word sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts_with: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
    /// Minimum share of the turn's distinct tokens that also occur in the
    /// previous turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echoes_previous: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emit {
    pub format: u8,
    pub mode: ResponseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub priority: i32,
    #[serde(default)]
    pub when: Predicate,
    pub emit: Emit,
}

impl Rule {
    fn code(&self) -> NumericCode {
        NumericCode::new(
            MessageFormat::new(self.emit.format).expect("validated on load"),
            self.emit.mode,
        )
    }
}

/// Rules in evaluation order (descending priority).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<Rule>) -> Result<Self, AutocodeError> {
        for r in &rules {
            if MessageFormat::new(r.emit.format).is_none() {
                return Err(AutocodeError::BadFormat {
                    rule: r.id.clone(),
                    format: r.emit.format,
                });
            }
        }
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        if let Some(w) = rules.windows(2).find(|w| w[0].priority == w[1].priority) {
            return Err(AutocodeError::DuplicatePriority {
                first: w[0].id.clone(),
                second: w[1].id.clone(),
                priority: w[0].priority,
            });
        }
        Ok(RuleSet { rules })
    }

    pub fn from_json(source: &str) -> Result<Self, AutocodeError> {
        let rules: Vec<Rule> =
            serde_json::from_str(source).map_err(|e| AutocodeError::Json(e.to_string()))?;
        RuleSet::new(rules)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn without(&self, id: &str) -> RuleSet {
        RuleSet {
            rules: self.rules.iter().filter(|r| r.id != id).cloned().collect(),
        }
    }

    /// Every emitted code must be a cell of `matrix`.
    pub fn check_against(&self, matrix: &TranslationMatrix) -> Result<(), AutocodeError> {
        for r in &self.rules {
            let code = r.code();
            if !matrix.contains(code) {
                return Err(AutocodeError::UnknownCell {
                    rule: r.id.clone(),
                    code,
                });
            }
        }
        Ok(())
    }
}

pub fn default_rules() -> RuleSet {
    RuleSet::from_json(DEFAULT_RULES_JSON).expect("bundled rules are valid")
}

/// The previous non-degenerate turn together with the code it received.
#[derive(Debug, Clone, Copy)]
pub struct CodedTurn<'a> {
    pub turn: &'a Turn,
    pub code: NumericCode,
}

#[derive(Debug, Clone, Copy)]
pub struct TurnContext<'a> {
    pub role: Role,
    /// The turn opens the conversation.
    pub first_turn: bool,
    pub prev: Option<CodedTurn<'a>>,
}

/// Lowercase, strip punctuation (apostrophes kept), collapse whitespace.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '\'' || c == '’' {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .map(|c| if c == '’' { '\'' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn starts_with_words(haystack: &[&str], phrase: &str) -> bool {
    let needle = tokens(phrase);
    !needle.is_empty() && haystack.len() >= needle.len() && haystack[..needle.len()] == needle[..]
}

struct Features<'a> {
    normalized: String,
    question: bool,
    turn: &'a Turn,
}

impl Predicate {
    fn matches(&self, f: &Features<'_>, ctx: &TurnContext<'_>) -> bool {
        let toks = tokens(&f.normalized);
        if self.first_turn.is_some_and(|want| want != ctx.first_turn) {
            return false;
        }
        if self.talk_over.is_some_and(|want| want != f.turn.talk_over) {
            return false;
        }
        if self.role.is_some_and(|want| want != ctx.role) {
            return false;
        }
        if self.question.is_some_and(|want| want != f.question) {
            return false;
        }
        if let Some(formats) = &self.prev_format {
            match ctx.prev {
                Some(p) if formats.contains(&p.code.format.code()) => {}
                _ => return false,
            }
        }
        if let Some(want) = self.prev_other_speaker {
            match ctx.prev {
                Some(p) if (p.turn.speaker_id != f.turn.speaker_id) == want => {}
                _ => return false,
            }
        }
        if self.max_tokens.is_some_and(|max| toks.len() > max) {
            return false;
        }
        if let Some(phrases) = &self.text_in {
            if !phrases.iter().any(|p| normalize_text(p) == f.normalized) {
                return false;
            }
        }
        if let Some(phrases) = &self.starts_with {
            if !phrases.iter().any(|p| starts_with_words(&toks, &normalize_text(p))) {
                return false;
            }
        }
        if let Some(threshold) = self.echoes_previous {
            let Some(prev) = ctx.prev else {
                return false;
            };
            let prev_norm = normalize_text(&prev.turn.spoken_text());
            let prev_toks: HashSet<&str> = tokens(&prev_norm).into_iter().collect();
            let own: BTreeSet<&str> = toks.iter().copied().collect();
            if own.is_empty() {
                return false;
            }
            let shared = own.iter().filter(|t| prev_toks.contains(*t)).count();
            if (shared as f64) / (own.len() as f64) < threshold {
                return false;
            }
        }
        true
    }
}

/// Codes one turn with the highest-priority matching rule. Rules emitting a
/// role-gated mode are skipped for speakers outside the gate.
pub fn auto_code_turn(
    turn: &Turn,
    ctx: &TurnContext<'_>,
    rules: &RuleSet,
) -> Result<NumericCode, AutocodeError> {
    let spoken = turn.spoken_text();
    let features = Features {
        normalized: normalize_text(&spoken),
        question: spoken.trim_end().ends_with('?'),
        turn,
    };
    rules
        .rules
        .iter()
        .filter(|r| r.emit.mode.role_gate().is_none_or(|gate| gate == ctx.role))
        .find(|r| r.when.matches(&features, ctx))
        .map(Rule::code)
        .ok_or(AutocodeError::NoRuleMatched { index: turn.index })
}

/// Left-to-right pass over the conversation. Degenerate turns are skipped.
/// Turn 0 counts as the opening unless the transcript is an excerpt.
pub fn auto_code_conversation(conv: &Conversation, rules: &RuleSet) -> Result<Annotation, AutocodeError> {
    let mut annotation = Annotation::new(AUTO_CODER, &conv.id);
    let mut prev: Option<CodedTurn<'_>> = None;
    for turn in &conv.turns {
        if turn.is_degenerate() {
            continue;
        }
        let role = conv.role_of(&turn.speaker_id).unwrap_or(Role::Tutee);
        let ctx = TurnContext {
            role,
            first_turn: turn.index == 0 && !conv.is_excerpt(),
            prev,
        };
        let code = auto_code_turn(turn, &ctx, rules)?;
        annotation.codes.insert(turn.index, code);
        prev = Some(CodedTurn { turn, code });
    }
    Ok(annotation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Numeric,
    Control,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(Level::Numeric),
            "control" => Ok(Level::Control),
            other => Err(format!("unknown level `{other}` (numeric|control)")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Numeric => "numeric",
            Level::Control => "control",
        })
    }
}

/// Category label of a code at the given level: the numeric code itself, or
/// its arrow. Codes absent from the matrix keep their numeric label.
pub fn level_label(code: NumericCode, level: Level, matrix: &TranslationMatrix) -> String {
    match level {
        Level::Numeric => code.to_string(),
        Level::Control => translate(code, matrix)
            .map(|c| c.arrow().to_string())
            .unwrap_or_else(|_| code.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRow {
    pub turn: usize,
    pub auto: Option<String>,
    pub gold: Option<String>,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub level: Level,
    pub rows: Vec<MatchRow>,
    pub matched: usize,
    pub compared: usize,
    /// `None` when neither annotation codes any turn.
    pub accuracy: Option<f64>,
    /// (gold label, auto label) → count. Missing codes appear as `-`.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn evaluate_against_gold(
    auto: &Annotation,
    gold: &Annotation,
    level: Level,
    matrix: &TranslationMatrix,
) -> Result<AccuracyReport, AutocodeError> {
    if auto.conversation_id != gold.conversation_id {
        return Err(AutocodeError::ConversationMismatch(
            auto.conversation_id.clone(),
            gold.conversation_id.clone(),
        ));
    }
    let turns: BTreeSet<usize> = auto.codes.keys().chain(gold.codes.keys()).copied().collect();
    let mut rows = Vec::with_capacity(turns.len());
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for turn in turns {
        let a = auto.codes.get(&turn).map(|c| level_label(*c, level, matrix));
        let g = gold.codes.get(&turn).map(|c| level_label(*c, level, matrix));
        let matches = a.is_some() && a == g;
        *confusion
            .entry(g.clone().unwrap_or_else(|| "-".into()))
            .or_default()
            .entry(a.clone().unwrap_or_else(|| "-".into()))
            .or_default() += 1;
        rows.push(MatchRow {
            turn,
            auto: a,
            gold: g,
            matches,
        });
    }
    let matched = rows.iter().filter(|r| r.matches).count();
    let compared = rows.len();
    Ok(AccuracyReport {
        level,
        accuracy: (compared > 0).then(|| matched as f64 / compared as f64),
        rows,
        matched,
        compared,
        confusion,
    })
}
