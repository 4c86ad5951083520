//! Dyadic conversation transcripts.
//!
//! Two interchange forms are supported:
//!
//! * a line-oriented plaintext form with `#speaker` / `#meta` header
//!   directives followed by `speaker: utterance` lines, and
//! * a JSON form (`{id, speakers, meta, turns}`) which is what the
//!   workspace stores and the service returns.
//!
//! Bracketed transcriber annotations such as `[inaudible 00:02:08]` stay in
//! the turn text and are mirrored into [`Turn::markers`]. A turn that holds
//! nothing but markers is *degenerate*: it keeps its index but is never coded.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TALKOVER_TOKEN: &str = "[talkover]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("empty document")]
    EmptyDocument,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: speaker `{speaker}` is not declared in the header")]
    UnknownSpeaker { line: usize, speaker: String },
    #[error("expected exactly two #speaker declarations, found {0}")]
    SpeakerCount(usize),
    #[error("speaker `{0}` declared twice")]
    DuplicateSpeaker(String),
    #[error("speakers are not alternating at turn {index}")]
    NonAlternatingSpeakers { index: usize },
    #[error("invalid transcript json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Tutor,
    Tutee,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Tutor => "tutor",
            Role::Tutee => "tutee",
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Tutor => Role::Tutee,
            Role::Tutee => Role::Tutor,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tutor" => Ok(Role::Tutor),
            "tutee" => Ok(Role::Tutee),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub role: Role,
    #[serde(rename = "name")]
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub conversation_id: String,
    pub index: usize,
    pub speaker_id: String,
    pub text: String,
    pub talk_over: bool,
    pub markers: Vec<String>,
}

impl Turn {
    /// Builds a turn, deriving `markers` from the text.
    pub fn new(
        conversation_id: impl Into<String>,
        index: usize,
        speaker_id: impl Into<String>,
        text: impl Into<String>,
        talk_over: bool,
    ) -> Self {
        let text = text.into();
        let markers = extract_markers(&text);
        Turn {
            conversation_id: conversation_id.into(),
            index,
            speaker_id: speaker_id.into(),
            text,
            talk_over,
            markers,
        }
    }

    /// True when the text holds nothing besides bracketed markers.
    pub fn is_degenerate(&self) -> bool {
        strip_markers(&self.text).trim().is_empty()
    }

    /// Text with bracketed markers removed and whitespace collapsed.
    pub fn spoken_text(&self) -> String {
        strip_markers(&self.text)
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[^\[\]]*\]").expect("valid marker regex"))
}

/// All bracketed spans in `text`, verbatim and in order.
pub fn extract_markers(text: &str) -> Vec<String> {
    marker_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

fn strip_markers(text: &str) -> String {
    marker_regex().replace_all(text, " ").into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub speakers: [Speaker; 2],
    pub turns: Vec<Turn>,
    pub metadata: BTreeMap<String, String>,
}

impl Conversation {
    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn role_of(&self, speaker_id: &str) -> Option<Role> {
        self.speaker(speaker_id).map(|s| s.role)
    }

    pub fn speaker_with_role(&self, role: Role) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.role == role)
    }

    pub fn turn(&self, index: usize) -> Option<&Turn> {
        self.turns.get(index).filter(|t| t.index == index)
    }

    /// Transcripts flagged `#meta excerpt true` begin mid-conversation.
    pub fn is_excerpt(&self) -> bool {
        self.metadata
            .get("excerpt")
            .is_some_and(|v| v.eq_ignore_ascii_case("true") || v == "1")
    }

    pub fn participant(&self) -> &str {
        self.metadata
            .get("participant")
            .map(String::as_str)
            .unwrap_or(&self.id)
    }

    pub fn is_excluded(&self) -> bool {
        self.metadata
            .get("excluded")
            .is_some_and(|v| v.eq_ignore_ascii_case("true") || v == "1")
    }
}

/// Parses the plaintext transcript format.
///
/// ```text
/// #speaker emma tutee Emma
/// #speaker u13 tutor User 13
/// #meta participant 13
/// // comment
/// emma: Can you give me a hint?
/// u13: Yes.
/// ```
pub fn parse_plaintext(id: &str, source: &str) -> Result<Conversation, TranscriptError> {
    let mut speakers: Vec<Speaker> = Vec::new();
    let mut metadata = BTreeMap::new();
    let mut raw_turns: Vec<(usize, String, String, bool)> = Vec::new();
    let mut saw_content = false;

    for (n, line) in source.lines().enumerate() {
        let lineno = n + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        saw_content = true;
        if let Some(directive) = trimmed.strip_prefix('#') {
            let mut parts = directive.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or_default();
            let rest = parts.next().unwrap_or_default().trim();
            match keyword {
                "speaker" => {
                    let mut fields = rest.splitn(3, char::is_whitespace);
                    let (Some(sid), Some(role)) = (fields.next(), fields.next()) else {
                        return Err(malformed(lineno, "#speaker needs <id> <tutor|tutee>"));
                    };
                    if sid.contains(':') {
                        return Err(malformed(lineno, "speaker id may not contain `:`"));
                    }
                    let role: Role = role.parse().map_err(|e: String| malformed(lineno, &e))?;
                    let display_name = fields.next().map(str::trim).unwrap_or(sid).to_string();
                    if speakers.iter().any(|s| s.id == sid) {
                        return Err(TranscriptError::DuplicateSpeaker(sid.to_string()));
                    }
                    speakers.push(Speaker {
                        id: sid.to_string(),
                        role,
                        display_name,
                    });
                }
                "meta" => {
                    let mut fields = rest.splitn(2, char::is_whitespace);
                    let key = fields.next().filter(|k| !k.is_empty());
                    let Some(key) = key else {
                        return Err(malformed(lineno, "#meta needs <key> <value>"));
                    };
                    let value = fields.next().unwrap_or_default().trim().to_string();
                    metadata.insert(key.to_string(), value);
                }
                other => {
                    return Err(malformed(lineno, &format!("unknown directive `#{other}`")));
                }
            }
            continue;
        }

        let Some((speaker, utterance)) = line.split_once(':') else {
            return Err(malformed(lineno, "missing `speaker:` delimiter"));
        };
        let speaker = speaker.trim();
        if speaker.is_empty() || speaker.contains(char::is_whitespace) {
            return Err(malformed(lineno, "invalid speaker id"));
        }
        let utterance = utterance.strip_prefix(' ').unwrap_or(utterance);
        let (talk_over, utterance) = match utterance.strip_prefix(TALKOVER_TOKEN) {
            Some(rest) => (true, rest.strip_prefix(' ').unwrap_or(rest)),
            None => (false, utterance),
        };
        let utterance = utterance.trim_end();
        if utterance.trim().is_empty() {
            return Err(malformed(lineno, "empty utterance"));
        }
        raw_turns.push((lineno, speaker.to_string(), utterance.to_string(), talk_over));
    }

    if !saw_content {
        return Err(TranscriptError::EmptyDocument);
    }
    let speakers = two_speakers(speakers)?;

    let mut turns = Vec::with_capacity(raw_turns.len());
    for (index, (lineno, speaker, text, talk_over)) in raw_turns.into_iter().enumerate() {
        if !speakers.iter().any(|s| s.id == speaker) {
            return Err(TranscriptError::UnknownSpeaker {
                line: lineno,
                speaker,
            });
        }
        turns.push(Turn::new(id, index, speaker, text, talk_over));
    }

    Ok(Conversation {
        id: id.to_string(),
        speakers,
        turns,
        metadata,
    })
}

fn malformed(line: usize, reason: &str) -> TranscriptError {
    TranscriptError::MalformedLine {
        line,
        reason: reason.to_string(),
    }
}

fn two_speakers(speakers: Vec<Speaker>) -> Result<[Speaker; 2], TranscriptError> {
    let n = speakers.len();
    <[Speaker; 2]>::try_from(speakers).map_err(|_| TranscriptError::SpeakerCount(n))
}

/// Renders a conversation in the plaintext format. Parsing the output yields
/// the same conversation.
pub fn to_plaintext(conv: &Conversation) -> String {
    let mut out = String::new();
    for s in &conv.speakers {
        out.push_str(&format!("#speaker {} {} {}\n", s.id, s.role, s.display_name));
    }
    for (k, v) in &conv.metadata {
        out.push_str(&format!("#meta {k} {v}\n"));
    }
    for t in &conv.turns {
        out.push_str(&t.speaker_id);
        out.push_str(": ");
        if t.talk_over {
            out.push_str(TALKOVER_TOKEN);
            out.push(' ');
        }
        out.push_str(&t.text);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TranscriptDoc {
    id: String,
    speakers: Vec<Speaker>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    turns: Vec<TurnDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TurnDoc {
    index: usize,
    speaker: String,
    text: String,
    #[serde(default)]
    talk_over: bool,
}

/// Parses the JSON transcript form. Indices are taken as given; run
/// [`validate`] to check density.
pub fn parse_json(source: &str) -> Result<Conversation, TranscriptError> {
    let doc: TranscriptDoc =
        serde_json::from_str(source).map_err(|e| TranscriptError::Json(e.to_string()))?;
    let mut seen = Vec::new();
    for s in &doc.speakers {
        if seen.contains(&s.id) {
            return Err(TranscriptError::DuplicateSpeaker(s.id.clone()));
        }
        seen.push(s.id.clone());
    }
    let speakers = two_speakers(doc.speakers)?;
    let mut turns = Vec::with_capacity(doc.turns.len());
    for (i, t) in doc.turns.into_iter().enumerate() {
        if !speakers.iter().any(|s| s.id == t.speaker) {
            return Err(TranscriptError::UnknownSpeaker {
                line: i + 1,
                speaker: t.speaker,
            });
        }
        turns.push(Turn::new(&doc.id, t.index, t.speaker, t.text, t.talk_over));
    }
    Ok(Conversation {
        id: doc.id,
        speakers,
        turns,
        metadata: doc.meta,
    })
}

/// JSON interchange value for a conversation.
pub fn to_json_value(conv: &Conversation) -> serde_json::Value {
    let doc = TranscriptDoc {
        id: conv.id.clone(),
        speakers: conv.speakers.to_vec(),
        meta: conv.metadata.clone(),
        turns: conv
            .turns
            .iter()
            .map(|t| TurnDoc {
                index: t.index,
                speaker: t.speaker_id.clone(),
                text: t.text.clone(),
                talk_over: t.talk_over,
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("transcript serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergePolicy {
    #[default]
    MergeConsecutive,
    Error,
    Keep,
}

impl FromStr for MergePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "merge" | "merge-consecutive" => Ok(MergePolicy::MergeConsecutive),
            "error" => Ok(MergePolicy::Error),
            "keep" => Ok(MergePolicy::Keep),
            other => Err(format!("unknown merge policy `{other}`")),
        }
    }
}

/// Enforces speaker alternation according to `policy`.
pub fn normalize(conv: &Conversation, policy: MergePolicy) -> Result<Conversation, TranscriptError> {
    match policy {
        MergePolicy::Keep => Ok(conv.clone()),
        MergePolicy::Error => {
            if let Some(w) = conv
                .turns
                .windows(2)
                .find(|w| w[0].speaker_id == w[1].speaker_id)
            {
                return Err(TranscriptError::NonAlternatingSpeakers { index: w[1].index });
            }
            Ok(conv.clone())
        }
        MergePolicy::MergeConsecutive => {
            let mut merged: Vec<Turn> = Vec::with_capacity(conv.turns.len());
            for turn in &conv.turns {
                match merged.last_mut() {
                    Some(last) if last.speaker_id == turn.speaker_id => {
                        last.text.push(' ');
                        last.text.push_str(&turn.text);
                        last.markers.extend(turn.markers.iter().cloned());
                    }
                    _ => merged.push(turn.clone()),
                }
            }
            for (i, t) in merged.iter_mut().enumerate() {
                t.index = i;
            }
            Ok(Conversation {
                turns: merged,
                ..conv.clone()
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonDenseIndices { position: usize, expected: usize, found: usize },
    DuplicateRole { role: Role },
    DegenerateTurn { index: usize },
    UnknownSpeaker { index: usize, speaker: String },
    ConversationIdMismatch { index: usize, found: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonDenseIndices {
                position,
                expected,
                found,
            } => write!(
                f,
                "non-dense indices: turn at position {position} has index {found}, expected {expected}"
            ),
            Violation::DuplicateRole { role } => write!(f, "duplicate role: both speakers are {role}"),
            Violation::DegenerateTurn { index } => {
                write!(f, "degenerate turn {index}: only bracketed markers")
            }
            Violation::UnknownSpeaker { index, speaker } => {
                write!(f, "turn {index}: unknown speaker `{speaker}`")
            }
            Violation::ConversationIdMismatch { index, found } => {
                write!(f, "turn {index}: belongs to conversation `{found}`")
            }
        }
    }
}

/// Checks every conversation invariant and reports what does not hold.
pub fn validate(conv: &Conversation) -> Vec<Violation> {
    let mut report = Vec::new();
    if conv.speakers[0].role == conv.speakers[1].role {
        report.push(Violation::DuplicateRole {
            role: conv.speakers[0].role,
        });
    }
    for (position, turn) in conv.turns.iter().enumerate() {
        if turn.index != position {
            report.push(Violation::NonDenseIndices {
                position,
                expected: position,
                found: turn.index,
            });
        }
        if conv.speaker(&turn.speaker_id).is_none() {
            report.push(Violation::UnknownSpeaker {
                index: turn.index,
                speaker: turn.speaker_id.clone(),
            });
        }
        if turn.conversation_id != conv.id {
            report.push(Violation::ConversationIdMismatch {
                index: turn.index,
                found: turn.conversation_id.clone(),
            });
        }
        if turn.is_degenerate() {
            report.push(Violation::DegenerateTurn { index: turn.index });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "#speaker emma tutee Emma\n#speaker u15 tutor User 15\n";

    #[test]
    fn parses_plain_turn() {
        let conv = parse_plaintext("c", &format!("{HEADER}emma: Okay.\n")).unwrap();
        let t = &conv.turns[0];
        assert_eq!(t.speaker_id, "emma");
        assert_eq!(t.text, "Okay.");
        assert!(!t.talk_over);
        assert!(t.markers.is_empty());
        assert_eq!(conv.speakers[1].display_name, "User 15");
    }

    #[test]
    fn markers_are_mirrored_and_kept_in_text() {
        let line = "u15: Three over 40 [inaudible 00:02:08] times three equals?\n";
        let conv = parse_plaintext("c", &format!("{HEADER}{line}")).unwrap();
        let t = &conv.turns[0];
        assert_eq!(t.markers, vec!["[inaudible 00:02:08]"]);
        assert_eq!(t.text, "Three over 40 [inaudible 00:02:08] times three equals?");
        assert_eq!(t.spoken_text(), "Three over 40 times three equals?");
    }

    #[test]
    fn talkover_token_is_stripped() {
        let conv =
            parse_plaintext("c", &format!("{HEADER}u15: [talkover] the answer is three\n")).unwrap();
        assert!(conv.turns[0].talk_over);
        assert_eq!(conv.turns[0].text, "the answer is three");
    }

    #[test]
    fn empty_and_comment_only_documents() {
        assert_eq!(parse_plaintext("c", ""), Err(TranscriptError::EmptyDocument));
        assert_eq!(
            parse_plaintext("c", "\n// nothing\n\r\n"),
            Err(TranscriptError::EmptyDocument)
        );
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            parse_plaintext("c", &format!("{HEADER}no delimiter here\n")),
            Err(TranscriptError::MalformedLine { line: 3, .. })
        ));
        assert!(matches!(
            parse_plaintext("c", &format!("{HEADER}bob: hi\n")),
            Err(TranscriptError::UnknownSpeaker { line: 3, .. })
        ));
        assert_eq!(
            parse_plaintext("c", "#speaker a tutor\na: hi\n"),
            Err(TranscriptError::SpeakerCount(1))
        );
        assert!(matches!(
            parse_plaintext("c", "#speaker a teacher\n"),
            Err(TranscriptError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn crlf_and_comments_accepted() {
        let doc = "#speaker a tutor\r\n#speaker b tutee\r\n// c\r\n\r\na: hi\r\nb: yo\r\n";
        let conv = parse_plaintext("c", doc).unwrap();
        assert_eq!(conv.turns.len(), 2);
        assert_eq!(conv.turns[1].text, "yo");
    }

    #[test]
    fn meta_and_degenerate_turns() {
        let doc = format!("{HEADER}#meta participant 15\n#meta excerpt true\nemma: [inaudible 00:01:00]\nu15: ok\n");
        let conv = parse_plaintext("c", &doc).unwrap();
        assert_eq!(conv.participant(), "15");
        assert!(conv.is_excerpt());
        assert!(conv.turns[0].is_degenerate());
        assert_eq!(validate(&conv), vec![Violation::DegenerateTurn { index: 0 }]);
    }

    fn abab(speakers: &[&str]) -> Conversation {
        let body: String = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{s}: turn {i}\n"))
            .collect();
        parse_plaintext("c", &format!("{HEADER}{body}")).unwrap()
    }

    #[test]
    fn merge_consecutive() {
        let conv = abab(&["emma", "emma", "u15"]);
        let merged = normalize(&conv, MergePolicy::MergeConsecutive).unwrap();
        assert_eq!(merged.turns.len(), 2);
        assert_eq!(merged.turns[0].text, "turn 0 turn 1");
        assert_eq!(merged.turns[1].index, 1);
        assert!(matches!(
            normalize(&conv, MergePolicy::Error),
            Err(TranscriptError::NonAlternatingSpeakers { index: 1 })
        ));
        assert_eq!(normalize(&conv, MergePolicy::Keep).unwrap(), conv);
    }

    #[test]
    fn alternating_input_is_fixed_under_all_policies() {
        let conv = abab(&["emma", "u15", "emma", "u15"]);
        for p in [MergePolicy::MergeConsecutive, MergePolicy::Error, MergePolicy::Keep] {
            assert_eq!(normalize(&conv, p).unwrap(), conv);
        }
        assert!(validate(&conv).is_empty());
    }

    #[test]
    fn validate_reports_role_duplication_and_gaps() {
        let mut conv = abab(&["emma", "u15"]);
        conv.speakers[0].role = Role::Tutor;
        conv.turns[1].index = 2;
        let report = validate(&conv);
        assert!(report.contains(&Violation::DuplicateRole { role: Role::Tutor }));
        assert!(report.contains(&Violation::NonDenseIndices {
            position: 1,
            expected: 1,
            found: 2
        }));
        assert!(report.iter().any(|v| v.to_string().starts_with("duplicate role")));
        assert!(report.iter().any(|v| v.to_string().starts_with("non-dense indices")));
    }

    #[test]
    fn json_round_trip() {
        let conv = abab(&["emma", "u15"]);
        let json = to_json_value(&conv).to_string();
        assert_eq!(parse_json(&json).unwrap(), conv);
    }
}
