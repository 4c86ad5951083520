//! One coder's numeric codes for one conversation.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{MessageFormat, NumericCode, ResponseMode};

/// Coder id reserved for machine-generated annotations.
pub const AUTO_CODER: &str = "auto";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("invalid annotation json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("turn {turn}: format {format} is not 1..5")]
    BadFormat { turn: usize, format: u8 },
    #[error("turn {0} coded twice")]
    DuplicateTurn(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub coder_id: String,
    pub conversation_id: String,
    pub codes: BTreeMap<usize, NumericCode>,
    pub created_at: Option<DateTime<Utc>>,
    pub revision: u64,
}

impl Annotation {
    pub fn new(coder_id: impl Into<String>, conversation_id: impl Into<String>) -> Self {
        Annotation {
            coder_id: coder_id.into(),
            conversation_id: conversation_id.into(),
            codes: BTreeMap::new(),
            created_at: None,
            revision: 0,
        }
    }

    pub fn with_codes(mut self, codes: impl IntoIterator<Item = (usize, NumericCode)>) -> Self {
        self.codes.extend(codes);
        self
    }

    pub fn from_json(source: &str) -> Result<Self, AnnotationError> {
        let doc: AnnotationDoc = serde_json::from_str(source)?;
        doc.try_into()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(AnnotationDoc::from(self)).expect("annotation serializes")
    }
}

/// Wire form: `{conversation, coder, revision, codes:[{turn, format, mode}]}`.
/// Modes are strings so that `P` and `0` stay unambiguous.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationDoc {
    pub conversation: String,
    pub coder: String,
    #[serde(default)]
    pub revision: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    pub codes: Vec<CodeEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CodeEntry {
    pub turn: usize,
    pub format: u8,
    pub mode: ResponseMode,
}

/// Parses a list of wire code entries into a turn map.
pub fn codes_from_entries(entries: &[CodeEntry]) -> Result<BTreeMap<usize, NumericCode>, AnnotationError> {
    let mut codes = BTreeMap::new();
    for e in entries {
        let format = MessageFormat::new(e.format).ok_or(AnnotationError::BadFormat {
            turn: e.turn,
            format: e.format,
        })?;
        if codes.insert(e.turn, NumericCode::new(format, e.mode)).is_some() {
            return Err(AnnotationError::DuplicateTurn(e.turn));
        }
    }
    Ok(codes)
}

impl TryFrom<AnnotationDoc> for Annotation {
    type Error = AnnotationError;

    fn try_from(doc: AnnotationDoc) -> Result<Self, Self::Error> {
        Ok(Annotation {
            codes: codes_from_entries(&doc.codes)?,
            coder_id: doc.coder,
            conversation_id: doc.conversation,
            created_at: doc.created_at,
            revision: doc.revision,
        })
    }
}

impl From<&Annotation> for AnnotationDoc {
    fn from(a: &Annotation) -> Self {
        AnnotationDoc {
            conversation: a.conversation_id.clone(),
            coder: a.coder_id.clone(),
            revision: a.revision,
            created_at: a.created_at,
            codes: a
                .codes
                .iter()
                .map(|(&turn, code)| CodeEntry {
                    turn,
                    format: code.format.code(),
                    mode: code.mode,
                })
                .collect(),
        }
    }
}
