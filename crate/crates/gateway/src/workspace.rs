//! File-backed workspace: transcripts, annotations, matrix and rules.
//!
//! ```text
//! <root>/transcripts/<id>.txt | <id>.json
//! <root>/annotations/<conversation>/<coder>.json
//! <root>/matrix.tsv     (optional, bundled default otherwise)
//! <root>/rules.json     (optional, bundled default otherwise)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use relct::annotation::AnnotationError;
use relct::autocoder::AutocodeError;
use relct::codebook::{validate_annotation_set, AnnotationIssue, MatrixError};
use relct::metrics::MetricsError;
use relct::transcript::{self, TranscriptError, Violation};
use relct::{
    auto_code_conversation, default_matrix, default_rules, load_matrix, scorecard, Annotation,
    Conversation, NumericCode, RuleSet, ScoreOptions, Scorecard, TranslationMatrix, AUTO_CODER,
};
use thiserror::Error;

pub const WORKSPACE_ENV: &str = "RELCT_WORKSPACE";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Transcript {
        path: PathBuf,
        source: TranscriptError,
    },
    #[error("{path}: {reason}")]
    InvalidTranscript { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    AnnotationFile {
        path: PathBuf,
        source: AnnotationError,
    },
    #[error("{path}: annotation names conversation `{found}` and coder `{coder}`")]
    MisplacedAnnotation {
        path: PathBuf,
        found: String,
        coder: String,
    },
    #[error("matrix.tsv: {0}")]
    Matrix(#[from] MatrixError),
    #[error("autocoder: {0}")]
    Rules(#[from] AutocodeError),
    #[error("unknown conversation `{0}`")]
    UnknownConversation(String),
    #[error("conversation `{conversation}` has no annotation by `{coder}`")]
    UnknownAnnotation { conversation: String, coder: String },
    #[error("stale revision: expected {expected}, current is {current}")]
    StaleRevision { expected: u64, current: u64 },
    #[error("annotation rejected: {}", join_issues(.0))]
    InvalidCodes(Vec<AnnotationIssue>),
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
    #[error(transparent)]
    Score(#[from] MetricsError),
}

fn join_issues(issues: &[AnnotationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

type PairKey = (String, String);

/// Loaded workspace. Conversations, matrix and rules are read-only once
/// loaded; annotations are guarded by an `RwLock`, and writers additionally
/// take a per-(conversation, coder) mutex so that unrelated writes proceed in
/// parallel while reads never wait on each other.
pub struct Workspace {
    root: PathBuf,
    conversations: BTreeMap<String, Arc<Conversation>>,
    annotations: RwLock<BTreeMap<PairKey, Arc<Annotation>>>,
    writers: Mutex<HashMap<PairKey, Arc<Mutex<()>>>>,
    matrix: Arc<TranslationMatrix>,
    rules: Arc<RuleSet>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("root", &self.root)
            .field("conversations", &self.conversations.len())
            .finish_non_exhaustive()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ids become file names, so they are limited to a safe alphabet.
pub fn check_identifier(id: &str) -> Result<(), WorkspaceError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(WorkspaceError::BadIdentifier(id.to_string()))
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, WorkspaceError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    Ok(paths)
}

/// Violations that make a conversation unusable. Marker-only turns are
/// kept (they stay uncoded) so they are not reported here.
pub fn structural_violations(conv: &Conversation) -> Vec<Violation> {
    transcript::validate(conv)
        .into_iter()
        .filter(|v| !matches!(v, Violation::DegenerateTurn { .. }))
        .collect()
}

/// Parses a transcript file by extension (`.json`, otherwise plaintext with
/// the file stem as id) and rejects structurally invalid conversations.
pub fn read_transcript(path: &Path) -> Result<Conversation, WorkspaceError> {
    let source = fs::read_to_string(path).map_err(io_err(path))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        transcript::parse_json(&source)
    } else {
        transcript::parse_plaintext(stem, &source)
    };
    let conv = parsed.map_err(|source| WorkspaceError::Transcript {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(v) = structural_violations(&conv).first() {
        return Err(WorkspaceError::InvalidTranscript {
            path: path.to_path_buf(),
            reason: v.to_string(),
        });
    }
    Ok(conv)
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let mut conversations = BTreeMap::new();
        for path in sorted_entries(&root.join("transcripts"))? {
            if !path.extension().is_some_and(|e| e == "txt" || e == "json") {
                continue;
            }
            let conv = read_transcript(&path)?;
            check_identifier(&conv.id)?;
            conversations.insert(conv.id.clone(), Arc::new(conv));
        }

        let matrix_path = root.join("matrix.tsv");
        let matrix = if matrix_path.is_file() {
            load_matrix(&fs::read_to_string(&matrix_path).map_err(io_err(&matrix_path))?, false)?
        } else {
            default_matrix()
        };
        let rules_path = root.join("rules.json");
        let rules = if rules_path.is_file() {
            RuleSet::from_json(&fs::read_to_string(&rules_path).map_err(io_err(&rules_path))?)?
        } else {
            default_rules()
        };
        rules.check_against(&matrix)?;

        let mut annotations = BTreeMap::new();
        for dir in sorted_entries(&root.join("annotations"))? {
            let Some(conv_id) = dir.file_name().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            if !dir.is_dir() {
                continue;
            }
            if !conversations.contains_key(&conv_id) {
                return Err(WorkspaceError::UnknownConversation(conv_id));
            }
            for path in sorted_entries(&dir)? {
                if !path.extension().is_some_and(|e| e == "json") {
                    continue;
                }
                let coder = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let source = fs::read_to_string(&path).map_err(io_err(&path))?;
                let ann = Annotation::from_json(&source).map_err(|source| WorkspaceError::AnnotationFile {
                    path: path.clone(),
                    source,
                })?;
                if ann.conversation_id != conv_id || ann.coder_id != coder {
                    return Err(WorkspaceError::MisplacedAnnotation {
                        path,
                        found: ann.conversation_id,
                        coder: ann.coder_id,
                    });
                }
                annotations.insert((conv_id.clone(), coder), Arc::new(ann));
            }
        }

        Ok(Workspace {
            root,
            conversations,
            annotations: RwLock::new(annotations),
            writers: Mutex::new(HashMap::new()),
            matrix: Arc::new(matrix),
            rules: Arc::new(rules),
        })
    }

    /// Swaps in another translation matrix (e.g. from `score --matrix`).
    pub fn with_matrix(mut self, matrix: TranslationMatrix) -> Result<Self, WorkspaceError> {
        self.rules.check_against(&matrix)?;
        self.matrix = Arc::new(matrix);
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn matrix(&self) -> &TranslationMatrix {
        &self.matrix
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn conversation_ids(&self) -> impl Iterator<Item = &str> {
        self.conversations.keys().map(String::as_str)
    }

    pub fn conversation(&self, id: &str) -> Result<Arc<Conversation>, WorkspaceError> {
        self.conversations
            .get(id)
            .cloned()
            .ok_or_else(|| WorkspaceError::UnknownConversation(id.to_string()))
    }

    /// Coders with a stored annotation for `conversation`.
    pub fn coders(&self, conversation: &str) -> Vec<String> {
        self.annotations
            .read()
            .keys()
            .filter(|(c, _)| c == conversation)
            .map(|(_, coder)| coder.clone())
            .collect()
    }

    pub fn annotation(&self, conversation: &str, coder: &str) -> Result<Arc<Annotation>, WorkspaceError> {
        self.conversation(conversation)?;
        self.annotations
            .read()
            .get(&(conversation.to_string(), coder.to_string()))
            .cloned()
            .ok_or_else(|| WorkspaceError::UnknownAnnotation {
                conversation: conversation.to_string(),
                coder: coder.to_string(),
            })
    }

    /// Current revision, 0 when the coder has not saved anything yet.
    pub fn revision(&self, conversation: &str, coder: &str) -> u64 {
        self.annotations
            .read()
            .get(&(conversation.to_string(), coder.to_string()))
            .map_or(0, |a| a.revision)
    }

    fn writer(&self, key: &PairKey) -> Arc<Mutex<()>> {
        self.writers.lock().entry(key.clone()).or_default().clone()
    }

    /// Replaces a coder's codes if `expected_revision` is still current.
    /// Conflicting writes are rejected, never merged.
    pub fn put_annotation(
        &self,
        conversation: &str,
        coder: &str,
        expected_revision: u64,
        codes: BTreeMap<usize, NumericCode>,
    ) -> Result<Arc<Annotation>, WorkspaceError> {
        check_identifier(coder)?;
        let conv = self.conversation(conversation)?;
        let key = (conversation.to_string(), coder.to_string());
        let writer = self.writer(&key);
        let _guard = writer.lock();

        let current = self.revision(conversation, coder);
        if current != expected_revision {
            return Err(WorkspaceError::StaleRevision {
                expected: expected_revision,
                current,
            });
        }
        let mut ann = Annotation::new(coder, conversation).with_codes(codes);
        let issues: Vec<AnnotationIssue> = validate_annotation_set(&conv, &ann, &self.matrix)
            .into_iter()
            .filter(AnnotationIssue::is_blocking)
            .collect();
        if !issues.is_empty() {
            return Err(WorkspaceError::InvalidCodes(issues));
        }
        ann.revision = current + 1;
        ann.created_at = Some(chrono::Utc::now());
        self.persist(&ann)?;

        let ann = Arc::new(ann);
        self.annotations.write().insert(key, ann.clone());
        Ok(ann)
    }

    fn persist(&self, ann: &Annotation) -> Result<(), WorkspaceError> {
        let dir = self.root.join("annotations").join(&ann.conversation_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("{}.json", ann.coder_id));
        let tmp = dir.join(format!(".{}.json.tmp", ann.coder_id));
        let mut body = serde_json::to_string_pretty(&ann.to_json_value()).expect("json value");
        body.push('\n');
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Runs the rule-based coder and stores the result under the `auto`
    /// coder id, superseding any earlier machine annotation.
    pub fn autocode(&self, conversation: &str, rules: Option<&RuleSet>) -> Result<Arc<Annotation>, WorkspaceError> {
        let conv = self.conversation(conversation)?;
        let rules = rules.unwrap_or(&self.rules);
        rules.check_against(&self.matrix)?;
        let auto = auto_code_conversation(&conv, rules)?;
        let current = self.revision(conversation, AUTO_CODER);
        self.put_annotation(conversation, AUTO_CODER, current, auto.codes)
    }

    pub fn scorecard(&self, conversation: &str, coder: &str, strict: bool) -> Result<Scorecard, WorkspaceError> {
        let conv = self.conversation(conversation)?;
        let ann = self.annotation(conversation, coder)?;
        Ok(scorecard(&conv, &ann, &self.matrix, ScoreOptions { strict })?)
    }

    /// Conversations that `coder` has annotated, in id order.
    pub fn annotated_by(&self, coder: &str) -> Vec<String> {
        let ids: BTreeSet<String> = self
            .annotations
            .read()
            .keys()
            .filter(|(_, c)| c == coder)
            .map(|(conv, _)| conv.clone())
            .collect();
        ids.into_iter().collect()
    }
}

/// `--workspace` flag, then `RELCT_WORKSPACE`, then the current directory.
pub fn resolve_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(WORKSPACE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
