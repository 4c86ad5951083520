//! `relct` command-line interface.
//!
//! Exit status: 0 on success, 1 when input fails validation, 2 on usage
//! errors.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relct::metrics::{summaries_from_tsv, summaries_to_tsv, ScoreSummary};
use relct::stats::{
    kappa_from_labels, paired_labels, parse_study_records, study_report, CorrelationMethod, Gain,
    KappaResult, PValueMethod,
};
use relct::transcript::{self, MergePolicy};
use relct::{aggregate, canonical, Exact, Level, RuleSet};
use serde_json::json;

use crate::server;
use crate::workspace::{check_identifier, resolve_root, structural_violations, Workspace, WorkspaceError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "relct", version, about = "Relational control coding for tutoring dialogues")]
pub struct Cli {
    /// Workspace directory [env: RELCT_WORKSPACE; default: current directory]
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add transcripts to the workspace.
    Import(ImportArgs),
    /// Code a conversation with the rule-based coder (stored as coder `auto`).
    Autocode(AutocodeArgs),
    /// Compute the scorecard of one coder's annotation.
    Score(ScoreArgs),
    /// Cohen's kappa between two coders.
    Kappa(KappaArgs),
    /// Join scores with study outcomes and run the analyses.
    Report(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    Txt,
    Json,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Input format; by default taken from each file's extension.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Consecutive same-speaker turns: merge, error or keep.
    #[arg(long, default_value = "merge")]
    merge: MergePolicy,
    /// Replace transcripts that already exist.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct AutocodeArgs {
    conversation: String,
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Target {
    /// Conversation id.
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    conversation: Option<String>,
    /// Every conversation the coder(s) annotated.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    coder: String,
    /// Translation matrix TSV overriding the workspace one.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Treat uncoded turns as errors.
    #[arg(long)]
    strict: bool,
    /// Output file; `.tsv` writes score rows instead of JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KappaArgs {
    #[command(flatten)]
    target: Target,
    /// Two coder ids, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    coders: Vec<String>,
    #[arg(long, default_value = "numeric")]
    level: Level,
    /// Turns to compare: one `turn` or `conversation turn` per line.
    #[arg(long)]
    scope: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Pearson,
    Spearman,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Study outcome table (defaults to `study.tsv` in the workspace).
    #[arg(long)]
    study: Option<PathBuf>,
    /// Coder whose annotations supply the scores.
    #[arg(long, required_unless_present = "scores")]
    coder: Option<String>,
    /// Score rows (as written by `score --all --out x.tsv`) instead of
    /// workspace annotations.
    #[arg(long, conflicts_with = "coder")]
    scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "spearman")]
    method: MethodArg,
    /// Normalized gain against this maximum test score (raw gain otherwise).
    #[arg(long)]
    max_score: Option<f64>,
    /// Permutation p-values with this many rounds (exact for rank-sum).
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl ToString) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<WorkspaceError> for Failure {
    fn from(e: WorkspaceError) -> Self {
        Failure::invalid(e)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "relct: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let root = resolve_root(cli.workspace);
    match cli.command {
        Command::Import(a) => import(&root, a, out),
        Command::Autocode(a) => autocode(&root, a, out, err),
        Command::Score(a) => score(&root, a, out),
        Command::Kappa(a) => kappa(&root, a, out),
        Command::Report(a) => report(&root, a, out),
        Command::Serve(a) => serve(&root, a),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, body: &str) -> Result<(), Failure> {
    writeln!(out, "{body}").map_err(|e| Failure::invalid(format!("stdout: {e}")))
}

fn import(root: &Path, a: ImportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let dir = root.join("transcripts");
    fs::create_dir_all(&dir).map_err(|e| Failure::invalid(format!("{}: {e}", dir.display())))?;
    let mut parsed = Vec::new();
    for path in &a.files {
        let source = read(path)?;
        let json = match a.format {
            Some(f) => matches!(f, InputFormat::Json),
            None => path.extension().is_some_and(|e| e == "json"),
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let conv = if json {
            transcript::parse_json(&source)
        } else {
            transcript::parse_plaintext(stem, &source)
        }
        .and_then(|c| transcript::normalize(&c, a.merge))
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        check_identifier(&conv.id)?;
        if let Some(v) = structural_violations(&conv).first() {
            return Err(Failure::invalid(format!("{}: {v}", path.display())));
        }
        let target = dir.join(format!("{}.txt", conv.id));
        if target.exists() && !a.force {
            return Err(Failure::invalid(format!(
                "conversation `{}` already exists (use --force to replace)",
                conv.id
            )));
        }
        parsed.push((target, conv));
    }
    // nothing is written unless every file is valid
    for (target, conv) in parsed {
        write_file(&target, &transcript::to_plaintext(&conv))?;
        emit(out, &format!("imported {} ({} turns)", conv.id, conv.turns.len()))?;
    }
    Ok(())
}

fn autocode(root: &Path, a: AutocodeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let ws = Workspace::open(root)?;
    let rules = match &a.rules {
        Some(path) => Some(RuleSet::from_json(&read(path)?).map_err(Failure::invalid)?),
        None => None,
    };
    let ann = ws.autocode(&a.conversation, rules.as_ref())?;
    let card = ws.scorecard(&a.conversation, &ann.coder_id, false)?;
    let _ = writeln!(err, "{}: {} (revision {})", a.conversation, card.arrows(), ann.revision);
    emit(out, &canonical::to_canonical_string(&ann.to_json_value()))
}

fn open_with_matrix(root: &Path, matrix: Option<&Path>) -> Result<Workspace, Failure> {
    let ws = Workspace::open(root)?;
    match matrix {
        None => Ok(ws),
        Some(path) => {
            let matrix = relct::load_matrix(&read(path)?, false)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            Ok(ws.with_matrix(matrix)?)
        }
    }
}

fn score(root: &Path, a: ScoreArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let ws = open_with_matrix(root, a.matrix.as_deref())?;
    let tsv = a.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "tsv"));

    let body = match &a.target.conversation {
        Some(conv) => {
            let card = ws.scorecard(conv, &a.coder, a.strict)?;
            if tsv {
                summaries_to_tsv(&[card.summary()])
            } else {
                card.to_canonical_json()
            }
        }
        None => {
            let ids = ws.annotated_by(&a.coder);
            if ids.is_empty() {
                return Err(Failure::invalid(format!("coder `{}` has no annotations", a.coder)));
            }
            let cards = ids
                .iter()
                .map(|id| ws.scorecard(id, &a.coder, a.strict).map_err(|e| Failure::invalid(format!("{id}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<ScoreSummary> = cards.iter().map(|c| c.summary()).collect();
            if tsv {
                summaries_to_tsv(&rows)
            } else {
                let agg = aggregate::<Exact>(&rows).map_err(Failure::invalid)?;
                canonical::to_canonical_string(&json!({
                    "aggregate": agg.to_json_value(),
                    "scorecards": cards,
                }))
            }
        }
    };
    match &a.out {
        Some(path) => write_file(path, &body),
        None => emit(out, &body),
    }
}

/// Scope file: one entry per line, either `turn` (applies to every
/// conversation) or `conversation turn`. Blank lines and `#` comments are
/// skipped.
fn parse_scope(source: &str) -> Result<Vec<(Option<String>, usize)>, Failure> {
    let mut entries = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Failure::invalid(format!("scope line {}: expected `turn` or `conversation turn`", n + 1));
        let entry = match fields.as_slice() {
            [turn] => (None, turn.parse().map_err(|_| bad())?),
            [conv, turn] => (Some(conv.to_string()), turn.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        entries.push(entry);
    }
    Ok(entries)
}

fn kappa(root: &Path, a: KappaArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let [coder_a, coder_b] = a.coders.as_slice() else {
        return Err(Failure::usage("--coders takes exactly two coder ids, e.g. --coders A,B"));
    };
    let ws = Workspace::open(root)?;
    let scope = match &a.scope {
        Some(path) => Some(parse_scope(&read(path)?)?),
        None => None,
    };
    let ids: Vec<String> = match &a.target.conversation {
        Some(c) => vec![c.clone()],
        None => {
            let b: BTreeSet<String> = ws.annotated_by(coder_b).into_iter().collect();
            ws.annotated_by(coder_a).into_iter().filter(|c| b.contains(c)).collect()
        }
    };
    if ids.is_empty() {
        return Err(Failure::invalid(format!("no conversation is annotated by both `{coder_a}` and `{coder_b}`")));
    }

    let (mut la, mut lb) = (Vec::new(), Vec::new());
    for id in &ids {
        let ann_a = ws.annotation(id, coder_a)?;
        let ann_b = ws.annotation(id, coder_b)?;
        let turns: Option<BTreeSet<usize>> = scope.as_ref().map(|entries| {
            entries
                .iter()
                .filter(|(c, _)| c.as_deref().is_none_or(|c| c == id))
                .map(|&(_, t)| t)
                .collect()
        });
        let (x, y) = paired_labels(&ann_a, &ann_b, a.level, turns.as_ref(), ws.matrix())
            .map_err(|e| Failure::invalid(format!("{id}: {e}")))?;
        la.extend(x);
        lb.extend(y);
    }
    let k: KappaResult<f64> = kappa_from_labels(&la, &lb).map_err(Failure::invalid)?;
    emit(out, &canonical::to_canonical_string(&k))
}

fn report(root: &Path, a: ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study_path = a.study.clone().unwrap_or_else(|| root.join("study.tsv"));
    let records = parse_study_records(&read(&study_path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", study_path.display())))?;
    let scores: Vec<ScoreSummary> = match (&a.scores, &a.coder) {
        (Some(path), _) => summaries_from_tsv(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?,
        (None, Some(coder)) => {
            let ws = Workspace::open(root)?;
            ws.annotated_by(coder)
                .iter()
                .map(|id| ws.scorecard(id, coder, false).map(|c| c.summary()))
                .collect::<Result<_, _>>()?
        }
        (None, None) => return Err(Failure::usage("either --coder or --scores is required")),
    };
    let method = match a.method {
        MethodArg::Pearson => CorrelationMethod::Pearson,
        MethodArg::Spearman => CorrelationMethod::Spearman,
    };
    let gain = match a.max_score {
        Some(max_score) => Gain::Normalized { max_score },
        None => Gain::Raw,
    };
    let p_method = match a.permutations {
        Some(rounds) => PValueMethod::Permutation { rounds, seed: a.seed },
        None => PValueMethod::Asymptotic,
    };
    let rep = study_report(&records, &scores, method, gain, p_method);
    if a.json {
        let agg = aggregate::<Exact>(&scores).map_err(Failure::invalid)?;
        emit(
            out,
            &canonical::to_canonical_string(&json!({ "aggregate": agg.to_json_value(), "report": rep })),
        )
    } else {
        let agg = aggregate::<Exact>(&scores).map_err(Failure::invalid)?;
        let mut text = String::new();
        for (name, s) in [("control", &agg.control), ("agreement", &agg.agreement)] {
            if let Some(s) = s {
                text.push_str(&format!(
                    "{name:<10} n={}  mean={}  median={}\n",
                    s.n,
                    relct::Scalar::render4(&s.mean),
                    relct::Scalar::render4(&s.median)
                ));
            }
        }
        text.push('\n');
        text.push_str(&rep.to_text());
        write!(out, "{text}").map_err(|e| Failure::invalid(format!("stdout: {e}")))
    }
}

fn serve(root: &Path, a: ServeArgs) -> Result<(), Failure> {
    let ws = Arc::new(Workspace::open(root)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::invalid(format!("runtime: {e}")))?;
    runtime
        .block_on(server::serve(ws, &a.host, a.port))
        .map_err(|e| Failure::invalid(format!("serve: {e}")))
}

/// Entry point used by the binary.
pub fn main_with_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
