//! `coref`: batch tools for coreference corpora.
//!
//! Exit codes: 0 success, 1 I/O or engine failure, 2 malformed input,
//! validation failure, mention mismatch or submission-gate refusal.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use coref_core::metrics::round_half_up;
use coref_core::review::CandidateView;
use coref_core::session::{parse_log, SNAPSHOT_FORMAT};
use coref_core::{
    default_recipe, evaluate, extract_mentions, from_json, import_conll, import_json, replay, run_review,
    to_conll_string, to_json, AnnotationState, ClusterDecision, Corpus, MetricReport, Partition, Prf,
    ReviewStep, SessionConfig, SpanDecision, TraceRow,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "coref", version, about = "Convert, validate, score and replay coreference annotations")]
struct Cli {
    /// Machine-readable JSON output (errors included).
    #[arg(long, global = true)]
    json: bool,
    /// Suppress informational messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an annotation between CoNLL and JSON.
    Convert {
        input: PathBuf,
        /// Output path; `-` for stdout.
        output: PathBuf,
        /// Input format (default: from the extension).
        #[arg(long)]
        from: Option<Format>,
        /// Output format (default: from the extension).
        #[arg(long)]
        to: Option<Format>,
    },
    /// Score a response annotation against a key.
    Score { key: PathBuf, response: PathBuf },
    /// Run a scripted review over a complete annotation.
    SimulateReview {
        original: PathBuf,
        script: PathBuf,
        /// Where to write the reviewed annotation (format from the extension).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Rebuild a session snapshot from its config and action log.
    Replay {
        config: PathBuf,
        log: PathBuf,
        /// Compare against an existing snapshot instead of printing.
        #[arg(long)]
        verify: Option<PathBuf>,
        /// Write the snapshot here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Extract single-token mentions by part-of-speech tag.
    ExtractMentions {
        corpus: PathBuf,
        /// Comma-separated tags; defaults to NOUN,PROPN,PRON,VERB.
        #[arg(long, value_delimiter = ',')]
        pos_set: Option<Vec<String>>,
        /// Emit an annotation task (corpus plus mentions) instead of a span list.
        #[arg(long)]
        task: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check that a file is well formed.
    Validate {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        kind: Kind,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Conll,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum Kind {
    Auto,
    Conll,
    Annotation,
    Corpus,
    Config,
    Log,
    Snapshot,
    Script,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn failed(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    json: bool,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { json: cli.json, quiet: cli.quiet };
    let result = match cli.command {
        Command::Convert { input, output, from, to } => convert(&ctx, &input, &output, from, to),
        Command::Score { key, response } => score(&ctx, &key, &response),
        Command::SimulateReview { original, script, output } => simulate_review(&ctx, &original, &script, output.as_deref()),
        Command::Replay { config, log, verify, output } => replay_log(&ctx, &config, &log, verify.as_deref(), output.as_deref()),
        Command::ExtractMentions { corpus, pos_set, task, output } => {
            extract(&corpus, pos_set, task, output.as_deref())
        }
        Command::Validate { path, kind } => validate(&ctx, &path, kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            if ctx.json {
                eprintln!("{}", json!({"error": format!("{error:#}"), "exit_code": code}));
            } else {
                eprintln!("error: {error:#}");
            }
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| failed(anyhow!("reading {}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) if p == Path::new("-") => {
            print!("{text}");
            Ok(())
        }
        Some(p) => fs::write(p, text).map_err(|e| failed(anyhow!("writing {}: {e}", p.display()))),
    }
}

fn format_of(path: &Path, given: Option<Format>) -> Result<Format, Failure> {
    if let Some(f) = given {
        return Ok(f);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("conll") => Ok(Format::Conll),
        Some("json") => Ok(Format::Json),
        _ => Err(invalid(anyhow!(
            "cannot tell the format of {}; pass --from/--to",
            path.display()
        ))),
    }
}

/// CoNLL unless the text looks like JSON.
fn sniff(text: &str) -> Format {
    if text.trim_start().starts_with(['{', '[']) {
        Format::Json
    } else {
        Format::Conll
    }
}

fn parse_annotation(text: &str, format: Format, path: &Path) -> Result<AnnotationState, Failure> {
    let parsed = match format {
        Format::Conll => import_conll(text).map(|(_, s)| s).map_err(anyhow::Error::from),
        Format::Json => import_json(text).map_err(anyhow::Error::from),
    };
    parsed.map_err(|e| invalid(anyhow!("{}: {e}", path.display())))
}

fn load_annotation(path: &Path) -> Result<AnnotationState, Failure> {
    let text = read(path)?;
    let format = sniff(&text);
    parse_annotation(&text, format, path)
}

fn render(state: &AnnotationState, format: Format) -> Result<String, Failure> {
    match format {
        Format::Conll => to_conll_string(state).map_err(invalid),
        Format::Json => Ok(to_json(state)),
    }
}

fn convert(ctx: &Ctx, input: &Path, output: &Path, from: Option<Format>, to: Option<Format>) -> Outcome {
    let text = read(input)?;
    let from = from.unwrap_or_else(|| format_of(input, None).unwrap_or(sniff(&text)));
    let to = format_of(output, to)?;
    let state = parse_annotation(&text, from, input)?;
    if to == Format::Json && state.pending_len() > 0 {
        ctx.info(format!("warning: {} mention(s) still pending", state.pending_len()));
    }
    write(Some(output), &render(&state, to)?)?;
    ctx.info(format!(
        "converted {} mention(s) in {} cluster(s)",
        state.assigned().count(),
        state.clusters().count()
    ));
    Ok(())
}

fn complete(state: AnnotationState, path: &Path) -> Result<AnnotationState, Failure> {
    match state.pending_len() {
        0 => Ok(state),
        n => Err(invalid(anyhow!("{}: {n} mention(s) still pending", path.display()))),
    }
}

fn percent(x: f64) -> String {
    format!("{:.1}", round_half_up(100.0 * x, 1))
}

fn score_table(report: &MetricReport) -> String {
    let mut out = format!("{:<8}{:>8}{:>8}{:>8}\n", "metric", "P", "R", "F1");
    let row = |out: &mut String, name: &str, s: &Prf| {
        let _ = writeln!(out, "{name:<8}{:>8}{:>8}{:>8}", percent(s.precision), percent(s.recall), percent(s.f1));
    };
    row(&mut out, "MUC", &report.muc);
    row(&mut out, "B3", &report.b_cubed);
    row(&mut out, "CEAFe", &report.ceaf_e);
    let _ = writeln!(out, "{:<8}{:>24}", "CoNLL", percent(report.conll_f1));
    out
}

fn score(ctx: &Ctx, key: &Path, response: &Path) -> Outcome {
    let key_state = complete(load_annotation(key)?, key)?;
    let response_state = complete(load_annotation(response)?, response)?;
    let report = evaluate(&Partition::from_state(&key_state), &Partition::from_state(&response_state))
        .map_err(invalid)?;
    if ctx.json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        print!("{}", score_table(&report));
    }
    Ok(())
}

fn decision_text(d: &ClusterDecision) -> String {
    match d {
        ClusterDecision::New(_) => "new".into(),
        ClusterDecision::Candidate { candidate_index } => format!("candidate {candidate_index}"),
        ClusterDecision::Cluster { cluster_id } => format!("cluster {cluster_id}"),
    }
}

fn chip(c: &CandidateView) -> String {
    format!("{}{{{}}}", c.cluster, c.mentions.join(", "))
}

fn trace_text(trace: &[TraceRow]) -> String {
    let mut out = String::new();
    for row in trace {
        let _ = match row {
            TraceRow::Span { step, presented, change, reviewed, result, .. } => writeln!(
                out,
                "{step:>3}  {:<8} {presented:?} -> {reviewed:?}  stack [{}]",
                serde_json::to_value(change).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                result.join(" | ")
            ),
            TraceRow::Assign { step, mention, candidates, decision, cluster, .. } => {
                let chips: Vec<String> = candidates.iter().map(chip).collect();
                writeln!(
                    out,
                    "{step:>3}  assign   {mention:?}  candidates [{}]  {} -> {}",
                    chips.join(" "),
                    decision_text(decision),
                    chip(cluster)
                )
            }
        };
    }
    out
}

fn simulate_review(ctx: &Ctx, original: &Path, script: &Path, output: Option<&Path>) -> Outcome {
    let state = load_annotation(original)?;
    let steps: Vec<ReviewStep> =
        from_json(&read(script)?).map_err(|e| invalid(anyhow!("{}: {e}", script.display())))?;
    let outcome = run_review(state, &steps).map_err(failed)?;
    if ctx.json {
        println!("{}", serde_json::to_string(&outcome.trace).expect("trace serializes"));
    } else {
        print!("{}", trace_text(&outcome.trace));
    }
    if let Some(path) = output {
        let format = format_of(path, None)?;
        write(Some(path), &render(&outcome.reviewed, format)?)?;
        ctx.info(format!("reviewed annotation written to {}", path.display()));
    }
    Ok(())
}

fn first_difference(a: &str, b: &str) -> usize {
    a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(a.lines().count().min(b.lines().count())) + 1
}

fn replay_log(ctx: &Ctx, config: &Path, log: &Path, verify: Option<&Path>, output: Option<&Path>) -> Outcome {
    let config = SessionConfig::parse(&read(config)?).map_err(invalid)?;
    let entries = parse_log(&read(log)?).map_err(invalid)?;
    let session = replay(config, &entries).map_err(failed)?;
    let snapshot = session.snapshot();
    if let Some(path) = output {
        write(Some(path), &snapshot)?;
    }
    match verify {
        Some(expected_path) => {
            let expected = read(expected_path)?;
            if expected != snapshot {
                return Err(invalid(anyhow!(
                    "snapshot diverges from {} at line {}",
                    expected_path.display(),
                    first_difference(&snapshot, &expected)
                )));
            }
            if ctx.json {
                println!("{}", json!({"verified": true, "version": session.version()}));
            }
            ctx.info(format!("snapshot matches at version {}", session.version()));
        }
        None if output.is_none() => print!("{snapshot}"),
        None => ctx.info(format!("replayed {} action(s)", entries.len())),
    }
    Ok(())
}

fn extract(corpus: &Path, pos_set: Option<Vec<String>>, task: bool, output: Option<&Path>) -> Outcome {
    let corpus: Corpus = from_json(&read(corpus)?).map_err(|e| invalid(anyhow!("{}: {e}", corpus.display())))?;
    let recipe: BTreeSet<String> = match pos_set {
        Some(tags) => tags.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
        None => default_recipe(),
    };
    let mentions = extract_mentions(&corpus, &recipe).map_err(invalid)?;
    let text = if task {
        to_json(&json!({"corpus": corpus, "mentions": mentions}))
    } else {
        to_json(&mentions)
    };
    write(output, &text)
}

fn detect(path: &Path, text: &str) -> Result<Kind, Failure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("conll") => return Ok(Kind::Conll),
        Some("jsonl") => return Ok(Kind::Log),
        _ => {}
    }
    if sniff(text) == Format::Conll {
        return Ok(Kind::Conll);
    }
    let value: Value = serde_json::from_str(text).map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?;
    Ok(match &value {
        Value::Array(_) => Kind::Script,
        Value::Object(o) if o.get("format").and_then(Value::as_str) == Some(SNAPSHOT_FORMAT) => Kind::Snapshot,
        Value::Object(o) if o.contains_key("mode") => Kind::Config,
        Value::Object(o) if o.contains_key("documents") => Kind::Corpus,
        _ => Kind::Annotation,
    })
}

fn validate(ctx: &Ctx, path: &Path, kind: Kind) -> Outcome {
    let text = read(path)?;
    let kind = if kind == Kind::Auto { detect(path, &text)? } else { kind };
    let at = |e: anyhow::Error| invalid(anyhow!("{}: {e}", path.display()));
    let detail = match kind {
        Kind::Auto => unreachable!("resolved above"),
        Kind::Conll | Kind::Annotation => {
            let format = if kind == Kind::Conll { Format::Conll } else { Format::Json };
            let state = parse_annotation(&text, format, path)?;
            format!(
                "{} document(s), {} mention(s), {} cluster(s), {} pending",
                state.corpus().num_documents(),
                state.assigned().count() + state.pending_len(),
                state.clusters().count(),
                state.pending_len()
            )
        }
        Kind::Corpus => {
            let corpus: Corpus = from_json(&text).map_err(|e| at(e.into()))?;
            format!("{} document(s), {} token(s)", corpus.num_documents(), corpus.num_tokens())
        }
        Kind::Config => {
            let config = SessionConfig::parse(&text).map_err(|e| at(e.into()))?;
            coref_core::Session::open(config.clone()).map_err(|e| at(e.into()))?;
            format!("{} session config", config.mode().as_str())
        }
        Kind::Log => format!("{} action(s)", parse_log(&text).map_err(|e| at(e.into()))?.len()),
        Kind::Snapshot => {
            let session = coref_core::Session::restore(&text).map_err(|e| at(e.into()))?;
            format!("{} session {:?} at version {}", session.mode().as_str(), session.id(), session.version())
        }
        Kind::Script => {
            let steps: Vec<ReviewStep> = from_json(&text).map_err(|e| at(e.into()))?;
            let edits = steps.iter().filter(|s| !matches!(s.span, SpanDecision::Accept(_))).count();
            format!("{} step(s), {edits} span edit(s)", steps.len())
        }
    };
    let kind_name = format!("{kind:?}").to_lowercase();
    if ctx.json {
        println!("{}", json!({"valid": true, "kind": kind_name, "detail": detail}));
    } else if !ctx.quiet {
        println!("ok: {kind_name}: {detail}");
    }
    Ok(())
}
