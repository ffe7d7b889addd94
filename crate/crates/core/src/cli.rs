//! The `faceval` command line.
//!
//! Exit codes: 0 on success, 1 on usage or data errors, 2 when an external
//! service (the scorer) is unreachable. Errors are written to stderr as one
//! JSON object `{"error": <kind>, "message": <text>}`. Human-readable tables
//! go to stdout; every output file embeds the invocation that produced it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{corpus_bleu4, rouge_l, rouge_n, Metric};
use crate::corpus::{annotation_report, corpus_stats, load_annotations, load_corpus, Split};
use crate::error::{Error, Result};
use crate::metaeval::{
    correlation_report, fs_kind_metric, load_scores, load_series, make_ldt_split, make_mdt_corpus,
    ScoreRecord, Strategy, FS_METRIC,
};
use crate::probes::{ProbeBuilder, ProbeConfig, ProbeCorpus};
use crate::scoring::{
    factuality_score, score_probe_corpus, FactualityReport, HttpParaphraser, HttpScorer, MockScorer,
    RecordingScorer, ReplayScorer, ScoreOptions, Scorer,
};
use crate::transforms::{NullProvider, ParaphraseProvider, PronounPool, StaticParaphrases, TransformKind};

pub const SCORER_URL_ENV: &str = "FACEVAL_SCORER_URL";

#[derive(Debug, Parser)]
#[command(name = "faceval", version, about = "Model-level faithfulness evaluation for dialogue summarization")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build positive and negative probe summaries for every dialogue.
    BuildProbes(BuildProbesArgs),
    /// Score a probe file with a model and report factuality scores.
    Score(ScoreArgs),
    /// Write a limited-data or corrupted-data training corpus.
    Corrupt(CorruptArgs),
    /// Correlate metric scores with model-series order.
    Meta(MetaArgs),
    /// Corpus or annotation statistics.
    Stats(StatsArgs),
    /// ROUGE and BLEU of model outputs against corpus references.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PoolArg {
    DialogueFirst,
    DialogueOnly,
    Lexicon,
}

impl From<PoolArg> for PronounPool {
    fn from(p: PoolArg) -> PronounPool {
        match p {
            PoolArg::DialogueFirst => PronounPool::DialogueFirst,
            PoolArg::DialogueOnly => PronounPool::DialogueOnly,
            PoolArg::Lexicon => PronounPool::Lexicon,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct BuildProbesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum negatives per kind per dialogue.
    #[arg(long, default_value_t = 5)]
    cap: usize,
    /// Maximum paraphrased positives per dialogue.
    #[arg(long, default_value_t = 0)]
    paraphrases: usize,
    /// `none`, `file:<path>` (JSON lines of {"text", "paraphrases"}) or an
    /// http(s) base URL serving /paraphrase.
    #[arg(long, default_value = "none")]
    provider: String,
    #[arg(long, value_enum, default_value = "dialogue-first")]
    pronoun_pool: PoolArg,
    /// Corrupt only the reference, not its paraphrases.
    #[arg(long)]
    reference_only: bool,
    /// Comma-separated subset of SS,ES,PS,DS,NS,NG.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
}

#[derive(Debug, Args, Serialize)]
struct ScoreArgs {
    #[arg(long)]
    probes: PathBuf,
    /// Base URL of a scorer serving POST /score.
    #[arg(long, env = SCORER_URL_ENV)]
    scorer_url: Option<String>,
    /// Answer from a recorded cassette instead of a live scorer.
    #[arg(long, conflicts_with = "mock")]
    replay: Option<PathBuf>,
    /// Built-in model-free scorer: oracle, anti-oracle, noisy:P:SEED,
    /// uniform:SEED or lexical.
    #[arg(long)]
    mock: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    /// Also write every scorer exchange to this cassette.
    #[arg(long)]
    #[serde(skip)]
    record: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Model name used in the table and in --scores-out lines.
    #[arg(long, default_value = "model")]
    model_id: String,
    /// Write metric score lines (FS and FS:<kind>) for the meta command.
    #[arg(long)]
    #[serde(skip)]
    scores_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CorruptArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    #[serde(serialize_with = "serialize_display")]
    strategy: Strategy,
    /// Data fraction for ldt, noise ratio for mdt.
    #[arg(long)]
    knob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
}

#[derive(Debug, Args, Serialize)]
struct MetaArgs {
    /// JSON file with one series or an array of {name, strategy, points}.
    #[arg(long)]
    series: PathBuf,
    /// JSON lines of {model_id, metric, score}.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["corpus", "annotations"])))]
struct StatsArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BaselineArgs {
    /// Corpus holding the reference summaries.
    #[arg(long)]
    corpus: PathBuf,
    /// JSON lines of {"id", "summary"} with one model output per dialogue.
    #[arg(long)]
    outputs: PathBuf,
    #[arg(long, default_value = "model")]
    model_id: String,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Write metric score lines for the meta command.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn serialize_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Output paths and worker counts are left out: they never change results,
/// and leaving them out keeps repeated runs byte-identical.
fn run_header<T: Serialize>(command: &str, args: &T) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn make_provider(spec: &str) -> Result<Box<dyn ParaphraseProvider>> {
    if spec == "none" {
        return Ok(Box::new(NullProvider));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return Ok(Box::new(StaticParaphrases::load(Path::new(path))?));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpParaphraser::new(spec)));
    }
    Err(Error::Domain(format!(
        "unknown paraphrase provider `{spec}` (expected none, file:<path> or an http URL)"
    )))
}

/// Negative counts in report order, plus the total.
pub fn render_counts(counts: &BTreeMap<TransformKind, usize>) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<16}", "");
    for kind in TransformKind::REPORT_ORDER {
        let _ = write!(out, " {:>7}", kind.code());
    }
    let _ = writeln!(out, " {:>7}", "Total");
    let _ = write!(out, "{:<16}", "# Neg Samples");
    for kind in TransformKind::REPORT_ORDER {
        let _ = write!(out, " {:>7}", counts.get(&kind).copied().unwrap_or(0));
    }
    let _ = writeln!(out, " {:>7}", counts.values().sum::<usize>());
    out
}

fn build_probes(args: &BuildProbesArgs, run: Value) -> Result<String> {
    let corpus = load_corpus(&args.corpus, args.split.into())?;
    let provider = make_provider(&args.provider)?;
    let kinds = match &args.kinds {
        None => TransformKind::NEGATIVE.to_vec(),
        Some(list) => {
            let mut kinds = Vec::new();
            for code in list {
                let kind: TransformKind = code.trim().parse()?;
                if !kind.is_negative() {
                    return Err(Error::Domain(format!("{kind} does not produce negatives")));
                }
                kinds.push(kind);
            }
            kinds
        }
    };
    let config = ProbeConfig {
        cap_per_kind: args.cap,
        max_paraphrases: args.paraphrases,
        perturb_paraphrases: !args.reference_only,
        pronoun_pool: args.pronoun_pool.into(),
        kinds,
        provider: provider.id(),
    };
    let mut probes = ProbeBuilder::new(config)
        .with_provider(provider.as_ref())
        .build_corpus(&corpus, args.seed)?;
    probes.run = Some(run);
    probes.save(&args.out)?;
    let usable = probes.probe_sets.iter().filter(|s| s.is_usable()).count();
    let mut out = render_counts(&probes.counts);
    let _ = writeln!(
        out,
        "{} dialogues, {} with negatives",
        probes.probe_sets.len(),
        usable
    );
    Ok(out)
}

fn fs_score_lines(model_id: &str, report: &FactualityReport) -> String {
    let mut lines = vec![ScoreRecord {
        model_id: model_id.to_string(),
        metric: FS_METRIC.to_string(),
        score: report.fs_overall,
    }];
    for (kind, v) in &report.fs_per_kind {
        lines.push(ScoreRecord {
            model_id: model_id.to_string(),
            metric: fs_kind_metric(*kind),
            score: *v,
        });
    }
    lines
        .iter()
        .map(|r| serde_json::to_string(r).expect("score records serialize") + "\n")
        .collect()
}

fn score(args: &ScoreArgs, run: Value) -> Result<String> {
    let probes = ProbeCorpus::load(&args.probes)?;
    let mock: Option<MockScorer> = args
        .mock
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(Error::Domain)?;
    let scorer: Box<dyn Scorer> = if let Some(m) = mock {
        Box::new(m)
    } else if let Some(path) = &args.replay {
        Box::new(ReplayScorer::load(path)?)
    } else if let Some(url) = &args.scorer_url {
        Box::new(HttpScorer::with_timeout(
            url,
            std::time::Duration::from_secs(args.timeout_secs),
        ))
    } else {
        return Err(Error::Domain(format!(
            "no scorer: pass --scorer-url (or set {SCORER_URL_ENV}), --replay or --mock"
        )));
    };
    let options = ScoreOptions {
        alpha: args.alpha,
        batch_size: args.batch_size,
        max_in_flight: args.max_in_flight,
    };
    let scored = match &args.record {
        Some(path) => {
            let recorder = RecordingScorer::new(scorer.as_ref());
            let scored = score_probe_corpus(&probes, &recorder, &options)?;
            recorder.save(path)?;
            scored
        }
        None => score_probe_corpus(&probes, scorer.as_ref(), &options)?,
    };
    let report = factuality_score(&scored)?;
    let doc = json!({
        "run": run,
        "probes": { "schema": probes.schema, "seed": probes.seed, "config": probes.config },
        "report": report,
        "scored": scored,
    });
    write_file(&args.out, &to_pretty(&doc))?;
    if let Some(path) = &args.scores_out {
        write_file(path, &fs_score_lines(&args.model_id, &report))?;
        write_file(&manifest_path(path), &to_pretty(&json!({ "run": doc["run"] })))?;
    }
    let mut out = report.render_table(&args.model_id);
    let _ = writeln!(
        out,
        "{} dialogues used, {} without negatives, {} dropped after scoring failures",
        report.dialogues_used, report.dialogues_without_negatives, report.dialogues_failed
    );
    Ok(out)
}

fn corrupt(args: &CorruptArgs, run: Value) -> Result<String> {
    let corpus = load_corpus(&args.corpus, args.split.into())?;
    let (written, detail) = match args.strategy {
        Strategy::Ldt => {
            let split = make_ldt_split(&corpus, args.knob, args.seed)?;
            let ids: Vec<&str> = split.entries.iter().map(|e| e.dialogue.id.as_str()).collect();
            let detail = json!({ "kept": ids });
            (split, detail)
        }
        Strategy::Mdt => {
            let mdt = make_mdt_corpus(&corpus, args.knob, args.seed)?;
            let corrupted: Vec<Value> = mdt
                .corrupted
                .iter()
                .map(|(id, kind)| json!({ "id": id, "kind": kind }))
                .collect();
            let detail = json!({ "corrupted": corrupted, "unchanged": mdt.unchanged });
            (mdt.corpus, detail)
        }
    };
    // a noise ratio of 0 copies the input byte for byte
    if args.strategy == Strategy::Mdt && args.knob == 0.0 {
        fs::copy(&args.corpus, &args.out).map_err(|e| Error::io(&args.out, e))?;
    } else {
        written.save(&args.out)?;
    }
    let manifest = json!({
        "run": run,
        "input_dialogues": corpus.len(),
        "output_dialogues": written.len(),
        "detail": detail,
    });
    let manifest_path = manifest_path(&args.out);
    write_file(&manifest_path, &to_pretty(&manifest))?;
    Ok(format!(
        "{} of {} dialogues written to {} (manifest: {})\n",
        written.len(),
        corpus.len(),
        args.out.display(),
        manifest_path.display()
    ))
}

/// Sidecar file recording the invocation next to outputs whose own format
/// has no room for it (corpora, score lines).
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name: OsString = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn meta(args: &MetaArgs, run: Value) -> Result<String> {
    let series = load_series(&args.series)?;
    let scores = load_scores(&args.scores)?;
    let report = correlation_report(&series, &scores)?;
    write_file(&args.out, &to_pretty(&json!({ "run": run, "report": report })))?;
    Ok(report.render())
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn stats(args: &StatsArgs, run: Value) -> Result<String> {
    let (text, value) = if let Some(path) = &args.corpus {
        let corpus = load_corpus(path, args.split.into())?;
        let s = corpus_stats(&corpus)?;
        let text = format!(
            "{:<8} {:>8} {:>10} {:>8} {:>10}\n{:<8} {:>8} {:>10.2} {:>8.2} {:>10.2}\n",
            "Split", "# Diag", "# Speakers", "# Turns", "Sum. Len.",
            corpus.split, s.dialogues, s.mean_speakers, s.mean_turns, s.mean_summary_len
        );
        (text, serde_json::to_value(&s).expect("stats serialize"))
    } else {
        let path = args.annotations.as_ref().expect("clap requires one input");
        let records = load_annotations(path)?;
        let report = annotation_report(&records)?;
        let mut text = format!("{:<20} {:>6} {:>8}", "Source", "N", "Any");
        for t in crate::corpus::ErrorType::ALL {
            let _ = write!(text, " {:>8}", t.label());
        }
        text.push('\n');
        for row in report.rows.iter().chain(report.models_pooled.as_ref()) {
            let _ = write!(text, "{:<20} {:>6} {:>8}", row.source, row.summaries, pct(row.any_error));
            for v in row.per_type.values() {
                let _ = write!(text, " {:>8}", pct(*v));
            }
            text.push('\n');
        }
        (text, serde_json::to_value(&report).expect("report serializes"))
    };
    if let Some(out) = &args.out {
        write_file(out, &to_pretty(&json!({ "run": run, "stats": value })))?;
    }
    Ok(text)
}

#[derive(serde::Deserialize)]
struct ModelOutput {
    id: String,
    summary: String,
}

fn baseline(args: &BaselineArgs, run: Value) -> Result<String> {
    let corpus = load_corpus(&args.corpus, args.split.into())?;
    let text = fs::read_to_string(&args.outputs).map_err(|e| Error::io(&args.outputs, e))?;
    let mut pairs: Vec<(String, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let out: ModelOutput = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let entry = corpus.get(&out.id).ok_or_else(|| Error::Integrity(format!(
            "line {}: dialogue `{}` is not in the corpus",
            i + 1,
            out.id
        )))?;
        pairs.push((out.summary, entry.reference.text.as_str()));
    }
    if pairs.is_empty() {
        return Err(Error::Domain("no model outputs to score".into()));
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&str, &str) -> f64| pairs.iter().map(|(c, r)| f(c, r)).sum::<f64>() / n;
    let items: Vec<(&str, Vec<&str>)> = pairs.iter().map(|(c, r)| (c.as_str(), vec![*r])).collect();
    let values = [
        (Metric::Rouge1, mean(&|c, r| rouge_n(c, r, 1))),
        (Metric::Rouge2, mean(&|c, r| rouge_n(c, r, 2))),
        (Metric::RougeL, mean(&|c, r| rouge_l(c, r))),
        (Metric::Bleu4, corpus_bleu4(&items)),
    ];
    let mut lines = String::new();
    let mut table = String::new();
    for (metric, v) in values {
        let rec = ScoreRecord {
            model_id: args.model_id.clone(),
            metric: metric.name().to_string(),
            score: v,
        };
        lines.push_str(&serde_json::to_string(&rec).expect("score records serialize"));
        lines.push('\n');
        let _ = writeln!(table, "{:<8} {:>7}", metric.name(), pct(v));
    }
    write_file(&args.out, &lines)?;
    write_file(&manifest_path(&args.out), &to_pretty(&json!({ "run": run, "outputs": pairs.len() })))?;
    Ok(table)
}

fn dispatch(cli: Cli) -> Result<String> {
    if let Some(n) = cli.jobs {
        // only fails when a global pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::BuildProbes(a) => build_probes(a, run_header("build-probes", a)),
        Command::Score(a) => score(a, run_header("score", a)),
        Command::Corrupt(a) => corrupt(a, run_header("corrupt", a)),
        Command::Meta(a) => meta(a, run_header("meta", a)),
        Command::Stats(a) => stats(a, run_header("stats", a)),
        Command::Baseline(a) => baseline(a, run_header("baseline", a)),
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

/// Runs the command line and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", e.to_string().trim());
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            if e.is_external() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
