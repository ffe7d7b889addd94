//! Model-series preparation and rank-correlation meta-evaluation.
//!
//! A limited-data series trains models on growing uniform samples of the
//! training corpus; a mixed-data series trains on corpora where a growing
//! share of dialogues has been factually corrupted. Training happens
//! elsewhere: this module writes the corpora and correlates externally
//! produced metric scores with the intended model order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Entry};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textproc::{extract_speakers, RuleTagger};
use crate::transforms::{apply_kind, PronounPool, TransformKind};

/// Guards floor() against values like 0.05 * 14732 landing a hair below an integer.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ldt,
    Mdt,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ldt => "ldt",
            Strategy::Mdt => "mdt",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldt" => Ok(Strategy::Ldt),
            "mdt" => Ok(Strategy::Mdt),
            other => Err(Error::Domain(format!("unknown strategy `{other}` (expected ldt or mdt)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub model_id: String,
    /// Training-data fraction for LDT, clean-data ratio for MDT.
    pub knob: f64,
}

/// Models ordered by intended capability: a larger knob should mean a
/// better (for MDT: more faithful) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSeries {
    pub name: String,
    pub strategy: Strategy,
    pub points: Vec<SeriesPoint>,
}

impl ModelSeries {
    pub fn new(name: impl Into<String>, strategy: Strategy, points: Vec<SeriesPoint>) -> Result<Self> {
        let series = ModelSeries {
            name: name.into(),
            strategy,
            points,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !p.knob.is_finite() {
                return Err(Error::Domain(format!(
                    "series `{}`: knob of `{}` is not finite",
                    self.name, p.model_id
                )));
            }
        }
        if let Some(w) = self.points.windows(2).find(|w| w[0].knob >= w[1].knob) {
            return Err(Error::Domain(format!(
                "series `{}`: knobs must be strictly increasing (`{}` {} then `{}` {})",
                self.name, w[0].model_id, w[0].knob, w[1].model_id, w[1].knob
            )));
        }
        Ok(())
    }

    pub fn knobs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.knob).collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeriesFile {
    Many(Vec<ModelSeries>),
    One(ModelSeries),
}

/// Reads a JSON file holding one series object or an array of them.
pub fn load_series(path: &Path) -> Result<Vec<ModelSeries>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: SeriesFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let series = match parsed {
        SeriesFile::Many(v) => v,
        SeriesFile::One(s) => vec![s],
    };
    for s in &series {
        s.validate()?;
    }
    Ok(series)
}

fn round_knob(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Data fractions 5%, 10%, ..., 100%.
pub fn ldt_schedule() -> Vec<f64> {
    (1..=20).map(|i| round_knob(i as f64 * 0.05)).collect()
}

/// Noise ratios 100%, 95%, ..., 0%.
pub fn mdt_schedule() -> Vec<f64> {
    (0..=20).rev().map(|i| round_knob(i as f64 * 0.05)).collect()
}

pub fn sample_size(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + FLOOR_EPS).floor() as usize
}

/// Uniform sample without replacement of `floor(fraction * n)` entries, kept
/// in corpus order. A fraction of 1 returns the corpus unchanged.
pub fn make_ldt_split(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("data fraction {fraction} is outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(corpus.clone());
    }
    let n = corpus.len();
    let k = sample_size(fraction, n);
    if k == 0 {
        return Err(Error::Domain(format!(
            "data fraction {fraction} of {n} dialogues selects nothing"
        )));
    }
    let mut rng = rng_for(seed, &["ldt", &fraction.to_string()]);
    let mut keep = index::sample(&mut rng, n, k).into_vec();
    keep.sort_unstable();
    let entries = keep.into_iter().map(|i| corpus.entries[i].clone()).collect();
    Corpus::new(corpus.split, entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedDialogue {
    pub dialogue: Dialogue,
    /// Kind of the applied edit; None when nothing applied.
    pub kind: Option<TransformKind>,
}

impl CorruptedDialogue {
    pub fn changed(&self) -> bool {
        self.kind.is_some()
    }
}

fn same_structure(a: &Dialogue, b: &Dialogue) -> bool {
    a.turns.len() == b.turns.len()
        && a.turns.iter().zip(&b.turns).all(|(x, y)| x.speaker == y.speaker)
}

/// Applies one corruption to the dialogue's own rendered text, using the
/// dialogue as the source of replacements. Kinds are tried in a seeded
/// order; within a kind one valid edit is drawn at random. Edits whose
/// re-parsed text changes the turn count or speaker sequence are rejected.
pub fn corrupt_dialogue(dialogue: &Dialogue, kinds: &[TransformKind], seed: u64) -> CorruptedDialogue {
    let text = dialogue.render();
    let tagger = RuleTagger::with_speakers(extract_speakers(dialogue));
    let mut rng = rng_for(seed, &["corrupt", &dialogue.id]);
    let mut order: Vec<TransformKind> = kinds.iter().copied().filter(|k| k.is_negative()).collect();
    order.sort();
    order.dedup();
    order.shuffle(&mut rng);
    for kind in order {
        let edits = match apply_kind(kind, &text, dialogue, &tagger, PronounPool::DialogueOnly, &mut rng) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("dialogue `{}`: {kind} failed: {e}", dialogue.id);
                continue;
            }
        };
        let valid: Vec<Dialogue> = edits
            .iter()
            .filter_map(|p| Dialogue::from_text(dialogue.id.clone(), &p.result_text).ok())
            .filter(|d| same_structure(d, dialogue) && d != dialogue)
            .collect();
        if valid.is_empty() {
            continue;
        }
        let pick = rng.gen_range(0..valid.len());
        return CorruptedDialogue {
            dialogue: valid[pick].clone(),
            kind: Some(kind),
        };
    }
    CorruptedDialogue {
        dialogue: dialogue.clone(),
        kind: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdtCorpus {
    pub corpus: Corpus,
    /// Ids of entries whose dialogue was edited, with the kind applied.
    pub corrupted: Vec<(String, TransformKind)>,
    /// Ids selected for corruption where no edit applied.
    pub unchanged: Vec<String>,
}

/// Corrupts the dialogues of `floor(noise_ratio * n)` seeded-chosen entries;
/// summaries are never touched.
pub fn make_mdt_corpus(corpus: &Corpus, noise_ratio: f64, seed: u64) -> Result<MdtCorpus> {
    if !(0.0..=1.0).contains(&noise_ratio) {
        return Err(Error::Domain(format!("noise ratio {noise_ratio} is outside [0, 1]")));
    }
    let n = corpus.len();
    let k = sample_size(noise_ratio, n);
    let mut rng = rng_for(seed, &["mdt", &noise_ratio.to_string()]);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();

    let results: Vec<(usize, CorruptedDialogue)> = chosen
        .par_iter()
        .map(|&i| (i, corrupt_dialogue(&corpus.entries[i].dialogue, &TransformKind::NEGATIVE, seed)))
        .collect();

    let mut entries = corpus.entries.clone();
    let mut corrupted = Vec::new();
    let mut unchanged = Vec::new();
    for (i, result) in results {
        let id = corpus.entries[i].dialogue.id.clone();
        match result.kind {
            Some(kind) => {
                entries[i] = Entry {
                    dialogue: result.dialogue,
                    reference: corpus.entries[i].reference.clone(),
                };
                corrupted.push((id, kind));
            }
            None => unchanged.push(id),
        }
    }
    Ok(MdtCorpus {
        corpus: Corpus::new(corpus.split, entries)?,
        corrupted,
        unchanged,
    })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "rank correlation needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Domain(format!(
            "rank correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("rank correlation input is not finite".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("one of the vectors is constant".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model_id: String,
    pub metric: String,
    pub score: f64,
}

pub fn read_scores<R: BufRead>(reader: R) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !rec.score.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("score of `{}` is not finite", rec.model_id),
            });
        }
        if let Some(first) = seen.insert((rec.model_id.clone(), rec.metric.clone()), i + 1) {
            return Err(Error::Integrity(format!(
                "line {}: `{}` / `{}` already scored on line {first}",
                i + 1,
                rec.model_id,
                rec.metric
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub series: String,
    pub metric: String,
    /// None when the correlation is undefined.
    pub rho: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub series: Vec<String>,
    pub metrics: Vec<String>,
    pub cells: Vec<CorrelationCell>,
}

/// Metric name used for the overall factuality score; per-kind scores are
/// reported as `FS:<code>`.
pub const FS_METRIC: &str = "FS";

pub fn fs_kind_metric(kind: TransformKind) -> String {
    format!("{FS_METRIC}:{}", kind.code())
}

fn fmt_rho(rho: Option<f64>) -> String {
    match rho {
        Some(r) => format!("{:.2}", r * 100.0),
        None => "\u{2014}".to_string(),
    }
}

impl CorrelationReport {
    pub fn cell(&self, series: &str, metric: &str) -> Option<&CorrelationCell> {
        self.cells.iter().find(|c| c.series == series && c.metric == metric)
    }

    /// Metric rows by series columns, correlations multiplied by 100. When
    /// factuality scores are present, a second table breaks them down by
    /// transform kind.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.metrics.iter().map(|m| m.len()).max().unwrap_or(6).max(6);
        let col = |s: &str| s.chars().count().max(8);
        let _ = write!(out, "{:<width$}", "Metric");
        for s in &self.series {
            let _ = write!(out, "  {:>w$}", s, w = col(s));
        }
        out.push('\n');
        for m in &self.metrics {
            let _ = write!(out, "{m:<width$}");
            for s in &self.series {
                let rho = self.cell(s, m).and_then(|c| c.rho);
                let _ = write!(out, "  {:>w$}", fmt_rho(rho), w = col(s));
            }
            out.push('\n');
        }

        let kind_cols: Vec<(String, String)> = std::iter::once(("All".to_string(), FS_METRIC.to_string()))
            .chain(
                TransformKind::REPORT_ORDER
                    .iter()
                    .map(|k| (k.code().to_string(), fs_kind_metric(*k))),
            )
            .filter(|(_, metric)| self.metrics.contains(metric))
            .collect();
        if kind_cols.len() > 1 {
            let name_w = self.series.iter().map(|s| s.len()).max().unwrap_or(6).max(6);
            out.push('\n');
            let _ = write!(out, "{:<name_w$}", "Series");
            for (label, _) in &kind_cols {
                let _ = write!(out, "  {label:>8}");
            }
            out.push('\n');
            for s in &self.series {
                let _ = write!(out, "{s:<name_w$}");
                for (_, metric) in &kind_cols {
                    let rho = self.cell(s, metric).and_then(|c| c.rho);
                    let _ = write!(out, "  {:>8}", fmt_rho(rho));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Spearman correlation between each series' knob order and each metric's
/// scores. Every (point, metric) pair needs a score. Metrics are reported
/// in order of first appearance in `scores`.
pub fn correlation_report(series: &[ModelSeries], scores: &[ScoreRecord]) -> Result<CorrelationReport> {
    let mut metrics: Vec<String> = Vec::new();
    let mut table: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in scores {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric.clone());
        }
        table.insert((r.model_id.as_str(), r.metric.as_str()), r.score);
    }
    let mut cells = Vec::new();
    for s in series {
        s.validate()?;
        let knobs = s.knobs();
        for m in &metrics {
            let mut values = Vec::with_capacity(s.points.len());
            for p in &s.points {
                let v = table
                    .get(&(p.model_id.as_str(), m.as_str()))
                    .ok_or_else(|| Error::MissingScore {
                        model_id: p.model_id.clone(),
                        metric: m.clone(),
                    })?;
                values.push(*v);
            }
            let (rho, note) = match spearman(&knobs, &values) {
                Ok(r) => (Some(r), None),
                Err(e @ (Error::UndefinedCorrelation(_) | Error::Domain(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            cells.push(CorrelationCell {
                series: s.name.clone(),
                metric: m.clone(),
                rho,
                n: values.len(),
                note,
            });
        }
    }
    Ok(CorrelationReport {
        series: series.iter().map(|s| s.name.clone()).collect(),
        metrics,
        cells,
    })
}
