//! Generation scores of probe summaries and the factuality score of a model.
//!
//! A scorer returns teacher-forced token log-probabilities for
//! (dialogue, summary) pairs. The generation score of a summary is its
//! log-probability sum divided by `L^alpha`; the factuality score is, per
//! dialogue, the fraction of (positive, negative) pairs in which the positive
//! scores strictly higher, averaged uniformly over dialogues.

mod mock;
mod remote;

pub use mock::MockScorer;
pub use remote::{CassetteEntry, HttpParaphraser, HttpScorer, RecordingScorer, ReplayScorer};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ScorerError};
use crate::probes::ProbeCorpus;
use crate::transforms::TransformKind;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenLogProbs {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> std::result::Result<Self, String> {
        if tokens.is_empty() {
            return Err("empty token list".into());
        }
        if tokens.len() != logprobs.len() {
            return Err(format!(
                "{} tokens but {} log-probabilities",
                tokens.len(),
                logprobs.len()
            ));
        }
        if let Some(bad) = logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(format!("log-probability {bad} is not a finite value <= 0"));
        }
        Ok(TokenLogProbs { tokens, logprobs })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationScore {
    pub value: f64,
    pub length: usize,
    pub alpha: f64,
    pub logprob_sum: f64,
}

/// Length-normalized log-probability over a raw slice.
pub fn length_normalized(logprobs: &[f64], alpha: f64) -> Result<GenerationScore> {
    if logprobs.is_empty() {
        return Err(Error::Domain("generation score of an empty sequence".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("length penalty {alpha} must be >= 0")));
    }
    let sum: f64 = logprobs.iter().sum();
    let length = logprobs.len();
    Ok(GenerationScore {
        value: sum / (length as f64).powf(alpha),
        length,
        alpha,
        logprob_sum: sum,
    })
}

pub fn generation_score(tlp: &TokenLogProbs, alpha: f64) -> Result<GenerationScore> {
    length_normalized(&tlp.logprobs, alpha)
}

/// One pair of the scorer wire protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub dialogue: String,
    pub summary: String,
}

/// One result entry of the scorer wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireResult {
    Scored {
        id: String,
        tokens: Vec<String>,
        logprobs: Vec<f64>,
    },
    Failed {
        id: String,
        error: String,
    },
}

impl WireResult {
    pub fn id(&self) -> &str {
        match self {
            WireResult::Scored { id, .. } | WireResult::Failed { id, .. } => id,
        }
    }

    pub fn failed(id: impl Into<String>, error: impl Into<String>) -> Self {
        WireResult::Failed {
            id: id.into(),
            error: error.into(),
        }
    }

    fn into_logprobs(self) -> std::result::Result<TokenLogProbs, String> {
        match self {
            WireResult::Scored {
                tokens, logprobs, ..
            } => TokenLogProbs::new(tokens, logprobs),
            WireResult::Failed { error, .. } => Err(error),
        }
    }
}

/// A conditional generation model behind the wire protocol.
pub trait Scorer: Sync {
    /// Scores a batch. A batch-level `Err(Unavailable)` aborts the run; a
    /// batch-level `Err(Protocol)` fails every pair of the batch.
    fn score_batch(&self, batch: &[ScoreRequest]) -> std::result::Result<Vec<WireResult>, ScorerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Positive,
    Negative,
}

/// Pair ids are `<dialogue_id>::p<m>` for positives and `<dialogue_id>::n<n>`
/// for negatives.
pub fn pair_id(dialogue_id: &str, role: Role, index: usize) -> String {
    let tag = match role {
        Role::Positive => 'p',
        Role::Negative => 'n',
    };
    format!("{dialogue_id}::{tag}{index}")
}

pub fn parse_pair_id(id: &str) -> Option<(&str, Role, usize)> {
    let (dialogue, tail) = id.rsplit_once("::")?;
    let role = match tail.chars().next()? {
        'p' => Role::Positive,
        'n' => Role::Negative,
        _ => return None,
    };
    let index = tail[1..].parse().ok()?;
    Some((dialogue, role, index))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub alpha: f64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            alpha: DEFAULT_ALPHA,
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSummary {
    pub text: String,
    /// None for positives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TransformKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<GenerationScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoredSummary {
    pub fn gs(&self) -> Option<f64> {
        self.score.map(|s| s.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProbeSet {
    pub dialogue_id: String,
    pub positives: Vec<ScoredSummary>,
    pub negatives: Vec<ScoredSummary>,
}

impl ScoredProbeSet {
    pub fn has_failures(&self) -> bool {
        self.positives.iter().chain(&self.negatives).any(|s| s.score.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCorpus {
    pub alpha: f64,
    pub sets: Vec<ScoredProbeSet>,
}

impl ScoredCorpus {
    pub fn failed_pairs(&self) -> usize {
        self.sets
            .iter()
            .flat_map(|s| s.positives.iter().chain(&s.negatives))
            .filter(|s| s.score.is_none())
            .count()
    }
}

/// Requests for every summary of every probe set, in file order.
pub fn probe_requests(probes: &ProbeCorpus) -> Vec<ScoreRequest> {
    let mut requests = Vec::new();
    for set in &probes.probe_sets {
        for (m, p) in set.positives.iter().enumerate() {
            requests.push(ScoreRequest {
                id: pair_id(&set.dialogue_id, Role::Positive, m),
                dialogue: set.dialogue.clone(),
                summary: p.text.clone(),
            });
        }
        for (n, neg) in set.negatives.iter().enumerate() {
            requests.push(ScoreRequest {
                id: pair_id(&set.dialogue_id, Role::Negative, n),
                dialogue: set.dialogue.clone(),
                summary: neg.text.clone(),
            });
        }
    }
    requests
}

/// Scores every summary of `probes`. Batches go out concurrently, at most
/// `max_in_flight` at a time; results are matched back by pair id.
pub fn score_probe_corpus(
    probes: &ProbeCorpus,
    scorer: &dyn Scorer,
    options: &ScoreOptions,
) -> Result<ScoredCorpus> {
    if !(options.alpha.is_finite() && options.alpha >= 0.0) {
        return Err(Error::Domain(format!("length penalty {} must be >= 0", options.alpha)));
    }
    let requests = probe_requests(probes);
    let batch_size = options.batch_size.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("cannot start scoring workers: {e}")))?;
    let batches: Vec<&[ScoreRequest]> = requests.chunks(batch_size).collect();
    let responses: Vec<std::result::Result<Vec<WireResult>, ScorerError>> =
        pool.install(|| batches.par_iter().map(|b| scorer.score_batch(b)).collect());

    let mut by_id: HashMap<String, std::result::Result<TokenLogProbs, String>> = HashMap::new();
    for (batch, response) in batches.iter().zip(responses) {
        match response {
            Ok(results) => {
                for r in results {
                    let id = r.id().to_string();
                    by_id.entry(id).or_insert_with(|| r.into_logprobs());
                }
            }
            Err(ScorerError::Unavailable(msg)) => {
                return Err(ScorerError::Unavailable(msg).into());
            }
            Err(ScorerError::Protocol(msg)) => {
                for req in batch.iter() {
                    by_id.insert(req.id.clone(), Err(msg.clone()));
                }
            }
        }
    }

    let mut take = |id: String, text: &str, kind: Option<TransformKind>| {
        let outcome = by_id
            .remove(&id)
            .unwrap_or_else(|| Err(format!("scorer returned no result for `{id}`")));
        let (score, error) = match outcome.and_then(|tlp| {
            generation_score(&tlp, options.alpha).map_err(|e| e.to_string())
        }) {
            Ok(gs) => (Some(gs), None),
            Err(msg) => (None, Some(msg)),
        };
        ScoredSummary {
            text: text.to_string(),
            kind,
            score,
            error,
        }
    };

    let sets = probes
        .probe_sets
        .iter()
        .map(|set| ScoredProbeSet {
            dialogue_id: set.dialogue_id.clone(),
            positives: set
                .positives
                .iter()
                .enumerate()
                .map(|(m, p)| take(pair_id(&set.dialogue_id, Role::Positive, m), &p.text, None))
                .collect(),
            negatives: set
                .negatives
                .iter()
                .enumerate()
                .map(|(n, neg)| {
                    take(pair_id(&set.dialogue_id, Role::Negative, n), &neg.text, Some(neg.kind))
                })
                .collect(),
        })
        .collect();
    Ok(ScoredCorpus {
        alpha: options.alpha,
        sets,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: u64,
    pub comparisons: u64,
}

impl Tally {
    pub fn fraction(&self) -> f64 {
        self.wins as f64 / self.comparisons as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTally {
    pub dialogue_id: String,
    pub overall: Tally,
    pub per_kind: BTreeMap<TransformKind, Tally>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualityReport {
    pub fs_overall: f64,
    /// Kinds with no negatives anywhere are absent.
    pub fs_per_kind: BTreeMap<TransformKind, f64>,
    pub dialogues_used: usize,
    pub dialogues_without_negatives: usize,
    pub dialogues_failed: usize,
    pub per_dialogue: Vec<DialogueTally>,
}

impl FactualityReport {
    pub fn comparisons(&self) -> u64 {
        self.per_dialogue.iter().map(|d| d.overall.comparisons).sum()
    }

    pub fn wins(&self) -> u64 {
        self.per_dialogue.iter().map(|d| d.overall.wins).sum()
    }

    /// The "All" column followed by one column per kind, scaled by 100.
    pub fn render_table(&self, model: &str) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<20} {:>7}", "Model", "All");
        for kind in TransformKind::REPORT_ORDER {
            let _ = write!(out, " {:>7}", kind.code());
        }
        out.push('\n');
        let _ = write!(out, "{:<20} {:>7.2}", model, self.fs_overall * 100.0);
        for kind in TransformKind::REPORT_ORDER {
            match self.fs_per_kind.get(&kind) {
                Some(v) => {
                    let _ = write!(out, " {:>7.2}", v * 100.0);
                }
                None => {
                    let _ = write!(out, " {:>7}", "\u{2014}");
                }
            }
        }
        out.push('\n');
        out
    }
}

/// Aggregates pairwise wins into the factuality score. Dialogues with a
/// failed summary are dropped whole; dialogues without negatives are skipped.
/// Ties count as losses.
pub fn factuality_score(scored: &ScoredCorpus) -> Result<FactualityReport> {
    let mut sets: Vec<&ScoredProbeSet> = scored.sets.iter().collect();
    sets.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));

    let mut per_dialogue = Vec::new();
    let mut failed = 0;
    let mut empty = 0;
    for set in sets {
        if set.has_failures() {
            failed += 1;
            continue;
        }
        if set.positives.is_empty() || set.negatives.is_empty() {
            empty += 1;
            continue;
        }
        let mut overall = Tally::default();
        let mut per_kind: BTreeMap<TransformKind, Tally> = BTreeMap::new();
        for neg in &set.negatives {
            let neg_gs = neg.gs().expect("failures filtered above");
            let kind = neg.kind.expect("negatives carry a kind");
            let wins = set
                .positives
                .iter()
                .filter(|p| p.gs().expect("failures filtered above") > neg_gs)
                .count() as u64;
            let m = set.positives.len() as u64;
            overall.wins += wins;
            overall.comparisons += m;
            let slot = per_kind.entry(kind).or_default();
            slot.wins += wins;
            slot.comparisons += m;
        }
        per_dialogue.push(DialogueTally {
            dialogue_id: set.dialogue_id.clone(),
            overall,
            per_kind,
        });
    }
    if per_dialogue.is_empty() {
        return Err(Error::Domain(
            "no dialogue with both positives and negatives was scored".into(),
        ));
    }

    let fs_overall =
        per_dialogue.iter().map(|d| d.overall.fraction()).sum::<f64>() / per_dialogue.len() as f64;
    let mut fs_per_kind = BTreeMap::new();
    for kind in TransformKind::NEGATIVE {
        let fractions: Vec<f64> = per_dialogue
            .iter()
            .filter_map(|d| d.per_kind.get(&kind))
            .map(Tally::fraction)
            .collect();
        if !fractions.is_empty() {
            fs_per_kind.insert(kind, fractions.iter().sum::<f64>() / fractions.len() as f64);
        }
    }
    Ok(FactualityReport {
        fs_overall,
        fs_per_kind,
        dialogues_used: per_dialogue.len(),
        dialogues_without_negatives: empty,
        dialogues_failed: failed,
        per_dialogue,
    })
}
