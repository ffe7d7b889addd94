//! Per-dialogue probe sets: positives plus kind-tagged negatives, and the
//! versioned probe file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Summary, SummaryOrigin};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::textproc::{extract_speakers, EntityTagger, RuleTagger};
use crate::transforms::{apply_kind, make_positives, NullProvider, ParaphraseProvider, PronounPool, TransformKind};

pub const PROBE_SCHEMA: &str = "faceval-probes/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Maximum negatives kept per kind per dialogue.
    pub cap_per_kind: usize,
    pub max_paraphrases: usize,
    /// Corrupt paraphrased positives as well as the reference.
    pub perturb_paraphrases: bool,
    pub pronoun_pool: PronounPool,
    pub kinds: Vec<TransformKind>,
    /// Identifier of the paraphrase provider.
    pub provider: String,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            cap_per_kind: 5,
            max_paraphrases: 0,
            perturb_paraphrases: true,
            pronoun_pool: PronounPool::DialogueFirst,
            kinds: TransformKind::NEGATIVE.to_vec(),
            provider: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveOrigin {
    Reference,
    Paraphrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Positive {
    pub text: String,
    pub origin: PositiveOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub text: String,
    pub kind: TransformKind,
    pub parent_index: usize,
}

impl Negative {
    pub fn as_summary(&self) -> Summary {
        Summary {
            text: self.text.clone(),
            origin: SummaryOrigin::Perturbed {
                kind: self.kind,
                parent_index: self.parent_index,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub dialogue_id: String,
    /// Flat rendering of the dialogue, the conditioning text for scoring.
    pub dialogue: String,
    pub positives: Vec<Positive>,
    pub negatives: Vec<Negative>,
    /// Per-kind failures (e.g. an external tagger error); other kinds still ran.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl ProbeSet {
    /// Usable for the factuality score: at least one positive and one negative.
    pub fn is_usable(&self) -> bool {
        !self.positives.is_empty() && !self.negatives.is_empty()
    }

    pub fn count(&self, kind: TransformKind) -> usize {
        self.negatives.iter().filter(|n| n.kind == kind).count()
    }

    fn validate(&self) -> Result<()> {
        let id = &self.dialogue_id;
        if self.positives.is_empty() {
            return Err(Error::Integrity(format!("probe set `{id}` has no positives")));
        }
        if self.positives[0].origin != PositiveOrigin::Reference {
            return Err(Error::Integrity(format!(
                "probe set `{id}`: first positive is not the reference"
            )));
        }
        for neg in &self.negatives {
            if neg.parent_index >= self.positives.len() {
                return Err(Error::Integrity(format!(
                    "probe set `{id}`: parent index {} out of range",
                    neg.parent_index
                )));
            }
            if !neg.kind.is_negative() {
                return Err(Error::Integrity(format!(
                    "probe set `{id}`: negative tagged {}",
                    neg.kind
                )));
            }
            if self.positives.iter().any(|p| p.text == neg.text) {
                return Err(Error::Integrity(format!(
                    "probe set `{id}`: negative equals a positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCorpus {
    pub schema: String,
    pub seed: u64,
    pub config: ProbeConfig,
    /// Invocation that produced the file, when written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
    pub counts: BTreeMap<TransformKind, usize>,
    pub probe_sets: Vec<ProbeSet>,
}

impl ProbeCorpus {
    pub fn new(seed: u64, config: ProbeConfig, probe_sets: Vec<ProbeSet>) -> Self {
        let counts = tally(&probe_sets);
        ProbeCorpus {
            schema: PROBE_SCHEMA.into(),
            seed,
            config,
            run: None,
            counts,
            probe_sets,
        }
    }

    pub fn total_negatives(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, dialogue_id: &str) -> Option<&ProbeSet> {
        self.probe_sets.iter().find(|p| p.dialogue_id == dialogue_id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("probe corpus serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| json_error_at(text, &e))?;
        let schema = value
            .get("schema")
            .and_then(|s| s.as_str())
            .ok_or_else(|| Error::ParseAt {
                offset: 0,
                message: "missing `schema` header".into(),
            })?;
        if schema != PROBE_SCHEMA {
            return Err(Error::Version {
                found: schema.to_string(),
                expected: PROBE_SCHEMA.into(),
            });
        }
        let corpus: ProbeCorpus = serde_json::from_value(value).map_err(|e| Error::ParseAt {
            offset: 0,
            message: e.to_string(),
        })?;
        for set in &corpus.probe_sets {
            set.validate()?;
        }
        if tally(&corpus.probe_sets) != corpus.counts {
            return Err(Error::Integrity(
                "recorded negative counts disagree with the probe sets".into(),
            ));
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ProbeCorpus::from_json(&text)
    }
}

fn tally(sets: &[ProbeSet]) -> BTreeMap<TransformKind, usize> {
    let mut counts: BTreeMap<TransformKind, usize> =
        TransformKind::NEGATIVE.iter().map(|&k| (k, 0)).collect();
    for set in sets {
        for neg in &set.negatives {
            *counts.entry(neg.kind).or_default() += 1;
        }
    }
    counts
}

/// Converts serde_json's line/column into a byte offset into `text`.
fn json_error_at(text: &str, err: &serde_json::Error) -> Error {
    let line = err.line().max(1);
    let preceding: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    Error::ParseAt {
        offset: (preceding + err.column().saturating_sub(1)).min(text.len()),
        message: err.to_string(),
    }
}

/// Builds probe sets under one configuration. Without an explicit tagger,
/// each dialogue gets a [`RuleTagger`] primed with its speaker names.
pub struct ProbeBuilder<'a> {
    pub config: ProbeConfig,
    provider: &'a dyn ParaphraseProvider,
    tagger: Option<&'a dyn EntityTagger>,
}

impl<'a> ProbeBuilder<'a> {
    pub fn new(config: ProbeConfig) -> Self {
        ProbeBuilder {
            config,
            provider: &NullProvider,
            tagger: None,
        }
    }

    pub fn with_provider(mut self, provider: &'a dyn ParaphraseProvider) -> Self {
        self.config.provider = provider.id();
        self.provider = provider;
        self
    }

    pub fn with_tagger(mut self, tagger: &'a dyn EntityTagger) -> Self {
        self.tagger = Some(tagger);
        self
    }

    pub fn build_set(&self, dialogue: &Dialogue, reference: &Summary, seed: u64) -> ProbeSet {
        let positives = make_positives(reference, self.provider, self.config.max_paraphrases);
        let rule_tagger;
        let tagger: &dyn EntityTagger = match self.tagger {
            Some(t) => t,
            None => {
                rule_tagger = RuleTagger::with_speakers(extract_speakers(dialogue));
                &rule_tagger
            }
        };
        let targets = if self.config.perturb_paraphrases {
            positives.len()
        } else {
            1
        };

        let mut negatives = Vec::new();
        let mut errors = Vec::new();
        for &kind in &self.config.kinds {
            if !kind.is_negative() {
                continue;
            }
            let mut rng = rng_for(seed, &[&dialogue.id, kind.code()]);
            let mut candidates: Vec<Negative> = Vec::new();
            for (m, positive) in positives.iter().enumerate().take(targets) {
                let perturbations = match apply_kind(
                    kind,
                    &positive.text,
                    dialogue,
                    tagger,
                    self.config.pronoun_pool,
                    &mut rng,
                ) {
                    Ok(p) => p,
                    Err(e) => {
                        errors.push(format!("{kind}: {e}"));
                        break;
                    }
                };
                for p in perturbations {
                    let text = p.result_text;
                    let duplicate = candidates.iter().any(|c| c.text == text)
                        || positives.iter().any(|pos| pos.text == text);
                    if !duplicate {
                        candidates.push(Negative {
                            text,
                            kind,
                            parent_index: m,
                        });
                    }
                }
            }
            if candidates.len() > self.config.cap_per_kind {
                let mut keep = index::sample(&mut rng, candidates.len(), self.config.cap_per_kind).into_vec();
                keep.sort_unstable();
                candidates = keep.into_iter().map(|i| candidates[i].clone()).collect();
            }
            negatives.extend(candidates);
        }

        ProbeSet {
            dialogue_id: dialogue.id.clone(),
            dialogue: dialogue.render(),
            positives: positives
                .into_iter()
                .map(|s| Positive {
                    origin: match s.origin {
                        SummaryOrigin::Reference => PositiveOrigin::Reference,
                        _ => PositiveOrigin::Paraphrase,
                    },
                    text: s.text,
                })
                .collect(),
            negatives,
            errors,
        }
    }

    /// One probe set per corpus entry, in corpus order. Runs on the current
    /// rayon pool; the output does not depend on scheduling.
    pub fn build_corpus(&self, corpus: &Corpus, seed: u64) -> Result<ProbeCorpus> {
        if corpus.is_empty() {
            return Err(Error::Domain("cannot build probes for an empty corpus".into()));
        }
        let sets: Vec<ProbeSet> = corpus
            .entries
            .par_iter()
            .map(|e| self.build_set(&e.dialogue, &e.reference, seed))
            .collect();
        Ok(ProbeCorpus::new(seed, self.config.clone(), sets))
    }
}

pub fn build_probe_set(dialogue: &Dialogue, reference: &Summary, config: &ProbeConfig, seed: u64) -> ProbeSet {
    ProbeBuilder::new(config.clone()).build_set(dialogue, reference, seed)
}

pub fn build_probe_corpus(corpus: &Corpus, config: &ProbeConfig, seed: u64) -> Result<ProbeCorpus> {
    ProbeBuilder::new(config.clone()).build_corpus(corpus, seed)
}
