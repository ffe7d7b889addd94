//! Reference-based n-gram overlap metrics: ROUGE-1/2/L F-measure and BLEU-4.
//!
//! All metrics share one tokenizer: lowercase, split on whitespace, strip
//! leading and trailing punctuation from each token, drop tokens that end up
//! empty. BLEU uses add-one smoothing for an n-gram order n >= 2 with zero
//! matches: its precision becomes 1 / (candidate n-grams + 1).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "ROUGE-1")]
    Rouge1,
    #[serde(rename = "ROUGE-2")]
    Rouge2,
    #[serde(rename = "ROUGE-L")]
    RougeL,
    #[serde(rename = "BLEU-4")]
    Bleu4,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu4];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "ROUGE-1",
            Metric::Rouge2 => "ROUGE-2",
            Metric::RougeL => "ROUGE-L",
            Metric::Bleu4 => "BLEU-4",
        }
    }

    pub fn score(self, candidate: &str, reference: &str) -> MetricScore {
        let value = match self {
            Metric::Rouge1 => rouge_n(candidate, reference, 1),
            Metric::Rouge2 => rouge_n(candidate, reference, 2),
            Metric::RougeL => rouge_l(candidate, reference),
            Metric::Bleu4 => bleu4(candidate, &[reference]),
        };
        MetricScore { metric: self, value }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn f_measure(matches: usize, cand_total: usize, ref_total: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_total as f64;
    let r = matches as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn tokenize_pair(candidate: &str, reference: &str) -> Option<(Vec<String>, Vec<String>)> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        log::warn!("metric input has no tokens after normalization; scoring 0");
        return None;
    }
    Some((c, r))
}

/// ROUGE-n F-measure with clipped n-gram counts. Texts too short to contain
/// an n-gram score 1 against an identical token sequence and 0 otherwise.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let Some((c, r)) = tokenize_pair(candidate, reference) else {
        return 0.0;
    };
    if c.len() < n || r.len() < n {
        return if c == r { 1.0 } else { 0.0 };
    }
    let cc = ngram_counts(&c, n);
    let rc = ngram_counts(&r, n);
    let matches: usize = cc
        .iter()
        .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    f_measure(matches, c.len() + 1 - n, r.len() + 1 - n)
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure from the longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let Some((c, r)) = tokenize_pair(candidate, reference) else {
        return 0.0;
    };
    f_measure(lcs_len(&c, &r), c.len(), r.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BleuStats {
    matches: [usize; 4],
    totals: [usize; 4],
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, other: &BleuStats) {
        for n in 0..4 {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    fn score(&self) -> f64 {
        if self.cand_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..4 {
            let p = if self.matches[n] > 0 {
                self.matches[n] as f64 / self.totals[n] as f64
            } else {
                1.0 / (self.totals[n] as f64 + 1.0)
            };
            log_sum += p.ln();
        }
        let c = self.cand_len as f64;
        let r = self.ref_len as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        (bp * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
    }
}

fn bleu_stats(candidate: &[String], references: &[Vec<String>]) -> BleuStats {
    let mut stats = BleuStats {
        cand_len: candidate.len(),
        ..BleuStats::default()
    };
    // closest reference length, shorter one on ties
    stats.ref_len = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(candidate.len()), len))
        .unwrap_or(0);
    for n in 1..=4 {
        let cc = ngram_counts(candidate, n);
        let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        stats.matches[n - 1] = cc
            .iter()
            .map(|(g, &k)| {
                let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max();
                k.min(max_ref.unwrap_or(0))
            })
            .sum();
        stats.totals[n - 1] = candidate.len().saturating_sub(n - 1);
    }
    stats
}

/// Sentence-level BLEU-4 against one or more references.
pub fn bleu4(candidate: &str, references: &[&str]) -> f64 {
    let c = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if c.is_empty() || refs.iter().all(Vec::is_empty) {
        log::warn!("BLEU input has no tokens after normalization; scoring 0");
        return 0.0;
    }
    bleu_stats(&c, &refs).score()
}

/// Corpus-level BLEU-4: n-gram statistics and lengths are summed over all
/// (candidate, references) items before combining.
pub fn corpus_bleu4(items: &[(&str, Vec<&str>)]) -> f64 {
    let mut total = BleuStats::default();
    for (cand, refs) in items {
        let c = tokenize(cand);
        let r: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        total.add(&bleu_stats(&c, &r));
    }
    total.score()
}
