//! Model-level faithfulness evaluation for dialogue summarization.
//!
//! The pipeline builds probe sets of faithful (positive) and corrupted
//! (negative) summaries per dialogue, asks a scorer for the conditional
//! log-probabilities of each summary, and reports how often a model prefers
//! the faithful summary. Supporting modules build controlled training
//! corpora for model series and correlate metric scores with their order.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod metaeval;
pub mod probes;
pub mod scoring;
pub mod seed;
pub mod textproc;
pub mod transforms;

pub use corpus::{load_annotations, load_corpus, Corpus, Dialogue, Split, Summary, Turn};
pub use error::{Error, Result, ScorerError};
pub use probes::{build_probe_corpus, ProbeConfig, ProbeCorpus, ProbeSet};
pub use scoring::{factuality_score, score_probe_corpus, FactualityReport, MockScorer, Scorer};
pub use transforms::TransformKind;
