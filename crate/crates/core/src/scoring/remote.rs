use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ScoreRequest, Scorer, WireResult};
use crate::error::{Error, Result, ScorerError};
use crate::transforms::ParaphraseProvider;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Serialize)]
struct ScoreBody<'a> {
    pairs: &'a [ScoreRequest],
}

#[derive(Deserialize)]
struct ScoreResponse {
    results: Vec<WireResult>,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

/// Connection-level failures mean nothing can be scored; anything after the
/// server accepted the request is a protocol failure of that batch.
fn classify(url: &str, err: ureq::Error) -> ScorerError {
    match err {
        ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::BadUri(_) => ScorerError::Unavailable(format!("{url}: {err}")),
        other => ScorerError::Protocol(format!("{url}: {other}")),
    }
}

/// Client for the `/score` endpoint of the scorer wire protocol.
#[derive(Debug)]
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        HttpScorer {
            url: endpoint(base_url, "score"),
            agent: agent(timeout),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Scorer for HttpScorer {
    fn score_batch(&self, batch: &[ScoreRequest]) -> std::result::Result<Vec<WireResult>, ScorerError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(ScoreBody { pairs: batch })
            .map_err(|e| classify(&self.url, e))?;
        let status = resp.status().as_u16();
        if status == 503 {
            return Err(ScorerError::Unavailable(format!("{}: HTTP 503", self.url)));
        }
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ScorerError::Protocol(format!(
                "{}: HTTP {status}: {}",
                self.url,
                body.trim()
            )));
        }
        let parsed: ScoreResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ScorerError::Protocol(format!("{}: malformed response: {e}", self.url)))?;
        Ok(parsed.results)
    }
}

#[derive(Serialize)]
struct ParaphraseBody<'a> {
    text: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct ParaphraseResponse {
    paraphrases: Vec<String>,
}

/// Client for the `/paraphrase` endpoint. Any failure, including the 501 a
/// server without a translation model answers with, is returned as an error
/// so positive augmentation falls back to the reference alone.
#[derive(Debug)]
pub struct HttpParaphraser {
    url: String,
    agent: ureq::Agent,
}

impl HttpParaphraser {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        HttpParaphraser {
            url: endpoint(base_url, "paraphrase"),
            agent: agent(timeout),
        }
    }
}

impl ParaphraseProvider for HttpParaphraser {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn paraphrase(&self, text: &str, k: usize) -> std::result::Result<Vec<String>, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(ParaphraseBody { text, k })
            .map_err(|e| format!("{}: {e}", self.url))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(format!("{}: HTTP {status}", self.url));
        }
        let parsed: ParaphraseResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("{}: malformed response: {e}", self.url))?;
        Ok(parsed.paraphrases)
    }
}

/// One recorded exchange: the pair that was sent and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub pair: ScoreRequest,
    pub result: WireResult,
}

/// Answers from a cassette file (JSON lines of [`CassetteEntry`]) instead of a
/// live scorer. A pair absent from the cassette, or recorded with different
/// text, comes back as a per-pair failure.
#[derive(Debug, Default)]
pub struct ReplayScorer {
    entries: HashMap<String, CassetteEntry>,
}

impl ReplayScorer {
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Result<Self> {
        let mut map = HashMap::new();
        for e in entries {
            let id = e.pair.id.clone();
            if e.result.id() != id {
                return Err(Error::Integrity(format!(
                    "cassette entry for `{id}` holds a result for `{}`",
                    e.result.id()
                )));
            }
            if map.insert(id.clone(), e).is_some() {
                return Err(Error::Integrity(format!("cassette records `{id}` twice")));
            }
        }
        Ok(ReplayScorer { entries: map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Scorer for ReplayScorer {
    fn score_batch(&self, batch: &[ScoreRequest]) -> std::result::Result<Vec<WireResult>, ScorerError> {
        Ok(batch
            .iter()
            .map(|req| match self.entries.get(&req.id) {
                None => WireResult::failed(req.id.clone(), "not in cassette"),
                Some(e) if e.pair != *req => {
                    WireResult::failed(req.id.clone(), "cassette was recorded for a different pair")
                }
                Some(e) => e.result.clone(),
            })
            .collect())
    }
}

/// Passes batches through to another scorer and keeps every exchange so it
/// can be written out as a cassette.
pub struct RecordingScorer<'a> {
    inner: &'a dyn Scorer,
    log: Mutex<Vec<CassetteEntry>>,
}

impl<'a> RecordingScorer<'a> {
    pub fn new(inner: &'a dyn Scorer) -> Self {
        RecordingScorer {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Recorded entries sorted by pair id.
    pub fn entries(&self) -> Vec<CassetteEntry> {
        let mut entries = self.log.lock().expect("recording lock poisoned").clone();
        entries.sort_by(|a, b| a.pair.id.cmp(&b.pair.id));
        entries
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in self.entries() {
            let line = serde_json::to_string(&e).expect("cassette entries serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl Scorer for RecordingScorer<'_> {
    fn score_batch(&self, batch: &[ScoreRequest]) -> std::result::Result<Vec<WireResult>, ScorerError> {
        let results = self.inner.score_batch(batch)?;
        let by_id: HashMap<&str, &ScoreRequest> = batch.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut log = self.log.lock().expect("recording lock poisoned");
        for r in &results {
            if let Some(req) = by_id.get(r.id()) {
                log.push(CassetteEntry {
                    pair: (*req).clone(),
                    result: r.clone(),
                });
            }
        }
        Ok(results)
    }
}
