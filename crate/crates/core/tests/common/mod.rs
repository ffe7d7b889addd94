#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use faceval::corpus::{load_corpus, Corpus, Entry, Split};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn samsum10() -> Corpus {
    load_corpus(&fixture("samsum_10.jsonl"), Split::Test).unwrap()
}

pub fn generated() -> Corpus {
    load_corpus(&fixture("generated_120.jsonl"), Split::Test).unwrap()
}

/// First `n` entries of the generated fixture.
pub fn generated_prefix(n: usize) -> Corpus {
    let c = generated();
    let entries: Vec<Entry> = c.entries.into_iter().take(n).collect();
    Corpus::new(Split::Test, entries).unwrap()
}

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json(status: u16, body: serde_json::Value) -> Self {
        Reply {
            status,
            body: body.to_string(),
        }
    }
}

/// A one-thread HTTP/1.1 server answering each request with `handler`.
/// Requests are kept for inspection.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        method,
        path,
        body: String::from_utf8(body).ok()?,
    })
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Request) -> Reply + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(req) = read_request(&mut stream) else { continue };
                let reply = handler(&req);
                let head = format!(
                    "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.status,
                    reply.body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.body.as_bytes());
                let _ = stream.flush();
                log.lock().unwrap().push(req);
            }
        });
        MockServer { url, requests }
    }
}

/// A URL nobody listens on.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}

use faceval::textproc::{extract_speakers, tag_entities, EntityKind, RuleTagger};
use faceval::transforms::{apply_kind, dialogue_entities, negate, PronounPool};
use faceval::TransformKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Violations found by [`check_transforms`], one message per offending edit.
#[derive(Debug, Default)]
pub struct Validity {
    pub negatives: usize,
    pub unchanged: Vec<String>,
    pub wrong_class: Vec<String>,
    pub not_in_dialogue: Vec<String>,
    pub not_reverted: Vec<String>,
    pub bad_fallback: Vec<String>,
}

impl Validity {
    pub fn violations(&self) -> usize {
        self.unchanged.len()
            + self.wrong_class.len()
            + self.not_in_dialogue.len()
            + self.not_reverted.len()
            + self.bad_fallback.len()
    }
}

fn edits(entry: &Entry, kind: TransformKind, pool: PronounPool, seed: u64) -> Vec<faceval::transforms::Perturbation> {
    let tagger = RuleTagger::with_speakers(extract_speakers(&entry.dialogue));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    apply_kind(kind, &entry.reference.text, &entry.dialogue, &tagger, pool, &mut rng).unwrap()
}

/// Runs every corruption over each reference summary and rechecks the
/// edits from scratch: the result differs from its parent, swaps keep the
/// entity class and draw from the dialogue (re-tagged independently), and
/// negating a negation restores the parent. Under the default pool a
/// pronoun from outside the dialogue is allowed only where the
/// dialogue-only pool finds nothing.
pub fn check_transforms(corpus: &Corpus, pool: PronounPool) -> Validity {
    let mut v = Validity::default();
    for (i, entry) in corpus.entries.iter().enumerate() {
        let id = &entry.dialogue.id;
        let speakers = extract_speakers(&entry.dialogue);
        let tagger = RuleTagger::with_speakers(speakers.clone());
        let summary_spans = tag_entities(&entry.reference.text, &tagger).unwrap();
        let source: Vec<(String, EntityKind)> = dialogue_entities(&entry.dialogue, &tagger)
            .unwrap()
            .into_iter()
            .map(|s| (s.surface.to_lowercase(), s.kind))
            .collect();
        for kind in TransformKind::NEGATIVE {
            for p in edits(entry, kind, pool, i as u64) {
                v.negatives += 1;
                let tag = format!("{id} {kind}: {:?} -> {:?}", p.original(), p.replacement);
                if p.result_text == p.parent_text {
                    v.unchanged.push(tag.clone());
                }
                if p.revert() != p.parent_text {
                    v.not_reverted.push(tag.clone());
                }
                match kind {
                    TransformKind::SpeakerSwap => {
                        if !speakers.contains(&p.replacement) || !speakers.iter().any(|s| s == p.original()) {
                            v.not_in_dialogue.push(tag.clone());
                        }
                    }
                    TransformKind::Negation => {
                        let back = negate(&p.result_text)
                            .into_iter()
                            .any(|q| q.start == p.start && q.result_text == p.parent_text);
                        if !back {
                            v.not_reverted.push(tag.clone());
                        }
                    }
                    _ => {
                        let Some(orig) = summary_spans.iter().find(|s| s.start == p.start && s.end == p.end) else {
                            v.wrong_class.push(format!("{tag} (edited span not an entity)"));
                            continue;
                        };
                        let retagged = tag_entities(&p.result_text, &tagger).unwrap();
                        let end = p.start + p.replacement.len();
                        let same_class = retagged
                            .iter()
                            .any(|s| s.start == p.start && s.end == end && s.kind == orig.kind);
                        if !same_class {
                            v.wrong_class.push(tag.clone());
                        }
                        let lower = p.replacement.to_lowercase();
                        let in_dialogue = source.iter().any(|(s, k)| *s == lower && *k == orig.kind);
                        if !in_dialogue {
                            let fallback_ok = kind == TransformKind::PronounSwap
                                && pool == PronounPool::DialogueFirst
                                && !edits(entry, kind, PronounPool::DialogueOnly, i as u64)
                                    .iter()
                                    .any(|q| q.start == p.start);
                            if fallback_ok {
                                continue;
                            }
                            if kind == TransformKind::PronounSwap && pool == PronounPool::DialogueFirst {
                                v.bad_fallback.push(tag.clone());
                            } else {
                                v.not_in_dialogue.push(tag.clone());
                            }
                        }
                    }
                }
            }
        }
    }
    v
}

/// Average ranks by counting, 1-based.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson correlation of average ranks.
pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = brute_ranks(x);
    let ry = brute_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}
