mod common;

use std::collections::HashMap;
use std::fs;
use std::thread;
use std::time::Duration;

use common::{MockServer, Reply};
use faceval::scoring::{
    generation_score, length_normalized, probe_requests, CassetteEntry, HttpParaphraser, HttpScorer,
    ReplayScorer, ScoreOptions, ScoreRequest, ScoredCorpus, ScoredProbeSet, ScoredSummary,
    TokenLogProbs, WireResult,
};
use faceval::transforms::{make_positives, ParaphraseProvider};
use faceval::{
    factuality_score, score_probe_corpus, Error, MockScorer, ProbeCorpus, Scorer, ScorerError, Summary,
    TransformKind,
};
use serde_json::json;

fn probes() -> ProbeCorpus {
    ProbeCorpus::load(&common::fixture("probes_samsum_10.json")).unwrap()
}

fn cassette(name: &str) -> Vec<CassetteEntry> {
    fs::read_to_string(common::fixture(name))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// A server that answers /score from a cassette, in reverse order.
fn cassette_server(entries: Vec<CassetteEntry>) -> MockServer {
    let table: HashMap<String, WireResult> =
        entries.into_iter().map(|e| (e.pair.id.clone(), e.result)).collect();
    MockServer::start(move |req| {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let mut results: Vec<WireResult> = body["pairs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| table[p["id"].as_str().unwrap()].clone())
            .collect();
        results.reverse();
        Reply::json(200, json!({ "results": results }))
    })
}

fn summary(gs: Option<f64>, kind: Option<TransformKind>) -> ScoredSummary {
    ScoredSummary {
        text: String::new(),
        kind,
        score: gs.map(|v| length_normalized(&[v], 0.0).unwrap()),
        error: gs.is_none().then(|| "failed".to_string()),
    }
}

#[test]
fn generation_score_hand_cases() {
    let tlp = TokenLogProbs::new(vec!["a".into(); 4], vec![-1.0; 4]).unwrap();
    assert_eq!(generation_score(&tlp, 1.0).unwrap().value, -1.0);
    assert_eq!(generation_score(&tlp, 0.0).unwrap().value, -4.0);
    let gs = length_normalized(&[-0.5, -1.5, -2.0, -4.0], 0.5).unwrap();
    assert_eq!(gs.value, -8.0 / 2.0);
    assert!(length_normalized(&[], 1.0).is_err());
    assert!(length_normalized(&[-1.0], -0.1).is_err());
    assert!(TokenLogProbs::new(vec!["a".into()], vec![0.5]).is_err());
    assert!(TokenLogProbs::new(vec!["a".into()], vec![]).is_err());
}

#[test]
fn factuality_hand_case() {
    let pos = |v| summary(Some(v), None);
    let neg = |v, k| summary(Some(v), Some(k));
    let scored = ScoredCorpus {
        alpha: 1.0,
        sets: vec![
            // 1 win of 2: the tie loses
            ScoredProbeSet {
                dialogue_id: "a".into(),
                positives: vec![pos(-1.0)],
                negatives: vec![neg(-2.0, TransformKind::Negation), neg(-1.0, TransformKind::PronounSwap)],
            },
            // 1 win of 2
            ScoredProbeSet {
                dialogue_id: "b".into(),
                positives: vec![pos(-1.0), pos(-3.0)],
                negatives: vec![neg(-2.0, TransformKind::SpeakerSwap)],
            },
            ScoredProbeSet {
                dialogue_id: "c".into(),
                positives: vec![pos(-1.0)],
                negatives: vec![summary(None, Some(TransformKind::Negation))],
            },
            ScoredProbeSet {
                dialogue_id: "d".into(),
                positives: vec![pos(-1.0)],
                negatives: vec![],
            },
        ],
    };
    let report = factuality_score(&scored).unwrap();
    assert_eq!(report.fs_overall, 0.5);
    assert_eq!(report.dialogues_used, 2);
    assert_eq!(report.dialogues_failed, 1);
    assert_eq!(report.dialogues_without_negatives, 1);
    assert_eq!(report.fs_per_kind[&TransformKind::Negation], 1.0);
    assert_eq!(report.fs_per_kind[&TransformKind::PronounSwap], 0.0);
    assert_eq!(report.fs_per_kind[&TransformKind::SpeakerSwap], 0.5);
    assert!(!report.fs_per_kind.contains_key(&TransformKind::DateSwap));
    assert_eq!(report.comparisons(), 4);
    assert_eq!(report.wins(), 2);
}

#[test]
fn replayed_cassette_matches_offline_recomputation() {
    let probes = probes();
    let entries = cassette("cassette_lexical.jsonl");
    let offline: HashMap<String, f64> = entries
        .iter()
        .map(|e| match &e.result {
            WireResult::Scored { id, logprobs, .. } => {
                (id.clone(), logprobs.iter().sum::<f64>() / logprobs.len() as f64)
            }
            WireResult::Failed { .. } => panic!("cassette holds a failure"),
        })
        .collect();
    let replay = ReplayScorer::from_entries(entries).unwrap();
    assert_eq!(replay.len(), probe_requests(&probes).len());
    let scored = score_probe_corpus(&probes, &replay, &ScoreOptions::default()).unwrap();
    assert_eq!(scored.failed_pairs(), 0);
    for set in &scored.sets {
        for (m, p) in set.positives.iter().enumerate() {
            let want = offline[&format!("{}::p{m}", set.dialogue_id)];
            assert!((p.gs().unwrap() - want).abs() < 1e-9);
        }
        for (n, q) in set.negatives.iter().enumerate() {
            let want = offline[&format!("{}::n{n}", set.dialogue_id)];
            assert!((q.gs().unwrap() - want).abs() < 1e-9);
        }
    }
    // the replay agrees with scoring the same mock live
    let live = score_probe_corpus(&probes, &MockScorer::Lexical, &ScoreOptions::default()).unwrap();
    assert_eq!(factuality_score(&live).unwrap(), factuality_score(&scored).unwrap());
}

#[test]
fn oracle_cassette_replays_to_a_perfect_score() {
    let replay = ReplayScorer::load(common::fixture("cassette_oracle.jsonl")).unwrap();
    let scored = score_probe_corpus(&probes(), &replay, &ScoreOptions::default()).unwrap();
    assert_eq!(factuality_score(&scored).unwrap().fs_overall, 1.0);
}

#[test]
fn replay_of_a_different_probe_file_drops_dialogues() {
    let replay = ReplayScorer::load(common::fixture("cassette_oracle.jsonl")).unwrap();
    let other = faceval::build_probe_corpus(&common::samsum10(), &faceval::ProbeConfig::default(), 99).unwrap();
    let scored = score_probe_corpus(&other, &replay, &ScoreOptions::default()).unwrap();
    let report = factuality_score(&scored);
    let changed = scored.sets.iter().filter(|s| s.has_failures()).count();
    assert!(changed > 0);
    if let Ok(r) = report {
        assert_eq!(r.dialogues_failed, changed);
    }
}

#[test]
fn http_scores_match_the_recorded_logprobs() {
    let probes = probes();
    let entries = cassette("cassette_lexical.jsonl");
    let server = cassette_server(entries.clone());
    let scorer = HttpScorer::new(&server.url);
    let options = ScoreOptions {
        batch_size: 7,
        max_in_flight: 1,
        ..ScoreOptions::default()
    };
    let live = score_probe_corpus(&probes, &scorer, &options).unwrap();
    let replayed =
        score_probe_corpus(&probes, &ReplayScorer::from_entries(entries).unwrap(), &options).unwrap();
    assert_eq!(live, replayed);
    let requests = server.requests.lock().unwrap();
    let pairs = probe_requests(&probes).len();
    assert_eq!(requests.len(), pairs.div_ceil(7));
    assert!(requests.iter().all(|r| r.method == "POST" && r.path == "/score"));
}

#[test]
fn concurrent_batches_give_the_same_result() {
    let probes = probes();
    let server = cassette_server(cassette("cassette_oracle.jsonl"));
    let scorer = HttpScorer::new(&server.url);
    let serial = ScoreOptions {
        batch_size: 5,
        max_in_flight: 1,
        ..ScoreOptions::default()
    };
    let parallel = ScoreOptions {
        max_in_flight: 4,
        ..serial
    };
    assert_eq!(
        score_probe_corpus(&probes, &scorer, &serial).unwrap(),
        score_probe_corpus(&probes, &scorer, &parallel).unwrap()
    );
}

#[test]
fn per_pair_errors_drop_only_their_dialogue() {
    let probes = probes();
    let victim = probes.probe_sets[0].dialogue_id.clone();
    let prefix = format!("{victim}::");
    let server = MockServer::start(move |req| {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let results: Vec<serde_json::Value> = body["pairs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| {
                let id = p["id"].as_str().unwrap();
                if id == format!("{prefix}n0") {
                    json!({"id": id, "error": "sequence too long"})
                } else {
                    let lp = if id.contains("::p") { -0.1 } else { -2.0 };
                    json!({"id": id, "tokens": ["x", "</s>"], "logprobs": [lp, lp]})
                }
            })
            .collect();
        Reply::json(200, json!({ "results": results }))
    });
    let scored = score_probe_corpus(&probes, &HttpScorer::new(&server.url), &ScoreOptions::default()).unwrap();
    assert_eq!(scored.failed_pairs(), 1);
    let report = factuality_score(&scored).unwrap();
    assert_eq!(report.dialogues_failed, 1);
    assert_eq!(report.dialogues_used, probes.probe_sets.len() - 1);
    assert_eq!(report.fs_overall, 1.0);
    assert!(report.per_dialogue.iter().all(|d| d.dialogue_id != victim));
}

#[test]
fn server_error_fails_the_batch_as_a_protocol_error() {
    let server = MockServer::start(|_| Reply::json(500, json!({"detail": "boom"})));
    let scorer = HttpScorer::new(&server.url);
    let req = ScoreRequest {
        id: "d::p0".into(),
        dialogue: "A: hi".into(),
        summary: "A says hi".into(),
    };
    assert!(matches!(scorer.score_batch(&[req]), Err(ScorerError::Protocol(_))));
    let scored = score_probe_corpus(&probes(), &scorer, &ScoreOptions::default()).unwrap();
    assert_eq!(scored.failed_pairs(), probe_requests(&probes()).len());
    assert!(matches!(factuality_score(&scored), Err(Error::Domain(_))));
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let server = MockServer::start(|_| Reply {
        status: 200,
        body: "{\"results\": [".into(),
    });
    let req = ScoreRequest {
        id: "d::p0".into(),
        dialogue: "A: hi".into(),
        summary: "s".into(),
    };
    assert!(matches!(
        HttpScorer::new(&server.url).score_batch(&[req]),
        Err(ScorerError::Protocol(_))
    ));
}

#[test]
fn unavailable_scorer_aborts_the_run() {
    let scorer = HttpScorer::new(&common::dead_url());
    match score_probe_corpus(&probes(), &scorer, &ScoreOptions::default()) {
        Err(e @ Error::Scorer(ScorerError::Unavailable(_))) => assert!(e.is_external()),
        other => panic!("{other:?}"),
    }
    let busy = MockServer::start(|_| Reply::json(503, json!({"detail": "loading"})));
    assert!(matches!(
        score_probe_corpus(&probes(), &HttpScorer::new(&busy.url), &ScoreOptions::default()),
        Err(Error::Scorer(ScorerError::Unavailable(_)))
    ));
}

#[test]
fn slow_scorer_times_out_as_a_protocol_error() {
    let server = MockServer::start(|_| {
        thread::sleep(Duration::from_millis(800));
        Reply::json(200, json!({"results": []}))
    });
    let scorer = HttpScorer::with_timeout(&server.url, Duration::from_millis(150));
    let req = ScoreRequest {
        id: "d::p0".into(),
        dialogue: "A: hi".into(),
        summary: "s".into(),
    };
    assert!(matches!(scorer.score_batch(&[req]), Err(ScorerError::Protocol(_))));
}

#[test]
fn paraphrase_client_and_degraded_path() {
    let server = MockServer::start(|req| {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let text = body["text"].as_str().unwrap().to_string();
        let k = body["k"].as_u64().unwrap() as usize;
        let out: Vec<String> = (0..k).map(|i| format!("{text} ({i})")).collect();
        Reply::json(200, json!({ "paraphrases": out }))
    });
    let client = HttpParaphraser::new(&server.url);
    assert_eq!(client.id(), format!("http:{}/paraphrase", server.url));
    assert_eq!(client.paraphrase("Amy bakes.", 2).unwrap(), vec!["Amy bakes. (0)", "Amy bakes. (1)"]);
    let reference = Summary::reference("Amy bakes.");
    assert_eq!(make_positives(&reference, &client, 2).len(), 3);

    let absent = MockServer::start(|_| Reply::json(501, json!({"detail": "no translation model"})));
    let client = HttpParaphraser::new(&absent.url);
    assert!(client.paraphrase("Amy bakes.", 2).is_err());
    assert_eq!(make_positives(&reference, &client, 2), vec![reference.clone()]);
    let dead = HttpParaphraser::new(&common::dead_url());
    assert_eq!(make_positives(&reference, &dead, 2), vec![reference]);
}

#[test]
fn mock_scorers_bound_the_score() {
    let probes = probes();
    let options = ScoreOptions::default();
    let fs = |s: &MockScorer| factuality_score(&score_probe_corpus(&probes, s, &options).unwrap()).unwrap().fs_overall;
    assert_eq!(fs(&MockScorer::Oracle), 1.0);
    assert_eq!(fs(&MockScorer::AntiOracle), 0.0);
    let zero_alpha = ScoreOptions { alpha: 0.0, ..options };
    let scored = score_probe_corpus(&probes, &MockScorer::Oracle, &zero_alpha).unwrap();
    assert_eq!(factuality_score(&scored).unwrap().fs_overall, 1.0);
}
