mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{MockServer, Reply};
use faceval::cli::manifest_path;
use faceval::{load_corpus, ProbeCorpus, Split, TransformKind};
use serde_json::{json, Value};

fn faceval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faceval"))
        .args(args)
        .env_remove("FACEVAL_SCORER_URL")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_probes_prints_counts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture("samsum_10.jsonl");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = faceval(&["build-probes", "--corpus", p(&corpus), "--out", p(&a), "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# Neg Samples"), "{text}");
    assert!(text.contains("10 dialogues"), "{text}");
    let out = faceval(&["--jobs", "1", "build-probes", "--corpus", p(&corpus), "--out", p(&b), "--seed", "1"]);
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let probes = ProbeCorpus::load(&a).unwrap();
    assert_eq!(probes.run.as_ref().unwrap()["command"], "build-probes");
    // the committed fixture was built with this command and seed
    let committed = ProbeCorpus::load(&common::fixture("probes_samsum_10.json")).unwrap();
    assert_eq!(probes.probe_sets, committed.probe_sets);
}

#[test]
fn cap_and_kind_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.json");
    let corpus = common::fixture("generated_120.jsonl");
    let out = faceval(&[
        "build-probes", "--corpus", p(&corpus), "--out", p(&out_path), "--cap", "1", "--kinds", "NG,SS",
    ]);
    assert!(out.status.success());
    let probes = ProbeCorpus::load(&out_path).unwrap();
    for set in &probes.probe_sets {
        assert!(set.count(TransformKind::Negation) <= 1);
        assert!(set.count(TransformKind::SpeakerSwap) <= 1);
        assert_eq!(set.count(TransformKind::PronounSwap), 0);
    }
    let bad = faceval(&["build-probes", "--corpus", p(&corpus), "--out", p(&out_path), "--kinds", "BT"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(error_json(&bad)["error"], "domain");
}

#[test]
fn score_with_mocks_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let probes = common::fixture("probes_samsum_10.json");
    let out_path = dir.path().join("s.json");
    let scores = dir.path().join("scores.jsonl");
    let out = faceval(&[
        "score", "--probes", p(&probes), "--mock", "oracle", "--out", p(&out_path), "--scores-out", p(&scores),
        "--model-id", "m1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("100.00"));
    let doc = read_json(&out_path);
    assert_eq!(doc["report"]["fs_overall"], 1.0);
    assert_eq!(doc["run"]["args"]["mock"], "oracle");
    assert!(doc["run"]["args"].get("out").is_none());
    let first: Value = serde_json::from_str(fs::read_to_string(&scores).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first, json!({"model_id": "m1", "metric": "FS", "score": 1.0}));
    assert!(manifest_path(&scores).exists());

    let replay = faceval(&[
        "score", "--probes", p(&probes), "--replay", p(&common::fixture("cassette_oracle.jsonl")), "--out",
        p(&out_path),
    ]);
    assert!(replay.status.success());
    assert_eq!(read_json(&out_path)["report"]["fs_overall"], 1.0);

    let anti = faceval(&["score", "--probes", p(&probes), "--mock", "anti-oracle", "--alpha", "0", "--out", p(&out_path)]);
    assert!(anti.status.success());
    let doc = read_json(&out_path);
    assert_eq!(doc["report"]["fs_overall"], 0.0);
    assert_eq!(doc["scored"]["alpha"], 0.0);
}

#[test]
fn score_output_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let probes = common::fixture("probes_samsum_10.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = faceval(&["score", "--probes", p(&probes), "--mock", "noisy:0.6:3", "--out", p(path)]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn scorer_url_from_flag_and_environment() {
    let server = MockServer::start(|req| {
        let body: Value = serde_json::from_str(&req.body).unwrap();
        let results: Vec<Value> = body["pairs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|pair| {
                let id = pair["id"].as_str().unwrap();
                let lp = if id.contains("::p") { -0.5 } else { -1.5 };
                json!({"id": id, "tokens": ["a", "</s>"], "logprobs": [lp, lp]})
            })
            .collect();
        Reply::json(200, json!({ "results": results }))
    });
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.json");
    let probes = common::fixture("probes_samsum_10.json");
    let out = faceval(&["score", "--probes", p(&probes), "--scorer-url", &server.url, "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&out_path)["report"]["fs_overall"], 1.0);

    let out = Command::new(env!("CARGO_BIN_EXE_faceval"))
        .args(["score", "--probes", p(&probes), "--out", p(&out_path)])
        .env("FACEVAL_SCORER_URL", &server.url)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn unreachable_scorer_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.json");
    let out = faceval(&[
        "score", "--probes", p(&common::fixture("probes_samsum_10.json")), "--scorer-url", &common::dead_url(),
        "--out", p(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "scorer_unavailable");
    assert!(!out_path.exists());
}

#[test]
fn usage_and_data_errors_exit_1_with_json() {
    let out = faceval(&["score", "--probes"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.json");
    let missing = faceval(&["build-probes", "--corpus", "/nonexistent/c.jsonl", "--out", p(&out_path)]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(error_json(&missing)["error"], "io");

    let truncated = dir.path().join("t.json");
    let text = fs::read_to_string(common::fixture("probes_samsum_10.json")).unwrap();
    fs::write(&truncated, &text[..text.len() / 3]).unwrap();
    let out = faceval(&["score", "--probes", p(&truncated), "--mock", "oracle", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("byte offset"));

    let no_scorer = faceval(&["score", "--probes", p(&common::fixture("probes_samsum_10.json")), "--out", p(&out_path)]);
    assert_eq!(no_scorer.status.code(), Some(1));

    let bad_mock = faceval(&[
        "score", "--probes", p(&common::fixture("probes_samsum_10.json")), "--mock", "noisy:2:1", "--out",
        p(&out_path),
    ]);
    assert_eq!(bad_mock.status.code(), Some(1));
    assert_eq!(error_json(&bad_mock)["error"], "domain");
}

#[test]
fn corrupt_ldt_and_mdt() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture("generated_120.jsonl");
    let ldt = dir.path().join("ldt.jsonl");
    let out = faceval(&[
        "corrupt", "--corpus", p(&corpus), "--strategy", "ldt", "--knob", "0.25", "--seed", "3", "--out", p(&ldt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_corpus(&ldt, Split::Train).unwrap().len(), 30);
    let manifest = read_json(&manifest_path(&ldt));
    assert_eq!(manifest["output_dialogues"], 30);
    assert_eq!(manifest["run"]["args"]["strategy"], "ldt");

    let clean = dir.path().join("clean.jsonl");
    let out = faceval(&["corrupt", "--corpus", p(&corpus), "--strategy", "mdt", "--knob", "0", "--out", p(&clean)]);
    assert!(out.status.success());
    assert_eq!(fs::read(&clean).unwrap(), fs::read(&corpus).unwrap());

    let noisy = dir.path().join("noisy.jsonl");
    let out = faceval(&["corrupt", "--corpus", p(&corpus), "--strategy", "mdt", "--knob", "0.5", "--out", p(&noisy)]);
    assert!(out.status.success());
    let manifest = read_json(&manifest_path(&noisy));
    let changed = manifest["detail"]["corrupted"].as_array().unwrap().len();
    let skipped = manifest["detail"]["unchanged"].as_array().unwrap().len();
    assert_eq!(changed + skipped, 60);
    let before = load_corpus(&corpus, Split::Train).unwrap();
    let after = load_corpus(&noisy, Split::Train).unwrap();
    let differing = before.entries.iter().zip(&after.entries).filter(|(a, b)| a != b).count();
    assert_eq!(differing, changed);

    let bad = faceval(&["corrupt", "--corpus", p(&corpus), "--strategy", "ldt", "--knob", "0", "--out", p(&ldt)]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = faceval(&["corrupt", "--corpus", p(&corpus), "--strategy", "xyz", "--knob", "0.5", "--out", p(&ldt)]);
    assert_eq!(error_json(&bad)["error"], "usage");
}

#[test]
fn stats_for_corpus_and_annotations() {
    let out = faceval(&["stats", "--corpus", p(&common::fixture("samsum_10.jsonl"))]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("# Turns"));
    let dir = tempfile::tempdir().unwrap();
    let json_out = dir.path().join("a.json");
    let out = faceval(&["stats", "--annotations", p(&common::fixture("annotations_small.jsonl")), "--out", p(&json_out)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("human") && text.contains("25.00"), "{text}");
    assert_eq!(read_json(&json_out)["stats"]["models_pooled"]["summaries"], 6);

    let out = faceval(&["stats", "--annotations", p(&common::fixture("annotations_faulty.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let msg = error_json(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("SubjectError") && msg.contains("Typo"), "{msg}");
    assert_eq!(faceval(&["stats"]).status.code(), Some(1));
}

#[test]
fn baseline_then_meta() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture("samsum_10.jsonl");
    let refs = load_corpus(&corpus, Split::Test).unwrap();
    let mut scores = String::new();
    // model k keeps the first 2 + 3k words of each reference
    for k in 0..4 {
        let outputs = dir.path().join(format!("out{k}.jsonl"));
        let lines: String = refs
            .entries
            .iter()
            .map(|e| {
                let words: Vec<&str> = e.reference.text.split_whitespace().take(2 + 3 * k).collect();
                json!({"id": e.dialogue.id, "summary": words.join(" ")}).to_string() + "\n"
            })
            .collect();
        fs::write(&outputs, lines).unwrap();
        let metric_out = dir.path().join(format!("m{k}.jsonl"));
        let id = format!("m{k}");
        let out = faceval(&[
            "baseline", "--corpus", p(&corpus), "--outputs", p(&outputs), "--model-id", &id, "--out", p(&metric_out),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("ROUGE-L"));
        scores.push_str(&fs::read_to_string(&metric_out).unwrap());
        scores.push_str(&json!({"model_id": id, "metric": "Flat", "score": 0.3}).to_string());
        scores.push('\n');
    }
    let scores_path = dir.path().join("scores.jsonl");
    fs::write(&scores_path, scores).unwrap();
    let series = json!({
        "name": "ldt",
        "strategy": "ldt",
        "points": (0..4).map(|k| json!({"model_id": format!("m{k}"), "knob": 0.25 * (k + 1) as f64})).collect::<Vec<_>>(),
    });
    let series_path = dir.path().join("series.json");
    fs::write(&series_path, series.to_string()).unwrap();
    let report = dir.path().join("report.json");
    let out = faceval(&["meta", "--series", p(&series_path), "--scores", p(&scores_path), "--out", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("100.00") && text.contains('\u{2014}'), "{text}");
    let cells = read_json(&report)["report"]["cells"].as_array().unwrap().clone();
    let rouge1 = cells.iter().find(|c| c["metric"] == "ROUGE-1").unwrap();
    assert_eq!(rouge1["rho"], 1.0);

    let unknown = dir.path().join("unknown.jsonl");
    fs::write(&unknown, "{\"id\": \"nope\", \"summary\": \"x\"}\n").unwrap();
    let out = faceval(&[
        "baseline", "--corpus", p(&corpus), "--outputs", p(&unknown), "--out", p(&dir.path().join("u.jsonl")),
    ]);
    assert_eq!(error_json(&out)["error"], "integrity");
}

#[test]
fn meta_reports_missing_scores() {
    let dir = tempfile::tempdir().unwrap();
    let series_path = dir.path().join("series.json");
    fs::write(
        &series_path,
        json!({"name": "s", "strategy": "mdt", "points": [
            {"model_id": "a", "knob": 0.0}, {"model_id": "b", "knob": 0.5}, {"model_id": "c", "knob": 1.0}
        ]})
        .to_string(),
    )
    .unwrap();
    let scores_path = dir.path().join("scores.jsonl");
    fs::write(
        &scores_path,
        "{\"model_id\": \"a\", \"metric\": \"FS\", \"score\": 0.1}\n{\"model_id\": \"b\", \"metric\": \"FS\", \"score\": 0.2}\n",
    )
    .unwrap();
    let out = faceval(&["meta", "--series", p(&series_path), "--scores", p(&scores_path), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "missing_score");
}
