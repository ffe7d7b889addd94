//! Dialogue/summary corpora and released faithfulness annotations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc;
use crate::transforms::TransformKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub utterance: String,
}

impl Turn {
    /// Builds a turn, normalizing whitespace in both fields.
    pub fn new(speaker: &str, utterance: &str) -> Result<Self> {
        let speaker = speaker.trim();
        if speaker.is_empty() {
            return Err(Error::Integrity("empty speaker name".into()));
        }
        if speaker.contains(['\n', '\r', ':']) {
            return Err(Error::Integrity(format!(
                "speaker `{speaker}` contains a newline or colon"
            )));
        }
        Ok(Turn {
            speaker: collapse_whitespace(speaker),
            utterance: collapse_whitespace(utterance),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let id = id.into();
        if turns.is_empty() {
            return Err(Error::Integrity(format!("dialogue `{id}` has no turns")));
        }
        Ok(Dialogue { id, turns })
    }

    /// Parses `Speaker: utterance` lines with the colon rule.
    pub fn from_text(id: impl Into<String>, text: &str) -> Result<Self> {
        let turns = textproc::parse_turns(text)?;
        Dialogue::new(id, turns)
    }

    /// Flat rendering: `speaker: utterance` per turn, joined by `\n`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&turn.speaker);
            out.push_str(": ");
            out.push_str(&turn.utterance);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SummaryOrigin {
    Reference,
    Paraphrase,
    Perturbed {
        kind: TransformKind,
        parent_index: usize,
    },
    ModelOutput {
        model_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub text: String,
    pub origin: SummaryOrigin,
}

impl Summary {
    pub fn reference(text: impl Into<String>) -> Self {
        Summary {
            text: text.into(),
            origin: SummaryOrigin::Reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Domain(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub dialogue: Dialogue,
    pub reference: Summary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub entries: Vec<Entry>,
}

impl Corpus {
    pub fn new(split: Split, entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for entry in &entries {
            if !seen.insert(entry.dialogue.id.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate dialogue id `{}`",
                    entry.dialogue.id
                )));
            }
        }
        Ok(Corpus { split, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.dialogue.id == id)
    }

    /// Writes the corpus in the JSON-lines corpus format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.entries {
            let record = CorpusRecordOut {
                id: &entry.dialogue.id,
                dialogue: &entry.dialogue.turns,
                summary: &entry.reference.text,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct CorpusRecordOut<'a> {
    id: &'a str,
    dialogue: &'a [Turn],
    summary: &'a str,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DialogueField {
    Turns(Vec<RawTurn>),
    Text(String),
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: String,
    utterance: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecordIn {
    id: String,
    dialogue: DialogueField,
    summary: String,
}

/// Loads a JSON-lines corpus. The `dialogue` field may be a list of turns or
/// a flat `Speaker: utterance` string (the raw SAMSum layout); the latter is
/// split with the colon rule.
pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), split).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus<R: BufRead>(reader: R, split: Split) -> Result<Corpus> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecordIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let at_line = |e: Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let turns = match record.dialogue {
            DialogueField::Turns(raw) => raw
                .iter()
                .map(|t| Turn::new(&t.speaker, &t.utterance))
                .collect::<Result<Vec<_>>>()
                .map_err(at_line)?,
            DialogueField::Text(text) => textproc::parse_turns(&text).map_err(at_line)?,
        };
        let dialogue = Dialogue::new(record.id, turns).map_err(at_line)?;
        if record.summary.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("dialogue `{}` has an empty summary", dialogue.id),
            });
        }
        if !seen.insert(dialogue.id.clone()) {
            return Err(Error::Integrity(format!(
                "duplicate dialogue id `{}` at line {line_no}",
                dialogue.id
            )));
        }
        entries.push(Entry {
            dialogue,
            reference: Summary::reference(record.summary),
        });
    }
    Ok(Corpus { split, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub mean_speakers: f64,
    pub mean_turns: f64,
    /// Mean reference length in whitespace tokens.
    pub mean_summary_len: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::Domain("statistics of an empty corpus".into()));
    }
    let n = corpus.len() as f64;
    let speakers: usize = corpus
        .entries
        .iter()
        .map(|e| textproc::extract_speakers(&e.dialogue).len())
        .sum();
    let turns: usize = corpus.entries.iter().map(|e| e.dialogue.turns.len()).sum();
    let words: usize = corpus
        .entries
        .iter()
        .map(|e| e.reference.text.split_whitespace().count())
        .sum();
    Ok(CorpusStats {
        dialogues: corpus.len(),
        mean_speakers: speakers as f64 / n,
        mean_turns: turns as f64 / n,
        mean_summary_len: words as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    SubObjE,
    ProE,
    NegE,
    ParE,
    HalE,
    OthE,
}

impl ErrorType {
    pub const ALL: [ErrorType; 6] = [
        ErrorType::SubObjE,
        ErrorType::ProE,
        ErrorType::NegE,
        ErrorType::ParE,
        ErrorType::HalE,
        ErrorType::OthE,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorType::SubObjE => "SubObjE",
            ErrorType::ProE => "ProE",
            ErrorType::NegE => "NegE",
            ErrorType::ParE => "ParE",
            ErrorType::HalE => "HalE",
            ErrorType::OthE => "OthE",
        }
    }
}

impl FromStr for ErrorType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ErrorType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationRecord {
    pub dialogue_id: String,
    #[serde(rename = "source")]
    pub summary_source: String,
    pub errors: BTreeSet<ErrorType>,
    pub adjudicated: bool,
}

impl AnnotationRecord {
    pub fn is_faithful(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    dialogue_id: String,
    source: String,
    errors: Vec<String>,
    #[serde(default)]
    adjudicated: bool,
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotations(BufReader::new(file))
}

/// Reads annotation JSON lines. Unknown error-type labels are collected over
/// the whole input and reported together.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>> {
    let mut records = Vec::new();
    let mut unknown = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<annotations>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAnnotation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut errors = BTreeSet::new();
        for label in &raw.errors {
            match label.parse::<ErrorType>() {
                Ok(t) => {
                    errors.insert(t);
                }
                Err(label) => unknown.push((line_no, label)),
            }
        }
        records.push(AnnotationRecord {
            dialogue_id: raw.dialogue_id,
            summary_source: raw.source,
            errors,
            adjudicated: raw.adjudicated,
        });
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown));
    }
    Ok(records)
}

/// Checks that every annotation refers to a dialogue of `corpus`.
pub fn join_annotations<'a>(
    records: &'a [AnnotationRecord],
    corpus: &Corpus,
) -> Result<Vec<(&'a AnnotationRecord, &'a str)>> {
    let ids: HashSet<&str> = corpus.entries.iter().map(|e| e.dialogue.id.as_str()).collect();
    records
        .iter()
        .map(|r| {
            if ids.contains(r.dialogue_id.as_str()) {
                Ok((r, r.dialogue_id.as_str()))
            } else {
                Err(Error::Integrity(format!(
                    "annotation refers to unknown dialogue `{}`",
                    r.dialogue_id
                )))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationRow {
    pub source: String,
    pub summaries: usize,
    pub any_error: f64,
    pub per_type: BTreeMap<ErrorType, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationReport {
    /// One row per source, sorted by name.
    pub rows: Vec<AnnotationRow>,
    /// All non-human sources pooled; absent when there are none.
    pub models_pooled: Option<AnnotationRow>,
}

impl AnnotationReport {
    pub fn row(&self, source: &str) -> Option<&AnnotationRow> {
        self.rows.iter().find(|r| r.source == source)
    }
}

/// The source label of reference summaries in annotation files.
pub const HUMAN_SOURCE: &str = "human";

fn summarize_rows(source: String, records: &[&AnnotationRecord]) -> AnnotationRow {
    let n = records.len() as f64;
    let any = records.iter().filter(|r| !r.errors.is_empty()).count() as f64;
    let per_type = ErrorType::ALL
        .into_iter()
        .map(|t| {
            let hits = records.iter().filter(|r| r.errors.contains(&t)).count() as f64;
            (t, hits / n)
        })
        .collect();
    AnnotationRow {
        source,
        summaries: records.len(),
        any_error: any / n,
        per_type,
    }
}

pub fn annotation_report(records: &[AnnotationRecord]) -> Result<AnnotationReport> {
    if records.is_empty() {
        return Err(Error::Domain("annotation report over no records".into()));
    }
    let mut by_source: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_source.entry(&r.summary_source).or_default().push(r);
    }
    let rows = by_source
        .iter()
        .map(|(source, recs)| summarize_rows(source.to_string(), recs))
        .collect();
    let models: Vec<&AnnotationRecord> = records
        .iter()
        .filter(|r| !r.summary_source.eq_ignore_ascii_case(HUMAN_SOURCE))
        .collect();
    let models_pooled =
        (!models.is_empty()).then(|| summarize_rows("models (pooled)".into(), &models));
    Ok(AnnotationReport {
        rows,
        models_pooled,
    })
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_from(text: &str) -> Result<Corpus> {
        read_corpus(text.as_bytes(), Split::Test)
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let c = corpus_from("").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn flat_dialogue_string_is_split_on_colons() {
        let c = corpus_from(
            r#"{"id":"a","dialogue":"Amanda: I baked cookies.\r\nJerry: Sure!","summary":"Amanda baked."}"#,
        )
        .unwrap();
        let d = &c.entries[0].dialogue;
        assert_eq!(d.turns.len(), 2);
        assert_eq!(d.turns[1].speaker, "Jerry");
        assert_eq!(d.turns[1].utterance, "Sure!");
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "{\"id\":\"a\",\"dialogue\":[{\"speaker\":\"A\",\"utterance\":\"x\"}],\"summary\":\"s\"}\n{oops\n";
        match corpus_from(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_integrity_errors() {
        let line = r#"{"id":"a","dialogue":[{"speaker":"A","utterance":"x"}],"summary":"s"}"#;
        let err = corpus_from(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn speaker_with_colon_rejected() {
        assert!(Turn::new("A:B", "hi").is_err());
        assert!(Turn::new("  ", "hi").is_err());
    }

    #[test]
    fn stats_single_entry() {
        let c = corpus_from(
            r#"{"id":"a","dialogue":[{"speaker":"A","utterance":"1"},{"speaker":"B","utterance":"2"},{"speaker":"A","utterance":"3"},{"speaker":"B","utterance":"4"}],"summary":"A and B talk ."}"#,
        )
        .unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.dialogues, 1);
        assert_eq!(s.mean_speakers, 2.0);
        assert_eq!(s.mean_turns, 4.0);
        assert_eq!(s.mean_summary_len, 5.0);
    }

    #[test]
    fn stats_of_empty_corpus_is_domain_error() {
        let c = corpus_from("").unwrap();
        assert!(matches!(corpus_stats(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn annotation_labels() {
        let text = concat!(
            r#"{"dialogue_id":"1","source":"human","errors":[],"adjudicated":false}"#,
            "\n",
            r#"{"dialogue_id":"1","source":"BART","errors":["SubObjE","ParE","SubObjE"],"adjudicated":true}"#,
            "\n",
        );
        let recs = read_annotations(text.as_bytes()).unwrap();
        assert!(recs[0].is_faithful());
        assert_eq!(recs[1].errors.len(), 2);

        let bad = r#"{"dialogue_id":"1","source":"BART","errors":["Typo"],"adjudicated":true}"#;
        match read_annotations(bad.as_bytes()) {
            Err(Error::UnknownLabels(labels)) => {
                assert_eq!(labels, vec![(1, "Typo".to_string())]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_faithful_report_is_zero() {
        let recs: Vec<_> = (0..4)
            .map(|i| AnnotationRecord {
                dialogue_id: i.to_string(),
                summary_source: if i % 2 == 0 { "human" } else { "T5" }.into(),
                errors: BTreeSet::new(),
                adjudicated: false,
            })
            .collect();
        let report = annotation_report(&recs).unwrap();
        for row in report.rows.iter().chain(report.models_pooled.iter()) {
            assert_eq!(row.any_error, 0.0);
            assert!(row.per_type.values().all(|&v| v == 0.0));
        }
        assert!(annotation_report(&[]).is_err());
    }

    #[test]
    fn per_type_fractions_may_exceed_any_error_sum() {
        let recs = vec![AnnotationRecord {
            dialogue_id: "1".into(),
            summary_source: "BART".into(),
            errors: [ErrorType::SubObjE, ErrorType::ParE].into_iter().collect(),
            adjudicated: true,
        }];
        let report = annotation_report(&recs).unwrap();
        let row = report.row("BART").unwrap();
        assert_eq!(row.any_error, 1.0);
        assert_eq!(row.per_type.values().sum::<f64>(), 2.0);
    }
}
