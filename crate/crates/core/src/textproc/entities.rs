use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::lexicon::{self, NON_ENTITY_CAPS, PRONOUNS};
use super::{find_bounded, sentence_initial_offsets, starts_uppercase, word_spans};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Person,
    Pronoun,
    Date,
    Number,
    EntityOther,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub kind: EntityKind,
}

impl EntitySpan {
    fn new(text: &str, start: usize, end: usize, kind: EntityKind) -> Self {
        EntitySpan {
            start,
            end,
            surface: text[start..end].to_string(),
            kind,
        }
    }
}

/// Anything that can label entity spans in a text. Implementations return
/// spans sorted by start offset and non-overlapping; [`tag_entities`]
/// verifies this for external taggers.
pub trait EntityTagger: Send + Sync {
    fn tag(&self, text: &str) -> std::result::Result<Vec<EntitySpan>, String>;
}

/// Runs `tagger` over `text` and checks the span contract.
pub fn tag_entities(text: &str, tagger: &dyn EntityTagger) -> Result<Vec<EntitySpan>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let spans = tagger.tag(text).map_err(Error::Tagging)?;
    let mut prev_end = 0;
    for span in &spans {
        let valid = span.start < span.end
            && span.end <= text.len()
            && span.start >= prev_end
            && text.is_char_boundary(span.start)
            && text.is_char_boundary(span.end)
            && text[span.start..span.end] == span.surface;
        if !valid {
            return Err(Error::Tagging(format!(
                "tagger returned an invalid span {}..{} `{}`",
                span.start, span.end, span.surface
            )));
        }
        prev_end = span.end;
    }
    Ok(spans)
}

const MONTHS_CAP: &str = "January|February|March|April|May|June|July|August|September|October|November|December";
const WEEKDAYS_PAT: &str = "[Mm]onday|[Tt]uesday|[Ww]ednesday|[Tt]hursday|[Ff]riday|[Ss]aturday|[Ss]unday";

static DATE_RE: LazyLock<Regex> = LazyLock::new(|| {
    let m = MONTHS_CAP;
    let w = WEEKDAYS_PAT;
    let pattern = [
        format!(r"\b(?:[Nn]ext|[Ll]ast|[Tt]his|[Cc]oming)\s+(?:week(?:end)?|month|year|{w})\b"),
        format!(r"\b\d{{1,2}}(?:st|nd|rd|th)?\s+(?:of\s+)?(?:{m})(?:\s+\d{{4}})?\b"),
        format!(r"\b(?:{m})\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{4}})?\b"),
        format!(r"\b(?:{m})\s+\d{{4}}\b"),
        r"\b\d{4}-\d{2}-\d{2}\b".to_string(),
        r"\b\d{1,2}/\d{1,2}(?:/\d{2,4})?\b".to_string(),
        r"\b\d{1,2}\.\d{1,2}\.\d{2,4}\b".to_string(),
        format!(r"\b(?:{w})s?\b"),
        // bare "May" is left to the modal-verb reading
        r"\b(?:January|February|March|April|June|July|August|September|October|November|December)\b"
            .to_string(),
        r"\b(?:[Tt]oday|[Tt]onight|[Tt]omorrow|[Yy]esterday)\b".to_string(),
        r"\b(?:[Cc]hristmas|[Ee]aster|[Hh]alloween|[Tt]hanksgiving)\b".to_string(),
    ]
    .join("|");
    Regex::new(&pattern).expect("date pattern compiles")
});

static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| {
    let words = lexicon::NUMBER_WORDS.join("|");
    Regex::new(&format!(r"(?i)\b(?:\d+(?:[.,]\d+)*|(?:{words}))\b")).expect("number pattern compiles")
});

/// Rule-based fallback tagger. PERSON comes from the dialogue's speaker
/// names (exact, token-bounded) and then from a first-name lexicon; the
/// remaining kinds come from closed lexicons and date/number patterns.
#[derive(Debug, Clone, Default)]
pub struct RuleTagger {
    speakers: Vec<String>,
}

impl RuleTagger {
    pub fn new() -> Self {
        RuleTagger::default()
    }

    pub fn with_speakers<I, S>(speakers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut speakers: Vec<String> = speakers
            .into_iter()
            .map(Into::into)
            .filter(|s: &String| !s.is_empty())
            .collect();
        // longest first so "Mary Jane" wins over "Mary"
        speakers.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        speakers.dedup();
        RuleTagger { speakers }
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn tag_text(&self, text: &str) -> Vec<EntitySpan> {
        let mut spans: Vec<EntitySpan> = Vec::new();
        let overlaps = |spans: &[EntitySpan], s: usize, e: usize| {
            spans.iter().any(|sp| s < sp.end && sp.start < e)
        };

        for m in DATE_RE.find_iter(text) {
            spans.push(EntitySpan::new(text, m.start(), m.end(), EntityKind::Date));
        }
        for m in NUMBER_RE.find_iter(text) {
            if !overlaps(&spans, m.start(), m.end()) {
                spans.push(EntitySpan::new(text, m.start(), m.end(), EntityKind::Number));
            }
        }
        for name in &self.speakers {
            for (s, e) in find_bounded(text, name) {
                if !overlaps(&spans, s, e) {
                    spans.push(EntitySpan::new(text, s, e, EntityKind::Person));
                }
            }
        }

        let initials = sentence_initial_offsets(text);
        let mut words: Vec<EntitySpan> = Vec::new();
        for (s, e) in word_spans(text) {
            let token = &text[s..e];
            let lower = token.to_lowercase();
            let all_caps = token.chars().count() > 1 && !token.chars().any(char::is_lowercase);
            if PRONOUNS.contains(&lower.as_str()) && !all_caps {
                if !overlaps(&spans, s, e) {
                    words.push(EntitySpan::new(text, s, e, EntityKind::Pronoun));
                }
                continue;
            }
            let stem_end = possessive_stem_end(token).map_or(e, |len| s + len);
            let stem = &text[s..stem_end];
            if overlaps(&spans, s, stem_end) || !starts_uppercase(stem) {
                continue;
            }
            if lexicon::is_first_name(stem) {
                words.push(EntitySpan::new(text, s, stem_end, EntityKind::Person));
                continue;
            }
            let has_lower = stem.chars().any(char::is_lowercase);
            let stem_lower = stem.to_lowercase();
            if has_lower
                && !initials.contains(&s)
                && !NON_ENTITY_CAPS.contains(&stem_lower.as_str())
            {
                match words.last_mut() {
                    // merge "New York" style runs
                    Some(prev)
                        if prev.kind == EntityKind::EntityOther && &text[prev.end..s] == " " =>
                    {
                        prev.end = stem_end;
                        prev.surface = text[prev.start..stem_end].to_string();
                    }
                    _ => words.push(EntitySpan::new(text, s, stem_end, EntityKind::EntityOther)),
                }
            }
        }
        spans.extend(words);
        spans.sort_by_key(|s| s.start);
        spans
    }
}

/// Byte length of `token` without a trailing possessive `'s`.
fn possessive_stem_end(token: &str) -> Option<usize> {
    ["'s", "\u{2019}s"]
        .iter()
        .find_map(|suffix| token.strip_suffix(suffix))
        .filter(|stem| !stem.is_empty())
        .map(str::len)
}

impl EntityTagger for RuleTagger {
    fn tag(&self, text: &str) -> std::result::Result<Vec<EntitySpan>, String> {
        Ok(self.tag_text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str, tagger: &RuleTagger) -> Vec<(String, EntityKind)> {
        tag_entities(text, tagger)
            .unwrap()
            .into_iter()
            .map(|s| (s.surface, s.kind))
            .collect()
    }

    #[test]
    fn closed_lexicon_pronoun() {
        let got = kinds("Tell mummy to ring me. Bye darling", &RuleTagger::new());
        assert_eq!(got, vec![("me".to_string(), EntityKind::Pronoun)]);
    }

    #[test]
    fn number_span() {
        let got = kinds("Turning 50.", &RuleTagger::new());
        assert_eq!(got, vec![("50".to_string(), EntityKind::Number)]);
    }

    #[test]
    fn speakers_take_priority_and_possessives_are_stripped() {
        let tagger = RuleTagger::with_speakers(["Fiona", "Jonathan"]);
        let got = kinds("Jonathan will meet Fiona's dad in Paris on Friday.", &tagger);
        assert_eq!(
            got,
            vec![
                ("Jonathan".to_string(), EntityKind::Person),
                ("Fiona".to_string(), EntityKind::Person),
                ("Paris".to_string(), EntityKind::EntityOther),
                ("Friday".to_string(), EntityKind::Date),
            ]
        );
    }

    #[test]
    fn may_is_a_date_only_with_a_day() {
        let t = RuleTagger::new();
        assert_eq!(kinds("May I come?", &t), vec![("I".to_string(), EntityKind::Pronoun)]);
        assert_eq!(kinds("on May 5th", &t), vec![("May 5th".to_string(), EntityKind::Date)]);
    }

    struct Broken;
    impl EntityTagger for Broken {
        fn tag(&self, _: &str) -> std::result::Result<Vec<EntitySpan>, String> {
            Err("model not loaded".into())
        }
    }

    struct Lying;
    impl EntityTagger for Lying {
        fn tag(&self, _: &str) -> std::result::Result<Vec<EntitySpan>, String> {
            Ok(vec![EntitySpan {
                start: 0,
                end: 2,
                surface: "xx".into(),
                kind: EntityKind::Person,
            }])
        }
    }

    #[test]
    fn external_tagger_failures_surface() {
        match tag_entities("hello", &Broken) {
            Err(Error::Tagging(msg)) => assert!(msg.contains("model not loaded")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(tag_entities("hello", &Lying), Err(Error::Tagging(_))));
    }
}
