//! Deterministic linguistic analysis: turn parsing, speakers, sentences,
//! entity spans and auxiliary verbs.
//!
//! All offsets are byte offsets into the analysed `&str` and always fall on
//! `char` boundaries, so `&text[start..end]` is valid for every span.

mod auxiliaries;
mod entities;
pub mod lexicon;

pub use auxiliaries::{detect_auxiliaries, toggle_polarity, AuxSpan, NegationStyle, Polarity};
pub use entities::{tag_entities, EntityKind, EntitySpan, EntityTagger, RuleTagger};

use crate::corpus::{Dialogue, Turn};
use crate::error::{Error, Result};

/// A colon-prefixed line starts a new turn only if the prefix has at most
/// this many words; longer prefixes are treated as part of the utterance.
pub const MAX_SPEAKER_WORDS: usize = 4;

/// Splits flat dialogue text into turns. Each line of the form
/// `Speaker: utterance` opens a turn; lines without a plausible speaker
/// prefix continue the previous turn.
pub fn parse_turns(text: &str) -> Result<Vec<Turn>> {
    let mut turns: Vec<Turn> = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match speaker_prefix(line) {
            Some((speaker, rest)) => turns.push(Turn::new(speaker, rest)?),
            None => match turns.last_mut() {
                Some(prev) => {
                    let joined = format!("{} {}", prev.utterance, line);
                    prev.utterance = crate::corpus::collapse_whitespace(&joined);
                }
                None => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("dialogue line without a speaker: `{line}`"),
                    })
                }
            },
        }
    }
    Ok(turns)
}

fn speaker_prefix(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let speaker = line[..colon].trim();
    let words = speaker.split_whitespace().count();
    if speaker.is_empty() || words > MAX_SPEAKER_WORDS {
        return None;
    }
    Some((speaker, &line[colon + 1..]))
}

/// Distinct speaker names in order of first appearance.
pub fn extract_speakers(dialogue: &Dialogue) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for turn in &dialogue.turns {
        if !names.iter().any(|n| n == &turn.speaker) {
            names.push(turn.speaker.clone());
        }
    }
    names
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Word tokens: maximal alphanumeric runs, with apostrophes allowed between
/// alphanumerics ("don't", "Fiona's").
pub(crate) fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if is_apostrophe(c) && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        spans.push((start, end));
        i = j;
    }
    spans
}

fn is_abbreviation(text: &str, dot: usize) -> bool {
    let before = &text[..dot];
    let word_start = before
        .rfind(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .map_or(0, |p| p + before[p..].chars().next().map_or(1, char::len_utf8));
    let word = before[word_start..].to_lowercase();
    !word.is_empty() && lexicon::ABBREVIATIONS.contains(&word.as_str())
}

/// Byte ranges of sentences, trimmed of surrounding whitespace. Newlines are
/// hard boundaries; `.`, `!` and `?` end a sentence when followed by
/// whitespace or the end of text, except after known abbreviations.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let push = |s: usize, e: usize, spans: &mut Vec<(usize, usize)>| {
        let slice = &text[s..e];
        let lead = slice.len() - slice.trim_start().len();
        let trail = slice.len() - slice.trim_end().len();
        if s + lead < e - trail {
            spans.push((s + lead, e - trail));
        }
    };
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            push(start, pos, &mut spans);
            start = pos + 1;
            i += 1;
            continue;
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
                j += 1;
            }
            while j + 1 < chars.len() && matches!(chars[j + 1].1, '"' | '\'' | ')' | '\u{201d}') {
                j += 1;
            }
            let after = chars.get(j + 1).map(|&(_, c)| c);
            let at_break = after.is_none_or(char::is_whitespace);
            let single_dot = c == '.' && j == i;
            if at_break && !(single_dot && is_abbreviation(text, pos)) {
                let end = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);
                push(start, end, &mut spans);
                start = end;
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    push(start, text.len(), &mut spans);
    spans
}

/// Sentences with internal whitespace collapsed to single spaces.
pub fn split_sentences(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| crate::corpus::collapse_whitespace(&text[s..e]))
        .collect()
}

/// Byte offsets where a sentence's first word starts.
pub(crate) fn sentence_initial_offsets(text: &str) -> Vec<usize> {
    let words = word_spans(text);
    sentence_spans(text)
        .into_iter()
        .filter_map(|(s, e)| words.iter().find(|&&(ws, _)| ws >= s && ws < e).map(|w| w.0))
        .collect()
}

pub(crate) fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub(crate) fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub(crate) fn starts_uppercase(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

/// True when `text[start..end]` is not glued to neighbouring alphanumerics.
pub(crate) fn is_token_bounded(text: &str, start: usize, end: usize) -> bool {
    let before_ok = text[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
    let after_ok = text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before_ok && after_ok
}

/// All token-bounded occurrences of `needle` in `haystack`.
pub(crate) fn find_bounded(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    if needle.is_empty() {
        return Vec::new();
    }
    haystack
        .match_indices(needle)
        .map(|(s, m)| (s, s + m.len()))
        .filter(|&(s, e)| is_token_bounded(haystack, s, e))
        .collect()
}
