use serde::{Deserialize, Serialize};

use super::{capitalize_first, starts_uppercase, word_spans};

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "been", "will", "would", "can", "could", "shall",
    "should", "may", "might", "must", "do", "does", "did", "has", "have", "had",
];

/// Auxiliaries negated with an "n't" clitic. `will`, `can` and `shall`
/// contract irregularly and are handled by [`contract`].
const CONTRACTING: &[&str] = &[
    "do", "does", "did", "is", "are", "was", "were", "has", "have", "had", "would", "could",
    "should", "must", "will", "can",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// How the negated form of an auxiliary is (or would be) written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegationStyle {
    /// "don't", "won't", "can't"
    Contracted,
    /// "am not", "do not"
    Separate,
    /// "cannot"
    Fused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub polarity: Polarity,
    /// Lowercase bare auxiliary ("will" for "Won't").
    pub lemma: String,
    pub style: NegationStyle,
    /// Apostrophe used by the contracted form, so toggling preserves it.
    pub apostrophe: char,
}

fn normalize_apostrophes(s: &str) -> String {
    s.to_lowercase().replace('\u{2019}', "'")
}

fn negative_contraction(lower: &str) -> Option<(&'static str, NegationStyle)> {
    let style = NegationStyle::Contracted;
    Some(match lower {
        "won't" => ("will", style),
        "can't" => ("can", style),
        "shan't" => ("shall", style),
        "cannot" => ("can", NegationStyle::Fused),
        _ => {
            let stem = lower.strip_suffix("n't")?;
            let lemma = AUXILIARIES.iter().find(|a| **a == stem)?;
            (lemma, style)
        }
    })
}

fn default_style(lemma: &str) -> NegationStyle {
    if CONTRACTING.contains(&lemma) {
        NegationStyle::Contracted
    } else {
        NegationStyle::Separate
    }
}

/// Scans one sentence for auxiliary verbs. Only the first auxiliary of a
/// verb chain is reported ("will have to" yields "will"), and auxiliaries
/// right after "to" are infinitives and skipped. A following "not" or an
/// attached "n't" makes the span negative and is included in it.
pub fn detect_auxiliaries(sentence: &str) -> Vec<AuxSpan> {
    let words = word_spans(sentence);
    let mut spans = Vec::new();
    let mut prev_was_aux_or_to = false;
    let mut i = 0;
    while i < words.len() {
        let (s, e) = words[i];
        let token = &sentence[s..e];
        let lower = normalize_apostrophes(token);
        let apostrophe = if token.contains('\u{2019}') { '\u{2019}' } else { '\'' };

        if let Some((lemma, style)) = negative_contraction(&lower) {
            spans.push(AuxSpan {
                start: s,
                end: e,
                surface: token.to_string(),
                polarity: Polarity::Negative,
                lemma: lemma.to_string(),
                style,
                apostrophe,
            });
            prev_was_aux_or_to = true;
            i += 1;
            continue;
        }

        // a capitalized "Will" or "May" after the first word is a name
        let name_like = i > 0 && starts_uppercase(token) && token != "I";
        if AUXILIARIES.contains(&lower.as_str()) && !name_like {
            let next_not = words.get(i + 1).filter(|&&(ns, ne)| {
                sentence[ns..ne].eq_ignore_ascii_case("not")
                    && sentence[e..ns].chars().all(char::is_whitespace)
            });
            if let Some(&(_, ne)) = next_not {
                spans.push(AuxSpan {
                    start: s,
                    end: ne,
                    surface: sentence[s..ne].to_string(),
                    polarity: Polarity::Negative,
                    lemma: lower.clone(),
                    style: NegationStyle::Separate,
                    apostrophe,
                });
                prev_was_aux_or_to = true;
                i += 2;
                continue;
            }
            if !prev_was_aux_or_to {
                spans.push(AuxSpan {
                    start: s,
                    end: e,
                    surface: token.to_string(),
                    polarity: Polarity::Positive,
                    style: default_style(&lower),
                    lemma: lower,
                    apostrophe,
                });
            }
            prev_was_aux_or_to = true;
            i += 1;
            continue;
        }

        prev_was_aux_or_to = lower == "to";
        i += 1;
    }
    spans
}

fn match_case(template: &str, word: &str) -> String {
    if starts_uppercase(template) {
        capitalize_first(word)
    } else {
        word.to_string()
    }
}

fn contract(span: &AuxSpan) -> String {
    let a = span.apostrophe;
    match span.lemma.as_str() {
        "will" => match_case(&span.surface, &format!("won{a}t")),
        "can" => match_case(&span.surface, &format!("can{a}t")),
        "shall" => match_case(&span.surface, &format!("shan{a}t")),
        _ => format!("{}n{a}t", span.surface),
    }
}

/// Flips the polarity of `span` inside `sentence`. Returns the edited
/// sentence and the span as it now appears there; toggling that span again
/// restores the input byte for byte.
pub fn toggle_polarity(sentence: &str, span: &AuxSpan) -> (String, AuxSpan) {
    let replacement = match span.polarity {
        Polarity::Positive => match span.style {
            NegationStyle::Contracted => contract(span),
            NegationStyle::Separate => format!("{} not", span.surface),
            NegationStyle::Fused => format!("{}not", span.surface),
        },
        Polarity::Negative => match span.style {
            NegationStyle::Separate => {
                let first_len = span
                    .surface
                    .find(char::is_whitespace)
                    .unwrap_or(span.surface.len());
                span.surface[..first_len].to_string()
            }
            NegationStyle::Fused => span.surface[..3].to_string(),
            NegationStyle::Contracted => match span.lemma.as_str() {
                "will" | "can" | "shall" => match_case(&span.surface, &span.lemma),
                _ => {
                    // strip the three-char "n't" clitic, whose apostrophe may be multi-byte
                    let cut = span.surface.len() - 't'.len_utf8() - span.apostrophe.len_utf8() - 1;
                    span.surface[..cut].to_string()
                }
            },
        },
    };
    let mut out = String::with_capacity(sentence.len() + 4);
    out.push_str(&sentence[..span.start]);
    out.push_str(&replacement);
    out.push_str(&sentence[span.end..]);
    let toggled = AuxSpan {
        start: span.start,
        end: span.start + replacement.len(),
        surface: replacement,
        polarity: match span.polarity {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        },
        lemma: span.lemma.clone(),
        style: span.style,
        apostrophe: span.apostrophe,
    };
    (out, toggled)
}
