//! Rule-based corruptions of a target text against its source dialogue, and
//! paraphrase-based positives.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Summary, SummaryOrigin};
use crate::error::{Error, Result};
use crate::textproc::{
    capitalize_first, detect_auxiliaries, extract_speakers, find_bounded, lexicon,
    lowercase_first, sentence_initial_offsets, sentence_spans, tag_entities, toggle_polarity,
    EntityKind, EntitySpan, EntityTagger,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "SS")]
    SpeakerSwap,
    #[serde(rename = "ES")]
    EntitySwap,
    #[serde(rename = "PS")]
    PronounSwap,
    #[serde(rename = "DS")]
    DateSwap,
    #[serde(rename = "NS")]
    NumberSwap,
    #[serde(rename = "NG")]
    Negation,
    #[serde(rename = "BT")]
    BackTranslation,
}

impl TransformKind {
    /// The six corruptions, in generation order.
    pub const NEGATIVE: [TransformKind; 6] = [
        TransformKind::SpeakerSwap,
        TransformKind::EntitySwap,
        TransformKind::PronounSwap,
        TransformKind::DateSwap,
        TransformKind::NumberSwap,
        TransformKind::Negation,
    ];

    /// Column order of the per-kind report tables.
    pub const REPORT_ORDER: [TransformKind; 6] = [
        TransformKind::Negation,
        TransformKind::PronounSwap,
        TransformKind::SpeakerSwap,
        TransformKind::EntitySwap,
        TransformKind::DateSwap,
        TransformKind::NumberSwap,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TransformKind::SpeakerSwap => "SS",
            TransformKind::EntitySwap => "ES",
            TransformKind::PronounSwap => "PS",
            TransformKind::DateSwap => "DS",
            TransformKind::NumberSwap => "NS",
            TransformKind::Negation => "NG",
            TransformKind::BackTranslation => "BT",
        }
    }

    pub fn is_negative(self) -> bool {
        self != TransformKind::BackTranslation
    }

    /// Entity kinds a swap of this kind may edit.
    fn entity_kinds(self) -> &'static [EntityKind] {
        match self {
            TransformKind::EntitySwap => &[EntityKind::EntityOther, EntityKind::Person],
            TransformKind::PronounSwap => &[EntityKind::Pronoun],
            TransformKind::DateSwap => &[EntityKind::Date],
            TransformKind::NumberSwap => &[EntityKind::Number],
            _ => &[],
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [TransformKind::BackTranslation]
            .into_iter()
            .chain(TransformKind::NEGATIVE)
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown transform kind `{s}`")))
    }
}

/// A single span edit of a parent text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: TransformKind,
    pub start: usize,
    pub end: usize,
    pub replacement: String,
    pub parent_text: String,
    pub result_text: String,
}

impl Perturbation {
    fn new(kind: TransformKind, parent: &str, start: usize, end: usize, replacement: String) -> Self {
        let mut result = String::with_capacity(parent.len() + replacement.len());
        result.push_str(&parent[..start]);
        result.push_str(&replacement);
        result.push_str(&parent[end..]);
        Perturbation {
            kind,
            start,
            end,
            replacement,
            parent_text: parent.to_string(),
            result_text: result,
        }
    }

    /// The edited text that was replaced.
    pub fn original(&self) -> &str {
        &self.parent_text[self.start..self.end]
    }

    /// Undoes the edit on `result_text`.
    pub fn revert(&self) -> String {
        let end = self.start + self.replacement.len();
        format!(
            "{}{}{}",
            &self.result_text[..self.start],
            self.original(),
            &self.result_text[end..]
        )
    }
}

/// Where pronoun swaps draw their replacements from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PronounPool {
    /// Dialogue pronouns, falling back to the closed lexicon when the dialogue
    /// offers no usable alternative.
    #[default]
    DialogueFirst,
    DialogueOnly,
    Lexicon,
}

/// Swaps each speaker-name mention in `summary` for another speaker of the
/// dialogue, one perturbation per mention.
pub fn speaker_swap<R: Rng>(summary: &str, dialogue: &Dialogue, rng: &mut R) -> Vec<Perturbation> {
    let speakers = extract_speakers(dialogue);
    if speakers.len() < 2 {
        return Vec::new();
    }
    let mut by_length: Vec<&String> = speakers.iter().collect();
    by_length.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let mut mentions: Vec<(usize, usize, &str)> = Vec::new();
    for name in by_length {
        for (s, e) in find_bounded(summary, name) {
            if !mentions.iter().any(|&(ms, me, _)| s < me && ms < e) {
                mentions.push((s, e, name));
            }
        }
    }
    mentions.sort_by_key(|m| m.0);

    mentions
        .into_iter()
        .map(|(s, e, name)| {
            let others: Vec<&String> = speakers.iter().filter(|n| *n != name).collect();
            let pick = others[rng.gen_range(0..others.len())];
            Perturbation::new(TransformKind::SpeakerSwap, summary, s, e, pick.clone())
        })
        .collect()
}

fn swap_class(span: &EntitySpan, speakers: &[String]) -> Option<TransformKind> {
    match span.kind {
        EntityKind::Person if speakers.contains(&span.surface) => None,
        EntityKind::Person | EntityKind::EntityOther => Some(TransformKind::EntitySwap),
        EntityKind::Pronoun => Some(TransformKind::PronounSwap),
        EntityKind::Date => Some(TransformKind::DateSwap),
        EntityKind::Number => Some(TransformKind::NumberSwap),
    }
}

/// Entity spans of every utterance in the dialogue, in dialogue order.
pub fn dialogue_entities(dialogue: &Dialogue, tagger: &dyn EntityTagger) -> Result<Vec<EntitySpan>> {
    let mut all = Vec::new();
    for turn in &dialogue.turns {
        all.extend(tag_entities(&turn.utterance, tagger)?);
    }
    Ok(all)
}

/// How well `candidate` fits where `original` stood: 0 is a same-person
/// fit, 1 a fit in grammatical slot only, None ungrammatical. A subject
/// must keep its verb agreement, so only same-person subjects fit.
fn pronoun_fit(original: &str, slots: &[u8], candidate: &str) -> Option<u8> {
    let cand_slots = lexicon::pronoun_slots(candidate);
    let shared: Vec<u8> = slots.iter().copied().filter(|s| cand_slots.contains(s)).collect();
    if shared.is_empty() {
        return None;
    }
    let same_person = lexicon::pronoun_agreement(original) == lexicon::pronoun_agreement(candidate);
    if same_person {
        Some(0)
    } else if shared.iter().all(|&s| s == lexicon::SUBJECT) {
        None
    } else {
        Some(1)
    }
}

/// Keeps the best-fitting tier of pronoun candidates.
fn best_pronouns(original: &str, slots: &[u8], candidates: Vec<String>) -> Vec<String> {
    let scored: Vec<(u8, String)> = candidates
        .into_iter()
        .filter_map(|c| pronoun_fit(original, slots, &c.to_lowercase()).map(|f| (f, c)))
        .collect();
    let Some(best) = scored.iter().map(|(f, _)| *f).min() else {
        return Vec::new();
    };
    scored.into_iter().filter(|(f, _)| *f == best).map(|(_, c)| c).collect()
}

/// Words that are written lowercase unless they start a sentence.
fn is_common_lowercase_word(word: &str) -> bool {
    let w = word.to_lowercase();
    (w != "i" && lexicon::PRONOUNS.contains(&w.as_str()))
        || lexicon::RELATIVE_DAYS.contains(&w.as_str())
        || lexicon::NUMBER_WORDS.contains(&w.as_str())
        || matches!(w.as_str(), "next" | "last" | "this" | "coming")
}

fn fit_case(candidate: &str, sentence_initial: bool) -> String {
    if sentence_initial {
        return capitalize_first(candidate);
    }
    let first_word = candidate.split_whitespace().next().unwrap_or(candidate);
    if is_common_lowercase_word(first_word) {
        lowercase_first(candidate)
    } else {
        candidate.to_string()
    }
}

/// Swaps entity spans of the given kind's class for same-class surfaces
/// taken from the dialogue, one perturbation per summary span that has an
/// alternative.
pub fn typed_entity_swap<R: Rng>(
    summary: &str,
    dialogue: &Dialogue,
    kind: TransformKind,
    tagger: &dyn EntityTagger,
    pool: PronounPool,
    rng: &mut R,
) -> Result<Vec<Perturbation>> {
    if kind.entity_kinds().is_empty() {
        return Err(Error::Domain(format!("{kind} is not an entity swap")));
    }
    let speakers = extract_speakers(dialogue);
    let targets: Vec<EntitySpan> = tag_entities(summary, tagger)?
        .into_iter()
        .filter(|s| swap_class(s, &speakers) == Some(kind))
        .collect();
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let source: Vec<EntitySpan> = dialogue_entities(dialogue, tagger)?
        .into_iter()
        .filter(|s| swap_class(s, &speakers) == Some(kind))
        .collect();
    let initials = sentence_initial_offsets(summary);

    let mut out = Vec::new();
    for target in targets {
        let original_lower = target.surface.to_lowercase();
        let mut seen: Vec<String> = Vec::new();
        let mut candidates: Vec<String> = Vec::new();
        if !(kind == TransformKind::PronounSwap && pool == PronounPool::Lexicon) {
            for span in source.iter().filter(|s| s.kind == target.kind) {
                let lower = span.surface.to_lowercase();
                if lower != original_lower && !seen.contains(&lower) {
                    seen.push(lower);
                    candidates.push(span.surface.clone());
                }
            }
        }
        if kind == TransformKind::PronounSwap {
            let slots = lexicon::pronoun_slots_in_context(&original_lower, &summary[target.end..]);
            candidates = best_pronouns(&original_lower, slots, candidates);
            if candidates.is_empty() && pool != PronounPool::DialogueOnly {
                let lexicon_pool = lexicon::PRONOUNS
                    .iter()
                    .filter(|p| **p != original_lower)
                    .map(|p| if *p == "i" { "I".to_string() } else { p.to_string() })
                    .collect();
                candidates = best_pronouns(&original_lower, slots, lexicon_pool);
            }
        }
        let Some(pick) = candidates.choose(rng) else {
            continue;
        };
        let replacement = fit_case(pick, initials.contains(&target.start));
        out.push(Perturbation::new(kind, summary, target.start, target.end, replacement));
    }
    Ok(out)
}

/// Flips the polarity of every auxiliary site, one perturbation per site.
pub fn negate(summary: &str) -> Vec<Perturbation> {
    let mut out = Vec::new();
    for (s, e) in sentence_spans(summary) {
        let sentence = &summary[s..e];
        for aux in detect_auxiliaries(sentence) {
            let (_, toggled) = toggle_polarity(sentence, &aux);
            out.push(Perturbation::new(
                TransformKind::Negation,
                summary,
                s + aux.start,
                s + aux.end,
                toggled.surface,
            ));
        }
    }
    out
}

/// Runs one corruption kind against `target`, with `dialogue` as the source.
pub fn apply_kind<R: Rng>(
    kind: TransformKind,
    target: &str,
    dialogue: &Dialogue,
    tagger: &dyn EntityTagger,
    pool: PronounPool,
    rng: &mut R,
) -> Result<Vec<Perturbation>> {
    match kind {
        TransformKind::SpeakerSwap => Ok(speaker_swap(target, dialogue, rng)),
        TransformKind::Negation => Ok(negate(target)),
        TransformKind::BackTranslation => {
            Err(Error::Domain("back-translation produces positives only".into()))
        }
        swap => typed_entity_swap(target, dialogue, swap, tagger, pool, rng),
    }
}

/// Source of paraphrased positives.
pub trait ParaphraseProvider: Send + Sync {
    /// Identifier recorded in probe-file headers.
    fn id(&self) -> String;
    fn paraphrase(&self, text: &str, k: usize) -> std::result::Result<Vec<String>, String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullProvider;

impl ParaphraseProvider for NullProvider {
    fn id(&self) -> String {
        "none".into()
    }

    fn paraphrase(&self, _: &str, _: usize) -> std::result::Result<Vec<String>, String> {
        Ok(Vec::new())
    }
}

/// Paraphrases looked up from a JSON-lines file of
/// `{"text": str, "paraphrases": [str]}` records.
#[derive(Debug, Clone, Default)]
pub struct StaticParaphrases {
    id: String,
    table: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct ParaphraseRecord {
    text: String,
    paraphrases: Vec<String>,
}

impl StaticParaphrases {
    pub fn new(id: impl Into<String>, table: HashMap<String, Vec<String>>) -> Self {
        StaticParaphrases {
            id: id.into(),
            table,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ParaphraseRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            table.insert(rec.text, rec.paraphrases);
        }
        Ok(StaticParaphrases::new(format!("file:{}", path.display()), table))
    }
}

impl ParaphraseProvider for StaticParaphrases {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn paraphrase(&self, text: &str, k: usize) -> std::result::Result<Vec<String>, String> {
        Ok(self
            .table
            .get(text)
            .map(|p| p.iter().take(k).cloned().collect())
            .unwrap_or_default())
    }
}

/// The reference followed by up to `max_paraphrases` distinct paraphrases.
/// Provider failures degrade to the reference alone.
pub fn make_positives(
    reference: &Summary,
    provider: &dyn ParaphraseProvider,
    max_paraphrases: usize,
) -> Vec<Summary> {
    let mut out = vec![reference.clone()];
    if max_paraphrases == 0 {
        return out;
    }
    let paraphrases = match provider.paraphrase(&reference.text, max_paraphrases) {
        Ok(p) => p,
        Err(msg) => {
            log::warn!("paraphrase provider {} failed: {msg}", provider.id());
            return out;
        }
    };
    for p in paraphrases {
        if out.len() > max_paraphrases {
            break;
        }
        if p.trim().is_empty() || out.iter().any(|s| s.text == p) {
            continue;
        }
        out.push(Summary {
            text: p,
            origin: SummaryOrigin::Paraphrase,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::RuleTagger;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIONA: &str = "Fiona: What should I prepare 4 my dad's birthday?\n\
        Jonathan: How old is he?\n\
        Fiona: Turning 50.\n\
        Jonathan: Wow, a round birthday, it must be sth big.\n\
        Fiona: I know, but I don't have any idea.\n\
        Jonathan: What does he like?\n\
        Fiona: He watches a lot of military movies.\n\
        Jonathan: Well, a movie ticket is probably not what you thought of.\n\
        Fiona: No, not even close.\n\
        Jonathan: U said he likes military... maybe paintball?\n\
        Fiona: I don't know how my mum will react but I like it :D";

    const REFERENCE: &str = "Fiona doesn't know what she should give to her dad as a birthday gift. \
        He likes military. Jonathan suggests a paintball match.";

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn dialogue() -> Dialogue {
        Dialogue::from_text("table2", FIONA).unwrap()
    }

    #[test]
    fn speaker_swap_example() {
        let out = speaker_swap(REFERENCE, &dialogue(), &mut rng());
        assert_eq!(out.len(), 2);
        assert!(out[0]
            .result_text
            .starts_with("Jonathan doesn't know what she should give"));
        assert!(out[1].result_text.ends_with("Fiona suggests a paintball match."));
    }

    #[test]
    fn speaker_swap_needs_two_speakers() {
        let solo = Dialogue::from_text("s", "Fiona: hello there").unwrap();
        assert!(speaker_swap("Fiona says hello.", &solo, &mut rng()).is_empty());
    }

    #[test]
    fn pronoun_fit_keeps_agreement() {
        let subj = lexicon::pronoun_slots("she");
        assert_eq!(pronoun_fit("she", subj, "he"), Some(0));
        assert_eq!(pronoun_fit("she", subj, "they"), None);
        assert_eq!(pronoun_fit("she", subj, "him"), None);
        let obj = lexicon::pronoun_slots("them");
        assert_eq!(pronoun_fit("them", obj, "us"), Some(0));
        assert_eq!(pronoun_fit("them", obj, "him"), Some(1));
        assert_eq!(
            best_pronouns("she", subj, vec!["I".into(), "he".into(), "you".into()]),
            vec!["he".to_string()]
        );
    }

    #[test]
    fn pronoun_swap_example() {
        let tagger = RuleTagger::with_speakers(extract_speakers(&dialogue()));
        let out = typed_entity_swap(
            REFERENCE,
            &dialogue(),
            TransformKind::PronounSwap,
            &tagger,
            PronounPool::DialogueFirst,
            &mut rng(),
        )
        .unwrap();
        let she = out.iter().find(|p| p.original() == "she").unwrap();
        assert_eq!(she.replacement, "he");
        assert!(she.result_text.starts_with("Fiona doesn't know what he should give"));
    }

    #[test]
    fn date_swap_without_dates_is_empty() {
        let tagger = RuleTagger::new();
        let out = typed_entity_swap(
            REFERENCE,
            &dialogue(),
            TransformKind::DateSwap,
            &tagger,
            PronounPool::default(),
            &mut rng(),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn negation_examples() {
        assert!(negate("He likes military.").is_empty());
        let out = negate("Freddie will have to visit her.");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].result_text, "Freddie won't have to visit her.");
        let out = negate("I don't have any idea.");
        assert_eq!(out[0].result_text, "I do have any idea.");
    }

    #[test]
    fn perturbations_revert_exactly() {
        let d = dialogue();
        let tagger = RuleTagger::with_speakers(extract_speakers(&d));
        for kind in TransformKind::NEGATIVE {
            for p in apply_kind(kind, REFERENCE, &d, &tagger, PronounPool::default(), &mut rng()).unwrap() {
                assert_ne!(p.result_text, p.parent_text);
                assert_eq!(p.revert(), p.parent_text);
                assert_eq!(p.kind, kind);
            }
        }
    }

    struct Echo(Vec<String>);
    impl ParaphraseProvider for Echo {
        fn id(&self) -> String {
            "echo".into()
        }
        fn paraphrase(&self, _: &str, _: usize) -> std::result::Result<Vec<String>, String> {
            Ok(self.0.clone())
        }
    }

    struct Failing;
    impl ParaphraseProvider for Failing {
        fn id(&self) -> String {
            "failing".into()
        }
        fn paraphrase(&self, _: &str, _: usize) -> std::result::Result<Vec<String>, String> {
            Err("503".into())
        }
    }

    #[test]
    fn positives() {
        let reference = Summary::reference("Amy bakes.");
        assert_eq!(make_positives(&reference, &Echo(vec!["Amy bakes.".into()]), 3).len(), 1);
        let three = Echo(vec!["Amy is baking.".into(), "Amy bakes a cake.".into(), "x".into()]);
        let out = make_positives(&reference, &three, 2);
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].origin, SummaryOrigin::Paraphrase);
        assert_eq!(make_positives(&reference, &NullProvider, 2).len(), 1);
        assert_eq!(make_positives(&reference, &Failing, 2), vec![reference.clone()]);
        let dupes = Echo(vec!["y".into(), "y".into(), "".into()]);
        assert_eq!(make_positives(&reference, &dupes, 5).len(), 2);
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in TransformKind::NEGATIVE {
            assert_eq!(k.code().parse::<TransformKind>().unwrap(), k);
            assert!(k.is_negative());
        }
        assert!(!TransformKind::BackTranslation.is_negative());
        assert_eq!(serde_json::to_string(&TransformKind::Negation).unwrap(), "\"NG\"");
    }
}
