//! Closed word lists used by the rule-based analysers.

pub const PRONOUNS: &[&str] = &[
    "he", "she", "they", "him", "her", "them", "his", "hers", "their", "theirs", "i", "you", "we",
    "us", "me",
];

/// Grammatical slots a pronoun can fill. Swaps prefer a candidate sharing a
/// slot with the original so the result stays grammatical.
pub fn pronoun_slots(lower: &str) -> &'static [u8] {
    match lower {
        "he" | "she" | "they" | "i" | "we" => &[SUBJECT],
        "you" => &[SUBJECT, OBJECT],
        "him" | "them" | "me" | "us" => &[OBJECT],
        "her" => &[OBJECT, POSSESSIVE],
        "his" => &[POSSESSIVE, STANDALONE],
        "their" => &[POSSESSIVE],
        "hers" | "theirs" => &[STANDALONE],
        _ => &[],
    }
}

pub const SUBJECT: u8 = 0;
pub const OBJECT: u8 = 1;
pub const POSSESSIVE: u8 = 2;
pub const STANDALONE: u8 = 3;

/// Person/number class used for verb agreement: third person singular,
/// first person singular, everything else.
pub fn pronoun_agreement(lower: &str) -> u8 {
    match lower {
        "he" | "she" | "him" | "her" | "his" | "hers" => 0,
        "i" | "me" => 1,
        _ => 2,
    }
}

/// Words after which "her" or "his" is not a determiner.
const NON_NOUN_FOLLOWERS: &[&str] = &[
    "a", "about", "after", "again", "all", "an", "and", "as", "at", "back", "before", "but", "by",
    "down", "for", "from", "if", "in", "into", "is", "know", "now", "of", "off", "on", "or", "out",
    "over", "so", "that", "the", "then", "this", "to", "today", "tomorrow", "tonight", "too", "up",
    "was", "when", "with",
];

/// Slots of a pronoun occurrence, narrowing "her" (object or possessive) and
/// "his" (possessive or standalone) by the word that follows it.
pub fn pronoun_slots_in_context(lower: &str, following: &str) -> &'static [u8] {
    let next: String = following
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '\'')
        .collect::<String>()
        .to_lowercase();
    let determiner = !next.is_empty() && !NON_NOUN_FOLLOWERS.contains(&next.as_str());
    match (lower, determiner) {
        ("her", true) | ("his", true) => &[POSSESSIVE],
        ("her", false) => &[OBJECT],
        ("his", false) => &[STANDALONE],
        _ => pronoun_slots(lower),
    }
}

pub const WEEKDAYS: &[&str] = &[
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

pub const MONTHS: &[&str] = &[
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

pub const RELATIVE_DAYS: &[&str] = &["today", "tonight", "tomorrow", "yesterday"];

pub const HOLIDAYS: &[&str] = &["christmas", "easter", "halloween", "thanksgiving"];

pub const NUMBER_WORDS: &[&str] = &[
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

/// Words ending in "." that do not end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "approx", "tel",
    "ave", "dept", "a.m", "p.m",
];

/// Capitalized words that are not named entities when they appear mid-sentence.
pub const NON_ENTITY_CAPS: &[&str] = &[
    "ok", "okay", "oh", "hi", "hey", "hello", "bye", "yes", "no", "yeah", "lol", "omg", "thanks",
    "mr", "mrs", "ms", "dr", "mum", "mom", "dad", "god", "sir", "madam",
];

/// First names recognized as PERSON when title-cased. Names that collide
/// with common English words in title case (Will, May, June, April) are left out.
pub const FIRST_NAMES: &[&str] = &[
    "Adam", "Alan", "Alex", "Alice", "Amanda", "Amy", "Andrew", "Andy", "Angela", "Anna", "Anne",
    "Anthony", "Ashley", "Barbara", "Ben", "Betty", "Brian", "Carl", "Carol", "Caroline",
    "Catherine", "Charles", "Charlie", "Chloe", "Chris", "Christopher", "Claire", "Daniel",
    "David", "Diana", "Donna", "Dorothy", "Edward", "Eleanor", "Elizabeth", "Ella", "Emily",
    "Emma", "Eric", "Ethan", "Eva", "Fiona", "Frank", "Freddie", "Gary", "George", "Grace",
    "Greg", "Hannah", "Harry", "Helen", "Henry", "Isabella", "Jack", "Jacob", "James", "Jane",
    "Jason", "Jeff", "Jennifer", "Jerry", "Jessica", "Jim", "John", "Jonathan", "Joseph",
    "Joshua", "Julia", "Karen", "Kate", "Kevin", "Larry", "Laura", "Leo", "Liam", "Linda", "Lisa",
    "Lucas", "Lucy", "Luke", "Maria", "Mark", "Martha", "Mary", "Matt", "Matthew", "Megan",
    "Mia", "Michael", "Mike", "Nancy", "Nathan", "Nick", "Noah", "Oliver", "Olivia", "Oscar",
    "Patrick", "Paul", "Peter", "Rachel", "Rebecca", "Richard", "Robert", "Ruth", "Ryan",
    "Sam", "Sandra", "Sarah", "Scott", "Sophia", "Sophie", "Steve", "Susan", "Thomas", "Tim",
    "Tom", "Tony", "Victoria", "William", "Zoe",
];

pub fn is_first_name(token: &str) -> bool {
    FIRST_NAMES.binary_search(&token).is_ok()
}
