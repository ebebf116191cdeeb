//! Stopword-ratio language identification.
//!
//! A text is classified as language `L` when at least 4% of its
//! whitespace-separated tokens are in `L`'s fixed 50-word stopword list and
//! letters outnumber other non-space characters. English must also score at
//! least as high as every other list, since short function words such as
//! "a" and "on" are shared with French, Spanish and Portuguese prose.

use std::collections::HashSet;
use std::sync::LazyLock;

pub const UNKNOWN: &str = "unknown";
pub const MIN_STOPWORD_RATIO: f64 = 0.04;

pub trait LanguageDetector: Send + Sync {
    /// Two-letter code, or [`UNKNOWN`].
    fn detect(&self, text: &str) -> String;
}

pub const ENGLISH_STOPWORDS: [&str; 50] = [
    "the", "of", "and", "to", "a", "in", "is", "it", "that", "for", "was", "on", "are", "with", "as", "i", "his",
    "they", "be", "at", "one", "have", "this", "from", "or", "had", "by", "but", "not", "what", "all", "were", "we",
    "when", "your", "can", "said", "there", "an", "which", "she", "he", "do", "their", "if", "will", "would", "been",
    "has", "who",
];

const FRENCH: [&str; 50] = [
    "le", "la", "les", "de", "des", "du", "un", "une", "et", "est", "en", "que", "qui", "dans", "pour", "pas", "au",
    "aux", "sur", "avec", "ce", "cette", "il", "elle", "ils", "sont", "par", "plus", "ne", "se", "son", "sa", "ses",
    "mais", "ou", "nous", "vous", "leur", "été", "être", "fait", "comme", "tout", "aussi", "très", "même", "où",
    "dont", "après", "selon",
];

const SPANISH: [&str; 50] = [
    "el", "la", "los", "las", "de", "del", "un", "una", "y", "es", "en", "que", "por", "para", "con", "se", "su",
    "sus", "al", "lo", "como", "más", "pero", "sin", "sobre", "este", "esta", "entre", "cuando", "muy", "también",
    "fue", "son", "ha", "han", "hay", "desde", "porque", "todo", "ya", "está", "están", "ser", "nos", "durante",
    "según", "tras", "donde", "año", "sido",
];

const GERMAN: [&str; 50] = [
    "der", "die", "das", "und", "den", "dem", "des", "ein", "eine", "einen", "ist", "nicht", "zu", "mit", "sich",
    "auf", "für", "von", "im", "auch", "es", "als", "wird", "werden", "aus", "er", "sie", "hat", "dass", "nach", "bei",
    "um", "noch", "wie", "über", "so", "zum", "zur", "war", "haben", "nur", "oder", "aber", "vor", "bis", "mehr",
    "durch", "wurde", "sind", "einer",
];

const PORTUGUESE: [&str; 50] = [
    "o", "os", "as", "de", "do", "da", "dos", "das", "um", "uma", "e", "é", "em", "no", "na", "nos", "nas", "que",
    "por", "para", "com", "se", "não", "mais", "como", "mas", "ao", "à", "pelo", "pela", "foi", "são", "seu", "sua",
    "ele", "ela", "também", "já", "muito", "quando", "sobre", "entre", "depois", "ainda", "até", "isso", "está", "ser",
    "tem", "sem",
];

const ITALIAN: [&str; 50] = [
    "il", "lo", "gli", "le", "di", "del", "della", "dei", "delle", "un", "uno", "una", "e", "è", "in", "che", "per",
    "con", "non", "si", "da", "dal", "nel", "nella", "sono", "come", "più", "ma", "anche", "alla", "al", "questo",
    "questa", "suo", "sua", "ha", "hanno", "era", "stato", "essere", "tra", "fra", "dopo", "quando", "molto", "ancora",
    "già", "così", "perché", "ci",
];

static LISTS: LazyLock<Vec<(&'static str, HashSet<&'static str>)>> = LazyLock::new(|| {
    [
        ("en", &ENGLISH_STOPWORDS[..]),
        ("fr", &FRENCH[..]),
        ("es", &SPANISH[..]),
        ("de", &GERMAN[..]),
        ("pt", &PORTUGUESE[..]),
        ("it", &ITALIAN[..]),
    ]
    .into_iter()
    .map(|(code, words)| (code, words.iter().copied().collect()))
    .collect()
});

#[derive(Debug, Default, Clone, Copy)]
pub struct StopwordDetector;

impl LanguageDetector for StopwordDetector {
    fn detect(&self, text: &str) -> String {
        detect_language(text)
    }
}

/// Fraction of tokens in `text` that belong to `stopwords`.
pub fn stopword_ratio(text: &str, stopwords: &HashSet<&str>) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for token in text.split_whitespace() {
        total += 1;
        let word = token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if stopwords.contains(word.as_str()) {
            hits += 1;
        }
    }
    if total == 0 { 0.0 } else { hits as f64 / total as f64 }
}

pub fn detect_language(text: &str) -> String {
    let (letters, others) = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .fold((0usize, 0usize), |(l, o), c| {
            if c.is_alphabetic() { (l + 1, o) } else { (l, o + 1) }
        });
    if letters == 0 || letters <= others {
        return UNKNOWN.to_string();
    }
    let ratios: Vec<(&str, f64)> = LISTS
        .iter()
        .map(|(code, words)| (*code, stopword_ratio(text, words)))
        .collect();
    let english = ratios[0].1;
    let best_other = ratios[1..]
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, r)| *r >= MIN_STOPWORD_RATIO);
    match best_other {
        _ if english >= MIN_STOPWORD_RATIO && best_other.is_none_or(|(_, r)| english >= r) => "en".to_string(),
        Some((code, _)) => code.to_string(),
        None => UNKNOWN.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_list_has_fifty_distinct_words() {
        let set: HashSet<_> = ENGLISH_STOPWORDS.iter().collect();
        assert_eq!(set.len(), 50);
        for (_, words) in LISTS.iter() {
            assert_eq!(words.len(), 50);
        }
    }

    #[test]
    fn degenerate_inputs_are_unknown() {
        assert_eq!(detect_language(""), UNKNOWN);
        assert_eq!(detect_language("   \n"), UNKNOWN);
        assert_eq!(detect_language("12,345.67 -- 2019/08/11 !!!"), UNKNOWN);
    }

    #[test]
    fn english_sentence() {
        assert_eq!(
            detect_language("The president said that the rally was held in the capital on Sunday."),
            "en"
        );
    }

    #[test]
    fn french_sentence_is_not_english() {
        let fr =
            "Le président a déclaré que la manifestation a eu lieu dans la capitale dimanche, selon les médias locaux.";
        assert_eq!(detect_language(fr), "fr");
    }

    #[test]
    fn punctuation_is_trimmed_from_tokens() {
        let words: HashSet<&str> = ["the"].into_iter().collect();
        assert_eq!(stopword_ratio("The, cat \"the\"", &words), 2.0 / 3.0);
    }
}
