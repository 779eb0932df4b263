//! Rule-based fallback POS tagger.
//!
//! Segments on whitespace and punctuation, then tags closed-class words from a
//! small lexicon, numerals as `NUM`, punctuation as `PUNCT`, symbols as `SYM`,
//! capitalized words that do not start a sentence as `PROPN`, and everything
//! else as `NOUN`. It does not recognise verbs, adjectives or adverbs in
//! general; use an external tagger via the sidecar format for real analyses.

use crate::syntax::align::TaggedWord;
use crate::syntax::pos::PosTag;

const DET: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "every", "each", "some", "any", "no",
    "all", "both", "either", "neither", "another", "such",
];
const ADP: &[&str] = &[
    "in", "on", "at", "by", "for", "with", "from", "to", "of", "about", "into", "onto", "over",
    "under", "after", "before", "between", "through", "during", "without", "within", "against",
    "among", "across", "behind", "below", "above", "near", "since", "until", "upon", "via", "per",
    "off", "out", "around", "toward", "towards",
];
const PRON: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "myself", "yourself",
    "himself", "herself", "itself", "ourselves", "themselves", "who", "whom", "whose", "what",
    "which", "someone", "something", "anyone", "anything", "everyone", "everything", "nobody",
    "nothing",
];
const AUX: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "has", "have", "had", "do", "does",
    "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];
const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet", "so"];
const SCONJ: &[&str] = &[
    "if", "because", "although", "though", "while", "when", "unless", "whether", "whereas",
    "once", "than",
];
const PART: &[&str] = &["not", "n't", "'s"];
const INTJ: &[&str] = &["oh", "yes", "hello", "hi", "wow", "ah", "alas", "hey", "okay", "ok"];
const NUM_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "twenty", "thirty", "forty", "fifty", "hundred", "thousand", "million",
    "billion",
];
const SYMBOLS: &str = "$%&+=<>@#^~|*/\\€£¥°©®§";

fn closed_class(lower: &str) -> Option<PosTag> {
    let table: [(&[&str], PosTag); 9] = [
        (DET, PosTag::Det),
        (ADP, PosTag::Adp),
        (PRON, PosTag::Pron),
        (AUX, PosTag::Aux),
        (CCONJ, PosTag::Cconj),
        (SCONJ, PosTag::Sconj),
        (PART, PosTag::Part),
        (INTJ, PosTag::Intj),
        (NUM_WORDS, PosTag::Num),
    ];
    table
        .iter()
        .find(|(words, _)| words.contains(&lower))
        .map(|(_, tag)| *tag)
}

fn is_numeral(word: &str) -> bool {
    let mut chars = word.chars();
    chars.next().is_some_and(|c| c.is_ascii_digit())
        && word.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

/// Splits `text` into words and punctuation, returning `(start, end)` char offsets.
fn segment(chars: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                let joins = matches!(c, '\'' | '-' | '.' | ',')
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric()
                    && match c {
                        // Only digits continue through `.` and `,`.
                        '.' | ',' => chars[i - 1].is_ascii_digit() && chars[i + 1].is_ascii_digit(),
                        _ => true,
                    };
                if c.is_alphanumeric() || joins {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, i));
        } else {
            out.push((i, i + 1));
            i += 1;
        }
    }
    out
}

pub fn builtin_fallback_tagger(text: &str) -> Vec<TaggedWord> {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut sentence_start = true;
    for (start, end) in segment(&chars) {
        let word: String = chars[start..end].iter().collect();
        let first = chars[start];
        let tag = if !first.is_alphanumeric() {
            if SYMBOLS.contains(first) {
                PosTag::Sym
            } else {
                PosTag::Punct
            }
        } else if is_numeral(&word) {
            PosTag::Num
        } else if let Some(tag) = closed_class(&word.to_lowercase()) {
            tag
        } else if first.is_uppercase() && !sentence_start {
            PosTag::Propn
        } else {
            PosTag::Noun
        };
        sentence_start = matches!(word.as_str(), "." | "!" | "?");
        words.push(TaggedWord::new(word, start, end, tag));
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosTag::*;

    fn tags(text: &str) -> Vec<(String, PosTag)> {
        builtin_fallback_tagger(text)
            .into_iter()
            .map(|w| (w.text, w.tag))
            .collect()
    }

    #[test]
    fn the_cat_sat() {
        assert_eq!(
            tags("the cat sat."),
            vec![
                ("the".into(), Det),
                ("cat".into(), Noun),
                ("sat".into(), Noun),
                (".".into(), Punct)
            ]
        );
    }

    #[test]
    fn numerals_and_empty() {
        assert_eq!(tags("42"), vec![("42".into(), Num)]);
        assert_eq!(tags("3.14 and 1,000"), vec![
            ("3.14".into(), Num),
            ("and".into(), Cconj),
            ("1,000".into(), Num)
        ]);
        assert!(tags("").is_empty());
    }

    #[test]
    fn proper_nouns_only_mid_sentence() {
        assert_eq!(
            tags("Paris is in France. Rome"),
            vec![
                ("Paris".into(), Noun),
                ("is".into(), Aux),
                ("in".into(), Adp),
                ("France".into(), Propn),
                (".".into(), Punct),
                ("Rome".into(), Noun)
            ]
        );
    }

    #[test]
    fn offsets_are_char_based() {
        let w = builtin_fallback_tagger("café $5");
        assert_eq!((w[0].char_start, w[0].char_end), (0, 4));
        assert_eq!(w[1].tag, Sym);
        assert_eq!((w[2].char_start, w[2].char_end, w[2].tag), (6, 7, Num));
    }

    #[test]
    fn contractions_and_hyphens_stay_whole() {
        let w = tags("don't well-known end.");
        assert_eq!(w[0].0, "don't");
        assert_eq!(w[1].0, "well-known");
        assert_eq!(w[2].0, "end");
    }
}
