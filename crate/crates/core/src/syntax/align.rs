use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syntax::pos::PosTag;
use crate::text::CharSpan;

/// A tagged word of the detokenized response, as produced by a POS tagger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedWord {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub tag: PosTag,
}

impl TaggedWord {
    pub fn new(text: impl Into<String>, char_start: usize, char_end: usize, tag: PosTag) -> Self {
        Self {
            text: text.into(),
            char_start,
            char_end,
            tag,
        }
    }

    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.char_start, self.char_end)
    }
}

/// Word index → token indices, plus tokens that overlap no word.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub word_to_tokens: Vec<Vec<usize>>,
    pub unaligned: Vec<usize>,
}

impl AlignmentMap {
    pub fn n_tokens(&self) -> usize {
        self.word_to_tokens.iter().map(Vec::len).sum::<usize>() + self.unaligned.len()
    }
}

/// Assigns each token to the word it overlaps most, by character count.
/// Ties go to the earlier word; tokens overlapping no word are unaligned.
///
/// `text_len` is the length of the detokenized string in characters.
pub fn align(tokens: &[CharSpan], words: &[TaggedWord], text_len: usize) -> Result<AlignmentMap> {
    validate_words(words, text_len)?;
    for t in tokens {
        if t.end > text_len || t.start > t.end {
            return Err(Error::OffsetOutOfBounds {
                offset: t.end.max(t.start),
                len: text_len,
            });
        }
    }

    let mut map = AlignmentMap {
        word_to_tokens: vec![Vec::new(); words.len()],
        unaligned: Vec::new(),
    };
    for (ti, t) in tokens.iter().enumerate() {
        // Words are sorted and disjoint, so only those starting before the
        // token ends and ending after it starts can overlap.
        let first = words.partition_point(|w| w.char_end <= t.start);
        let mut best: Option<(usize, usize)> = None;
        for (wi, w) in words.iter().enumerate().skip(first) {
            if w.char_start >= t.end {
                break;
            }
            let ov = t.overlap(&w.span());
            if ov > 0 && best.is_none_or(|(_, b)| ov > b) {
                best = Some((wi, ov));
            }
        }
        match best {
            Some((wi, _)) => map.word_to_tokens[wi].push(ti),
            None => map.unaligned.push(ti),
        }
    }
    Ok(map)
}

fn validate_words(words: &[TaggedWord], text_len: usize) -> Result<()> {
    let mut prev_end = 0;
    for (i, w) in words.iter().enumerate() {
        if w.char_end > text_len {
            return Err(Error::OffsetOutOfBounds {
                offset: w.char_end,
                len: text_len,
            });
        }
        if w.char_start >= w.char_end || w.char_start < prev_end {
            return Err(Error::BadWord { index: i });
        }
        prev_end = w.char_end;
    }
    Ok(())
}

/// Gives every aligned token its parent word's tag and every unaligned token `X`.
pub fn propagate_tags(map: &AlignmentMap, words: &[TaggedWord], n_tokens: usize) -> Result<Vec<PosTag>> {
    if map.word_to_tokens.len() != words.len() {
        return Err(Error::LengthMismatch {
            what: "alignment words vs tagged words",
            left: map.word_to_tokens.len(),
            right: words.len(),
        });
    }
    let mut tags: Vec<Option<PosTag>> = vec![None; n_tokens];
    let assigned = map
        .word_to_tokens
        .iter()
        .zip(words)
        .flat_map(|(toks, w)| toks.iter().map(move |&t| (t, w.tag)))
        .chain(map.unaligned.iter().map(|&t| (t, PosTag::X)));
    for (t, tag) in assigned {
        let slot = tags.get_mut(t).ok_or(Error::IndexOutOfRange {
            what: "aligned token",
            index: t,
            limit: n_tokens,
        })?;
        if slot.replace(tag).is_some() {
            return Err(Error::malformed("alignment", format!("token {t} aligned twice")));
        }
    }
    tags.into_iter()
        .enumerate()
        .map(|(t, tag)| {
            tag.ok_or_else(|| Error::malformed("alignment", format!("token {t} missing from alignment")))
        })
        .collect()
}
