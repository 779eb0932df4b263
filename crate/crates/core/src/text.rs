//! Character-offset spans over a detokenized string.
//!
//! Offsets count Unicode scalar values, not bytes, so they agree with the
//! offsets produced by common Python tokenizers and taggers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &CharSpan) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by character offsets. Out-of-range ends are clamped.
pub fn slice_chars(text: &str, span: CharSpan) -> String {
    text.chars()
        .skip(span.start)
        .take(span.end.saturating_sub(span.start))
        .collect()
}
