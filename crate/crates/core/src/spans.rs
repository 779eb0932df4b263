//! Assignment of context positions to the four input sources.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four attention-side sources, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Query,
    Rag,
    Past,
    #[serde(rename = "self")]
    SelfToken,
}

impl InputSource {
    pub const ALL: [InputSource; 4] = [
        InputSource::Query,
        InputSource::Rag,
        InputSource::Past,
        InputSource::SelfToken,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputSource::Query => "query",
            InputSource::Rag => "rag",
            InputSource::Past => "past",
            InputSource::SelfToken => "self",
        })
    }
}

/// Index sets for one analyzed row. They must partition `0..=row`, the keys
/// that row can attend to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpans {
    pub row: usize,
    pub query: Vec<usize>,
    pub rag: Vec<usize>,
    pub past: Vec<usize>,
    #[serde(rename = "self")]
    pub self_token: Vec<usize>,
}

impl SourceSpans {
    pub fn get(&self, source: InputSource) -> &[usize] {
        match source {
            InputSource::Query => &self.query,
            InputSource::Rag => &self.rag,
            InputSource::Past => &self.past,
            InputSource::SelfToken => &self.self_token,
        }
    }

    pub fn get_mut(&mut self, source: InputSource) -> &mut Vec<usize> {
        match source {
            InputSource::Query => &mut self.query,
            InputSource::Rag => &mut self.rag,
            InputSource::Past => &mut self.past,
            InputSource::SelfToken => &mut self.self_token,
        }
    }

    /// Checks that the four sets are disjoint and cover exactly `0..=row`.
    pub fn validate(&self) -> Result<()> {
        let visible = self.row + 1;
        let mut count = vec![0u8; visible];
        let mut out_of_range = Vec::new();
        for s in InputSource::ALL {
            for &k in self.get(s) {
                if k >= visible {
                    out_of_range.push(k);
                } else {
                    count[k] = count[k].saturating_add(1);
                }
            }
        }
        if !out_of_range.is_empty() {
            out_of_range.sort_unstable();
            out_of_range.dedup();
            return Err(Error::SpanOutOfRange {
                row: self.row,
                indices: out_of_range,
            });
        }
        let overlap: Vec<usize> = (0..visible).filter(|&k| count[k] > 1).collect();
        if !overlap.is_empty() {
            return Err(Error::SpanOverlap { indices: overlap });
        }
        let missing: Vec<usize> = (0..visible).filter(|&k| count[k] == 0).collect();
        if !missing.is_empty() {
            return Err(Error::SpanUncovered { indices: missing });
        }
        Ok(())
    }

    /// Swaps the query and RAG index sets.
    pub fn swap_query_rag(&self) -> Self {
        let mut s = self.clone();
        std::mem::swap(&mut s.query, &mut s.rag);
        s
    }
}

/// Layout of a teacher-forced sequence: a prompt whose positions are each
/// labeled query or RAG, followed by the response.
///
/// For the row that predicts a response token, `Self` is that row and `Past`
/// is every earlier response position. The row predicting the first response
/// token is the last prompt position; it counts as `Self` and leaves its
/// prompt source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextLayout {
    prompt: Vec<InputSource>,
    response_len: usize,
}

impl ContextLayout {
    /// `prompt[k]` must be `Query` or `Rag`.
    pub fn new(prompt: Vec<InputSource>, response_len: usize) -> Result<Self> {
        if prompt.is_empty() {
            return Err(Error::EmptyInput("prompt"));
        }
        if response_len == 0 {
            return Err(Error::EmptyInput("response"));
        }
        if let Some(k) = prompt
            .iter()
            .position(|s| !matches!(s, InputSource::Query | InputSource::Rag))
        {
            return Err(Error::malformed(
                "context layout",
                format!("prompt position {k} must be query or rag"),
            ));
        }
        Ok(Self {
            prompt,
            response_len,
        })
    }

    /// Builds the prompt labeling from explicit index sets, rejecting
    /// overlapping or missing indices.
    pub fn from_index_sets(
        query: &[usize],
        rag: &[usize],
        prompt_len: usize,
        response_len: usize,
    ) -> Result<Self> {
        let mut owner: BTreeMap<usize, InputSource> = BTreeMap::new();
        let mut overlap = Vec::new();
        let mut outside = Vec::new();
        for (set, source) in [(query, InputSource::Query), (rag, InputSource::Rag)] {
            for &k in set {
                if k >= prompt_len {
                    outside.push(k);
                } else if owner.insert(k, source).is_some() {
                    overlap.push(k);
                }
            }
        }
        if !outside.is_empty() {
            outside.sort_unstable();
            outside.dedup();
            return Err(Error::SpanOutOfRange {
                row: prompt_len.saturating_sub(1),
                indices: outside,
            });
        }
        if !overlap.is_empty() {
            overlap.sort_unstable();
            overlap.dedup();
            return Err(Error::SpanOverlap { indices: overlap });
        }
        let missing: Vec<usize> = (0..prompt_len).filter(|k| !owner.contains_key(k)).collect();
        if !missing.is_empty() {
            return Err(Error::SpanUncovered { indices: missing });
        }
        Self::new(owner.into_values().collect(), response_len)
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    pub fn response_len(&self) -> usize {
        self.response_len
    }

    pub fn seq_len(&self) -> usize {
        self.prompt.len() + self.response_len
    }

    pub fn prompt_sources(&self) -> &[InputSource] {
        &self.prompt
    }

    /// Row that predicts response token `j` (0-based within the response).
    pub fn predicting_row(&self, j: usize) -> usize {
        self.prompt.len() + j - 1
    }

    /// Spans for predicting response token `j`.
    pub fn spans_for_response_token(&self, j: usize) -> Result<SourceSpans> {
        if j >= self.response_len {
            return Err(Error::IndexOutOfRange {
                what: "response token",
                index: j,
                limit: self.response_len,
            });
        }
        let row = self.predicting_row(j);
        let mut spans = SourceSpans {
            row,
            query: Vec::new(),
            rag: Vec::new(),
            past: Vec::new(),
            self_token: vec![row],
        };
        for (k, &s) in self.prompt.iter().enumerate() {
            if k != row {
                spans.get_mut(s).push(k);
            }
        }
        spans.past = (self.prompt.len()..row).collect();
        Ok(spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use InputSource::*;

    #[test]
    fn first_response_row_takes_last_prompt_position_as_self() {
        let layout = ContextLayout::new(vec![Query, Query, Rag, Rag], 3).unwrap();
        let s = layout.spans_for_response_token(0).unwrap();
        assert_eq!(s.row, 3);
        assert_eq!(s.query, vec![0, 1]);
        assert_eq!(s.rag, vec![2]);
        assert!(s.past.is_empty());
        assert_eq!(s.self_token, vec![3]);
        s.validate().unwrap();
    }

    #[test]
    fn later_rows_have_past() {
        let layout = ContextLayout::new(vec![Query, Rag], 4).unwrap();
        let s = layout.spans_for_response_token(3).unwrap();
        assert_eq!(s.row, 4);
        assert_eq!(s.past, vec![2, 3]);
        assert_eq!(s.self_token, vec![4]);
        s.validate().unwrap();
    }

    #[test]
    fn overlap_is_reported_with_indices() {
        let err = ContextLayout::from_index_sets(&[0, 1, 2], &[2, 3], 4, 1).unwrap_err();
        assert!(matches!(err, Error::SpanOverlap { indices } if indices == vec![2]));
    }

    #[test]
    fn uncovered_is_reported() {
        let err = ContextLayout::from_index_sets(&[0], &[2], 3, 1).unwrap_err();
        assert!(matches!(err, Error::SpanUncovered { indices } if indices == vec![1]));
    }

    #[test]
    fn validate_detects_out_of_range() {
        let s = SourceSpans {
            row: 1,
            query: vec![0],
            rag: vec![],
            past: vec![],
            self_token: vec![1, 5],
        };
        assert!(matches!(s.validate(), Err(Error::SpanOutOfRange { .. })));
    }
}
