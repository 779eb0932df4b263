use provlens_core::model::Vocab;
use provlens_core::{ContextLayout, InputSource};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Explicit query/RAG assignment of prompt positions, overriding the default
/// layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpans {
    pub query: Vec<usize>,
    pub rag: Vec<usize>,
}

/// One prompt/response pair to analyse.
///
/// The model sees `template_ids ++ query_ids ++ rag_ids ++ response_ids`.
/// Template positions count as query unless `spans` says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub id: String,
    #[serde(default)]
    pub template_ids: Vec<usize>,
    #[serde(default)]
    pub query_ids: Vec<usize>,
    #[serde(default)]
    pub rag_ids: Vec<usize>,
    pub response_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    /// Character span of each response token in `response_text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_offsets: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<PromptSpans>,
}

impl AnalysisRecord {
    pub fn prompt_len(&self) -> usize {
        self.template_ids.len() + self.query_ids.len() + self.rag_ids.len()
    }

    pub fn token_ids(&self) -> Vec<usize> {
        let mut ids = Vec::with_capacity(self.prompt_len() + self.response_ids.len());
        ids.extend(&self.template_ids);
        ids.extend(&self.query_ids);
        ids.extend(&self.rag_ids);
        ids.extend(&self.response_ids);
        ids
    }

    pub fn layout(&self) -> Result<ContextLayout> {
        let n_resp = self.response_ids.len();
        let layout = match &self.spans {
            Some(s) => ContextLayout::from_index_sets(&s.query, &s.rag, self.prompt_len(), n_resp),
            None => {
                let mut prompt = vec![InputSource::Query; self.template_ids.len() + self.query_ids.len()];
                prompt.extend(std::iter::repeat_n(InputSource::Rag, self.rag_ids.len()));
                ContextLayout::new(prompt, n_resp)
            }
        };
        layout.map_err(|e| CliError::record(&self.id, e))
    }

    /// Checks ids against `vocab_size` and offsets against the response.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let err = |m: String| Err(CliError::record(&self.id, m));
        if self.response_ids.is_empty() {
            return err("response is empty".into());
        }
        if self.prompt_len() == 0 {
            return err("prompt is empty".into());
        }
        if let Some(id) = self.token_ids().into_iter().find(|&t| t >= vocab_size) {
            return err(format!("token id {id} is out of range for vocab size {vocab_size}"));
        }
        if let Some(l) = self.label.filter(|&l| l > 1) {
            return err(format!("label {l} is not 0 or 1"));
        }
        if let Some(off) = &self.token_offsets {
            if off.len() != self.response_ids.len() {
                return err(format!(
                    "{} token offsets for {} response tokens",
                    off.len(),
                    self.response_ids.len()
                ));
            }
            let len = self.response_text.as_deref().map(|t| t.chars().count());
            for &(s, e) in off {
                if s > e || len.is_some_and(|n| e > n) {
                    return err(format!("token offset ({s}, {e}) is invalid for the response text"));
                }
            }
        }
        Ok(())
    }

    /// Demo constructor that tokenizes whitespace text against `vocab`.
    pub fn from_text(
        vocab: &Vocab,
        id: impl Into<String>,
        query: &str,
        rag: &str,
        response: &str,
        label: Option<u8>,
    ) -> Result<Self> {
        let ids = |text: &str| -> Result<Vec<(usize, (usize, usize))>> {
            Ok(vocab
                .tokenize(text)?
                .into_iter()
                .map(|(id, s)| (id, (s.start, s.end)))
                .collect())
        };
        let resp = ids(response)?;
        Ok(Self {
            id: id.into(),
            template_ids: Vec::new(),
            query_ids: ids(query)?.into_iter().map(|t| t.0).collect(),
            rag_ids: ids(rag)?.into_iter().map(|t| t.0).collect(),
            response_ids: resp.iter().map(|t| t.0).collect(),
            label,
            response_text: Some(response.to_string()),
            token_offsets: Some(resp.iter().map(|t| t.1).collect()),
            spans: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> AnalysisRecord {
        AnalysisRecord {
            id: "r".into(),
            template_ids: vec![0],
            query_ids: vec![1, 2],
            rag_ids: vec![3],
            response_ids: vec![4, 5],
            label: Some(1),
            response_text: None,
            token_offsets: None,
            spans: None,
        }
    }

    #[test]
    fn default_layout_routes_template_to_query() {
        let r = rec();
        assert_eq!(r.token_ids(), vec![0, 1, 2, 3, 4, 5]);
        let l = r.layout().unwrap();
        use InputSource::*;
        assert_eq!(l.prompt_sources(), &[Query, Query, Query, Rag]);
    }

    #[test]
    fn explicit_spans_override_and_overlaps_fail() {
        let mut r = rec();
        r.spans = Some(PromptSpans {
            query: vec![1, 2],
            rag: vec![0, 3],
        });
        use InputSource::*;
        assert_eq!(r.layout().unwrap().prompt_sources(), &[Rag, Query, Query, Rag]);
        r.spans = Some(PromptSpans {
            query: vec![0, 1, 2],
            rag: vec![2, 3],
        });
        let msg = r.layout().unwrap_err().to_string();
        assert!(msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn validation() {
        assert!(rec().validate(6).is_ok());
        assert!(rec().validate(5).is_err());
        let mut r = rec();
        r.token_offsets = Some(vec![(0, 1)]);
        assert!(r.validate(6).is_err());
        r.response_ids.clear();
        assert!(r.validate(6).is_err());
    }
}
