use serde::{Deserialize, Serialize};

use super::{tokenize, Document, KnowledgeBase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    /// Clamp negative idf (terms in more than half the corpus) to zero.
    pub clamp_idf: bool,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            clamp_idf: true,
        }
    }
}

/// Okapi BM25 against a knowledge base's corpus statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bm25 {
    pub params: Bm25Params,
}

impl Bm25 {
    pub fn new(params: Bm25Params) -> Self {
        Self { params }
    }

    pub fn idf(&self, kb: &KnowledgeBase, term: &str) -> f64 {
        let n = kb.len() as f64;
        let df = kb.stats().doc_freq.get(term).copied().unwrap_or(0) as f64;
        let idf = ((n - df + 0.5) / (df + 0.5)).ln();
        if self.params.clamp_idf {
            idf.max(0.0)
        } else {
            idf
        }
    }

    /// Contribution of one query term occurring `tf` times in a document of
    /// `doc_len` tokens.
    pub(crate) fn term_score(&self, idf: f64, tf: f64, doc_len: f64, avg_len: f64) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let norm = if avg_len > 0.0 { doc_len / avg_len } else { 1.0 };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    /// Scores `doc` for `question`. The document's own term counts come from
    /// its text; document frequencies and average length come from `kb`.
    pub fn score(&self, kb: &KnowledgeBase, question: &str, doc: &Document) -> f64 {
        let doc_tokens = tokenize(&doc.text);
        let doc_len = doc_tokens.len() as f64;
        let avg_len = kb.stats().avg_len;
        let mut total = 0.0;
        for term in tokenize(question) {
            let tf = doc_tokens.iter().filter(|t| **t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = self.idf(kb, &term);
            if idf == 0.0 {
                continue;
            }
            total += self.term_score(idf, tf, doc_len, avg_len);
        }
        total
    }
}
