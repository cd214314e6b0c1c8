use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{tokenize, Bm25, KnowledgeBase, QueryRecord};
use crate::error::{Error, Result};

/// A retrieved passage with its retrieval score. The empty-context sentinel
/// has an empty `doc_id` and empty `text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredContext {
    pub doc_id: String,
    pub text: String,
    pub score: f64,
}

impl ScoredContext {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>, score: f64) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            score,
        }
    }

    pub fn sentinel(score: f64) -> Self {
        Self::new("", "", score)
    }

    pub fn is_sentinel(&self) -> bool {
        self.doc_id.is_empty() && self.text.is_empty()
    }
}

/// Contexts sorted by non-increasing score, unique by document id, with at
/// most one sentinel. A sentinel scored `-inf` is necessarily last.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RetrievedContextSet {
    contexts: Vec<ScoredContext>,
}

impl RetrievedContextSet {
    pub fn new(contexts: Vec<ScoredContext>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut sentinels = 0;
        for c in &contexts {
            if c.score.is_nan() || c.score == f64::INFINITY {
                return Err(Error::contract(format!("invalid retrieval score {}", c.score)));
            }
            if c.is_sentinel() {
                sentinels += 1;
                continue;
            }
            if c.text.is_empty() || c.score == f64::NEG_INFINITY {
                return Err(Error::contract(format!(
                    "context {:?} needs non-empty text and a finite score",
                    c.doc_id
                )));
            }
            if !seen.insert(c.doc_id.as_str()) {
                return Err(Error::contract(format!("duplicate context {:?}", c.doc_id)));
            }
        }
        if sentinels > 1 {
            return Err(Error::contract("more than one empty-context sentinel"));
        }
        if contexts.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::contract("contexts are not sorted by descending score"));
        }
        Ok(Self { contexts })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[ScoredContext] {
        &self.contexts
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredContext> {
        self.contexts.iter()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.contexts.iter().map(|c| c.score).collect()
    }

    pub fn has_sentinel(&self) -> bool {
        self.contexts.iter().any(ScoredContext::is_sentinel)
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.contexts
            .iter()
            .position(|c| !c.is_sentinel() && c.doc_id == doc_id)
    }

    /// The first `n` contexts.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            contexts: self.contexts.iter().take(n).cloned().collect(),
        }
    }

    pub fn into_contexts(self) -> Vec<ScoredContext> {
        self.contexts
    }
}

impl<'a> IntoIterator for &'a RetrievedContextSet {
    type Item = &'a ScoredContext;
    type IntoIter = std::slice::Iter<'a, ScoredContext>;

    fn into_iter(self) -> Self::IntoIter {
        self.contexts.iter()
    }
}

/// Top-`n` documents by BM25, ties broken by the smaller document id. When
/// fewer than `n` documents share a term with the question, the rest are
/// filled with zero-scored documents in id order.
pub fn retrieve(
    kb: &KnowledgeBase,
    bm25: &Bm25,
    question: &str,
    n: usize,
) -> Result<RetrievedContextSet> {
    if n == 0 {
        return Err(Error::contract("retrieve needs n >= 1"));
    }
    let stats = kb.stats();
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for term in tokenize(question) {
        let idf = bm25.idf(kb, &term);
        if idf == 0.0 {
            continue;
        }
        for &(doc, tf) in stats.postings(&term) {
            let s = bm25.term_score(idf, f64::from(tf), stats.doc_len[doc] as f64, stats.avg_len);
            *acc.entry(doc).or_insert(0.0) += s;
        }
    }

    let docs = kb.documents();
    let mut ranked: Vec<(usize, f64)> = acc.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| docs[a.0].id.cmp(&docs[b.0].id)));
    ranked.truncate(n);

    if ranked.len() < n {
        let taken: HashSet<usize> = ranked.iter().map(|r| r.0).collect();
        let mut rest: Vec<usize> = (0..docs.len()).filter(|i| !taken.contains(i)).collect();
        rest.sort_by(|&a, &b| docs[a].id.cmp(&docs[b].id));
        ranked.extend(rest.into_iter().take(n - ranked.len()).map(|i| (i, 0.0)));
    }

    RetrievedContextSet::new(
        ranked
            .into_iter()
            .map(|(i, s)| ScoredContext::new(&docs[i].id, &docs[i].text, s))
            .collect(),
    )
}

/// Places the oracle at rank 1 with the score of the context that ends up at
/// rank 2, dropping the oracle's old slot if present or else the last context.
pub fn inject_oracle(
    set: &RetrievedContextSet,
    oracle: ScoredContext,
) -> Result<RetrievedContextSet> {
    if set.is_empty() {
        return Err(Error::contract("cannot inject an oracle into an empty set"));
    }
    if set.has_sentinel() {
        return Err(Error::contract("inject the oracle before adding the sentinel"));
    }
    let mut rest = set.contexts.clone();
    let dropped = match set.position(&oracle.doc_id) {
        Some(i) => rest.remove(i),
        None => rest.pop().expect("set is non-empty"),
    };
    // a singleton set has no rank-2 context; the oracle keeps the slot's score
    let score = rest.first().map_or(dropped.score, |c| c.score);
    let mut contexts = Vec::with_capacity(set.len());
    contexts.push(ScoredContext { score, ..oracle });
    contexts.extend(rest);
    RetrievedContextSet::new(contexts)
}

/// Fraction of queries whose oracle document is among the first `k` contexts.
pub fn recall_at_k(
    retrievals: &[RetrievedContextSet],
    queries: &[QueryRecord],
    k: usize,
) -> Result<f64> {
    if retrievals.len() != queries.len() {
        return Err(Error::contract(format!(
            "{} retrievals for {} queries",
            retrievals.len(),
            queries.len()
        )));
    }
    if queries.is_empty() {
        return Ok(0.0);
    }
    let hits = retrievals
        .iter()
        .zip(queries)
        .filter(|(set, q)| set.position(&q.oracle_doc_id).is_some_and(|p| p < k))
        .count();
    Ok(hits as f64 / queries.len() as f64)
}
