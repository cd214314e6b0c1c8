//! Knowledge-base storage, JSONL ingestion, BM25 retrieval, and synthetic worlds.

mod bm25;
mod retrieval;
mod synth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bm25::{Bm25, Bm25Params};
pub use retrieval::{inject_oracle, recall_at_k, retrieve, RetrievedContextSet, ScoredContext};
pub use synth::{synthesize_world, EntityFacts, SyntheticWorld, SyntheticWorldSpec, WorldLexicon};

/// Lowercase, split on anything that is not alphanumeric, drop empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    pub entity_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub qid: String,
    pub question: String,
    pub answers: Vec<String>,
    pub oracle_doc_id: String,
}

/// Per-term document frequencies and per-document lengths, plus the postings
/// retrieval walks.
#[derive(Debug, Clone, Default)]
pub struct TokenStats {
    pub doc_freq: HashMap<String, usize>,
    pub doc_len: Vec<usize>,
    pub avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl TokenStats {
    fn build(docs: &[Document]) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (idx, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((idx, count));
            }
        }
        let doc_freq = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Self {
            doc_freq,
            doc_len,
            avg_len,
            postings,
        }
    }

    pub(crate) fn postings(&self, term: &str) -> &[(usize, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// An immutable, indexed document collection. Mutation goes through
/// [`KnowledgeBase::extend`], which rebuilds the statistics.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    stats: TokenStats,
}

impl KnowledgeBase {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (idx, doc) in docs.iter().enumerate() {
            if doc.text.is_empty() {
                return Err(Error::Ingest(format!("document {:?} has empty text", doc.id)));
            }
            if by_id.insert(doc.id.clone(), idx).is_some() {
                return Err(Error::Ingest(format!("duplicate document id {:?}", doc.id)));
            }
        }
        let stats = TokenStats::build(&docs);
        Ok(Self { docs, by_id, stats })
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Document>) -> Result<()> {
        let mut docs = self.docs.clone();
        docs.extend(more);
        *self = Self::new(docs)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn stats(&self) -> &TokenStats {
        &self.stats
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines knowledge base (`id`, `title`, `text`, `entity_id`).
pub fn ingest_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    KnowledgeBase::new(read_jsonl(path.as_ref())?)
}

pub fn emit_kb(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<()> {
    write_jsonl(path.as_ref(), kb.documents())
}

/// Reads a JSON-lines QA file (`qid`, `question`, `answers`, `oracle_doc_id`).
pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    let queries: Vec<QueryRecord> = read_jsonl(path)?;
    if let Some(q) = queries.iter().find(|q| q.answers.is_empty()) {
        return Err(Error::Ingest(format!("query {:?} has no answers", q.qid)));
    }
    Ok(queries)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), queries)
}

/// Checks that every query's oracle document exists in `kb`.
pub fn check_oracles(kb: &KnowledgeBase, queries: &[QueryRecord]) -> Result<()> {
    match queries.iter().find(|q| kb.get(&q.oracle_doc_id).is_none()) {
        Some(q) => Err(Error::Ingest(format!(
            "query {:?} names oracle {:?}, which is not in the knowledge base",
            q.qid, q.oracle_doc_id
        ))),
        None => Ok(()),
    }
}
