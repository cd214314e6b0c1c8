#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rmcd::backend::{Backend, PromptState, Vocabulary};
use rmcd::kb::{RetrievedContextSet, ScoredContext};
use rmcd::numerics::LogitVector;
use rmcd::Result;

/// Returns fixed logits per context text; no context reads the `""` row.
pub struct TableBackend {
    vocab: Vocabulary,
    rows: HashMap<String, Vec<f64>>,
}

impl TableBackend {
    pub fn new(words: usize) -> Self {
        let vocab = Vocabulary::new((0..words).map(|i| format!("t{i}"))).unwrap();
        Self { vocab, rows: HashMap::new() }
    }

    pub fn width(&self) -> usize {
        self.vocab.len()
    }

    pub fn insert(&mut self, context: &str, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.vocab.len());
        self.rows.insert(context.to_string(), logits);
    }

    pub fn row(&self, context: &str) -> &[f64] {
        &self.rows[context]
    }
}

impl Backend for TableBackend {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logits(&self, _state: &PromptState, context: Option<&str>) -> Result<LogitVector> {
        LogitVector::new(self.rows[context.unwrap_or("")].clone())
    }
}

pub fn random_logits<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-8.0..8.0)).collect()
}

/// A table backend with `n` random contexts `c0..` plus the unconditional
/// row, and the matching context set with random descending-order scores.
pub fn random_scenario<R: Rng>(rng: &mut R, n: usize, words: usize) -> (TableBackend, RetrievedContextSet) {
    let mut backend = TableBackend::new(words);
    let width = backend.width();
    backend.insert("", random_logits(rng, width));
    let mut scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..30.0)).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let mut contexts = Vec::with_capacity(n);
    for (j, score) in scores.into_iter().enumerate() {
        let text = format!("c{j}");
        backend.insert(&text, random_logits(rng, width));
        contexts.push(ScoredContext::new(format!("d{j}"), text, score));
    }
    (backend, RetrievedContextSet::new(contexts).unwrap())
}

/// Softmax evaluated directly, without the crate's numerics.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn sup_norm(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
