//! The next-token-logit contract every decoder calls, and the synthetic
//! knowledge-grounded model that implements it.

mod grounded;

use std::cell::Cell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{LogitVector, TokenId};

pub use grounded::{grounded_logits, parse_question, GroundedParams, GroundedWorldModel};

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;

/// Ordered, duplicate-free token list with the reserved ids 0, 1, 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub const MAX_SIZE: usize = 4096;
    pub const RESERVED: [&'static str; 3] = ["<bos>", "<eos>", "<unk>"];

    /// Reserved tokens followed by `words` in first-seen order.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for w in Self::RESERVED.iter().map(|s| s.to_string()).chain(words.into_iter().map(Into::into)) {
            vocab.insert(w);
        }
        if vocab.len() > Self::MAX_SIZE {
            return Err(Error::contract(format!(
                "vocabulary of {} tokens exceeds the cap of {}",
                vocab.len(),
                Self::MAX_SIZE
            )));
        }
        Ok(vocab)
    }

    fn insert(&mut self, word: String) -> TokenId {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(word.clone(), id);
        self.tokens.push(word);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Space-joined surface form, skipping reserved tokens.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id > UNK)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// The question plus the tokens generated so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptState {
    pub question: String,
    prefix: Vec<TokenId>,
}

impl PromptState {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            prefix: Vec::new(),
        }
    }

    pub fn with_prefix(question: impl Into<String>, prefix: Vec<TokenId>) -> Result<Self> {
        if prefix.iter().rev().skip(1).any(|&t| t == EOS) {
            return Err(Error::contract("EOS may only end a prefix"));
        }
        Ok(Self {
            question: question.into(),
            prefix,
        })
    }

    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    pub fn is_finished(&self) -> bool {
        self.prefix.last() == Some(&EOS)
    }

    pub fn push(&mut self, token: TokenId) -> Result<()> {
        if self.is_finished() {
            return Err(Error::contract("prefix already ended with EOS"));
        }
        self.prefix.push(token);
        Ok(())
    }
}

/// A model that scores the next token given the prompt and an optional
/// context. `None` and `Some("")` both mean no context.
pub trait Backend {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_token_logits(&self, state: &PromptState, context: Option<&str>) -> Result<LogitVector>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_token_logits(&self, state: &PromptState, context: Option<&str>) -> Result<LogitVector> {
        (**self).next_token_logits(state, context)
    }
}

/// Wraps a backend for one generation and counts its forward passes.
pub struct CountingBackend<'a, B: Backend + ?Sized> {
    inner: &'a B,
    calls: Cell<usize>,
}

impl<'a, B: Backend + ?Sized> CountingBackend<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<B: Backend + ?Sized> Backend for CountingBackend<'_, B> {
    fn vocabulary(&self) -> &Vocabulary {
        self.inner.vocabulary()
    }

    fn next_token_logits(&self, state: &PromptState, context: Option<&str>) -> Result<LogitVector> {
        self.calls.set(self.calls.get() + 1);
        self.inner.next_token_logits(state, context)
    }
}
