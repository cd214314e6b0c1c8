//! Relevance-aware multi-context contrastive decoding for retrieval-augmented
//! generation, with BM25 retrieval, a synthetic knowledge-grounded backend and
//! a benchmark harness.

pub mod backend;
pub mod bench;
pub mod decoder;
pub mod error;
pub mod kb;
pub mod numerics;
pub mod seed;

pub use error::{Error, Result};
