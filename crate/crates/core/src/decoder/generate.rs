use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::step::{baseline_step, rmcd_step};
use super::weights::augment_with_sentinel;
use super::{DecoderConfig, Method, Sampling};
use crate::backend::{Backend, CountingBackend, PromptState, EOS};
use crate::error::{Error, Result};
use crate::kb::RetrievedContextSet;
use crate::numerics::{greedy_select, nucleus_sample, ProbVector, TokenId};

/// The outcome of decoding one answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub method: Method,
    /// Emitted token ids, ending in EOS unless the token budget ran out.
    pub tokens: Vec<TokenId>,
    /// Probability of each emitted token under the step distribution.
    pub token_probs: Vec<f64>,
    pub mean_confidence: f64,
    pub forward_calls: usize,
    /// Independent decoding streams behind this record (n for voting methods).
    pub streams: usize,
    /// Tokens emitted across all streams.
    pub stream_tokens: usize,
    /// Normalized surface form of `tokens`.
    pub answer: String,
}

impl GenerationRecord {
    /// Backend calls per decoding position, averaged over streams.
    pub fn calls_per_token(&self) -> Option<f64> {
        (self.stream_tokens > 0).then(|| (self.forward_calls * self.streams) as f64 / self.stream_tokens as f64)
    }
}

/// Lowercase and collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn choose<R: Rng + ?Sized>(probs: &ProbVector, sampling: Sampling, rng: &mut R) -> TokenId {
    match sampling {
        Sampling::Greedy => greedy_select(probs),
        Sampling::Nucleus { top_p } => nucleus_sample(probs, top_p, rng),
    }
}

fn decode_loop<B, R, F>(
    method: Method,
    backend: &B,
    question: &str,
    config: &DecoderConfig,
    rng: &mut R,
    mut step: F,
) -> Result<GenerationRecord>
where
    B: Backend + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&CountingBackend<'_, B>, &PromptState) -> Result<ProbVector>,
{
    let counted = CountingBackend::new(backend);
    let mut state = PromptState::new(question);
    let mut token_probs = Vec::new();
    for _ in 0..config.max_new_tokens {
        let probs = step(&counted, &state)?;
        let token = choose(&probs, config.sampling, rng);
        token_probs.push(probs.get(token));
        state.push(token)?;
        if token == EOS {
            break;
        }
    }
    let tokens = state.prefix().to_vec();
    Ok(GenerationRecord {
        method,
        answer: normalize_answer(&backend.vocabulary().decode(&tokens)),
        mean_confidence: mean(&token_probs),
        forward_calls: counted.calls(),
        streams: 1,
        stream_tokens: tokens.len(),
        tokens,
        token_probs,
    })
}

/// Decodes an answer to `question` with `method`, using the first
/// `config.n_contexts` contexts of the (un-augmented) retrieved `set`.
pub fn generate<B: Backend + ?Sized, R: Rng + ?Sized>(
    method: Method,
    backend: &B,
    question: &str,
    set: &RetrievedContextSet,
    config: &DecoderConfig,
    rng: &mut R,
) -> Result<GenerationRecord> {
    config.validate()?;
    if set.has_sentinel() {
        return Err(Error::contract("generate expects a set without the empty context"));
    }
    let set = set.truncated(config.n_contexts);
    match method {
        Method::Rmcd => {
            let augmented = augment_with_sentinel(&set, config.empty_context_mode)?;
            decode_loop(method, backend, question, config, rng, |b, s| rmcd_step(b, s, &augmented, config))
        }
        Method::Consistency | Method::MaxProbability => {
            if set.is_empty() {
                return Err(Error::contract(format!("{method} needs at least one retrieved context")));
            }
            let mut records = Vec::with_capacity(set.len());
            for c in &set {
                let single = RetrievedContextSet::new(vec![c.clone()])?;
                records.push(decode_loop(Method::Rag, backend, question, config, rng, |b, s| {
                    baseline_step(Method::Rag, b, s, &single, config)
                })?);
            }
            let pick = select_record(method, &records, rng)?;
            let chosen = &records[pick];
            Ok(GenerationRecord {
                method,
                tokens: chosen.tokens.clone(),
                token_probs: chosen.token_probs.clone(),
                mean_confidence: chosen.mean_confidence,
                answer: chosen.answer.clone(),
                forward_calls: records.iter().map(|r| r.forward_calls).sum(),
                streams: records.len(),
                stream_tokens: records.iter().map(|r| r.stream_tokens).sum(),
            })
        }
        _ => decode_loop(method, backend, question, config, rng, |b, s| baseline_step(method, b, s, &set, config)),
    }
}

/// Index of the record a voting method settles on. Consistency takes the most
/// frequent answer; max probability takes the highest mean confidence. Ties
/// go to a uniform draw among the tied answers.
pub fn select_record<R: Rng + ?Sized>(method: Method, records: &[GenerationRecord], rng: &mut R) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::contract("no records to aggregate"));
    }
    let tied: Vec<usize> = match method {
        Method::Consistency => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for r in records {
                *counts.entry(&r.answer).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            counts
                .iter()
                .filter(|(_, &c)| c == top)
                .filter_map(|(a, _)| records.iter().position(|r| r.answer == *a))
                .collect()
        }
        Method::MaxProbability => {
            let best = records.iter().map(|r| r.mean_confidence).fold(f64::NEG_INFINITY, f64::max);
            let mut seen: Vec<&str> = Vec::new();
            let mut firsts = Vec::new();
            for (i, r) in records.iter().enumerate() {
                if r.mean_confidence == best && !seen.contains(&r.answer.as_str()) {
                    seen.push(&r.answer);
                    firsts.push(i);
                }
            }
            firsts
        }
        other => return Err(Error::contract(format!("{other} does not aggregate answers"))),
    };
    Ok(if tied.len() == 1 { tied[0] } else { tied[rng.gen_range(0..tied.len())] })
}

/// The answer a voting method settles on. See [`select_record`].
pub fn aggregate_answers<R: Rng + ?Sized>(method: Method, records: &[GenerationRecord], rng: &mut R) -> Result<String> {
    select_record(method, records, rng).map(|i| records[i].answer.clone())
}
