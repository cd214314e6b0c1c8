use serde::Serialize;

use super::{ConstraintMode, DecoderConfig, EmptyContextMode, WeightScheme};
use crate::error::{Error, Result};
use crate::kb::{RetrievedContextSet, ScoredContext};
use crate::numerics::{softmax_slice, stable_softmax, weighted_logit_sum, LogitVector, ProbVector, TokenId};

/// Adds the empty context: scored `-inf` and appended (`NegInf`), scored with
/// the mean retrieval score and placed by that score (`Mean`), or not at all
/// (`Exclude`).
pub fn augment_with_sentinel(set: &RetrievedContextSet, mode: EmptyContextMode) -> Result<RetrievedContextSet> {
    if set.has_sentinel() {
        return Err(Error::contract("context set already holds the empty context"));
    }
    let mut contexts = set.contexts().to_vec();
    match mode {
        EmptyContextMode::Exclude => {}
        EmptyContextMode::NegInf => contexts.push(ScoredContext::sentinel(f64::NEG_INFINITY)),
        EmptyContextMode::Mean => {
            if contexts.is_empty() {
                return Err(Error::contract("mean sentinel needs at least one context"));
            }
            let mean = contexts.iter().map(|c| c.score).sum::<f64>() / contexts.len() as f64;
            let at = contexts.iter().position(|c| c.score < mean).unwrap_or(contexts.len());
            contexts.insert(at, ScoredContext::sentinel(mean));
        }
    }
    RetrievedContextSet::new(contexts)
}

/// Softmax-normalized retrieval scores over an augmented context set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeScoreVector(Vec<f64>);

impl RelativeScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `softmax(s / tau1)` over every context, the sentinel included.
pub fn relative_scores(set: &RetrievedContextSet, tau1: f64) -> Result<RelativeScoreVector> {
    if !(tau1 > 0.0) {
        return Err(Error::contract(format!("tau1 must be positive, got {tau1}")));
    }
    softmax_slice(&set.scores(), tau1).map(RelativeScoreVector)
}

/// Signed per-context weights, bounded by the configured minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextWeightVector(Vec<f64>);

impl ContextWeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The weights the logit sum uses: negative weights become zero when
    /// deflection is off.
    pub fn summation_weights(&self, deflection: bool) -> Vec<f64> {
        if deflection {
            self.0.clone()
        } else {
            self.0.iter().map(|&a| a.max(0.0)).collect()
        }
    }
}

/// Maps each context to a weight in `[m, M]` under the configured scheme.
///
/// `Relative`: `M - (M - m) * (w[0] - w[j]) / w[0]`. `Absolute`: the same
/// formula on the raw retrieval `scores`, clamped into `[m, M]`. `Uniform`:
/// evenly spaced from `M` down to `m` by rank.
pub fn context_weights(
    w: &RelativeScoreVector,
    scores: &[f64],
    config: &DecoderConfig,
) -> Result<ContextWeightVector> {
    let (hi, lo) = (config.max_weight, config.min_weight);
    let delta = hi - lo;
    let k = w.len();
    if k == 0 {
        return Err(Error::contract("no contexts to weight"));
    }
    let alpha = match config.weight_scheme {
        WeightScheme::Relative => {
            let w0 = w.0[0];
            if !(w0 > 0.0) {
                return Err(Error::degenerate("top context has zero relative score"));
            }
            w.0.iter().map(|&wj| (hi - delta * ((w0 - wj) / w0)).clamp(lo, hi)).collect()
        }
        WeightScheme::Absolute => {
            if scores.len() != k {
                return Err(Error::contract("scores and relative scores differ in length"));
            }
            let s0 = scores[0];
            if !(s0 > 0.0) {
                return Err(Error::SchemeInapplicable(format!(
                    "absolute weights need a positive top score, got {s0}"
                )));
            }
            scores
                .iter()
                .map(|&sj| (hi - delta * ((s0 - sj) / s0)).clamp(lo, hi))
                .collect()
        }
        WeightScheme::Uniform if k == 1 => vec![hi],
        WeightScheme::Uniform => (0..k)
            .map(|j| (hi - delta * j as f64 / (k - 1) as f64).clamp(lo, hi))
            .collect(),
    };
    Ok(ContextWeightVector(alpha))
}

/// Indices of the contexts whose logits form the ensemble distribution.
/// Never includes the sentinel; empty when the constraint is disabled.
pub fn build_constraint_set(
    set: &RetrievedContextSet,
    w: &RelativeScoreVector,
    config: &DecoderConfig,
) -> Vec<usize> {
    let real = set.iter().enumerate().filter(|(_, c)| !c.is_sentinel()).map(|(j, _)| j);
    match config.constraint_mode {
        ConstraintMode::Disabled => Vec::new(),
        ConstraintMode::BestContext => real.take(1).collect(),
        ConstraintMode::AllContexts => real.collect(),
        ConstraintMode::Threshold => {
            let first = real.clone().next();
            real.filter(|&j| Some(j) == first || w.0[j] >= config.gamma).collect()
        }
    }
}

/// `softmax(sum_k softmax(s / tau2)_k * logits_k)`.
pub fn ensemble_distribution(logits: &[&LogitVector], scores: &[f64], tau2: f64) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::contract("ensemble over an empty constraint set"));
    }
    if !(tau2 > 0.0) {
        return Err(Error::contract(format!("tau2 must be positive, got {tau2}")));
    }
    let w_tilde = softmax_slice(scores, tau2)?;
    stable_softmax(&weighted_logit_sum(logits, &w_tilde)?, 1.0)
}

/// Tokens whose ensemble probability reaches `beta` times the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleTokenSet {
    members: Vec<TokenId>,
    p_tilde: ProbVector,
}

impl PlausibleTokenSet {
    pub fn members(&self) -> &[TokenId] {
        &self.members
    }

    pub fn p_tilde(&self) -> &ProbVector {
        &self.p_tilde
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    /// `true` for members, indexed by token id.
    pub fn mask(&self) -> Vec<bool> {
        let mut keep = vec![false; self.p_tilde.len()];
        for &id in &self.members {
            keep[id] = true;
        }
        keep
    }
}

pub fn plausible_tokens(p_tilde: &ProbVector, beta: f64) -> PlausibleTokenSet {
    let cut = beta * p_tilde.max();
    let members = (0..p_tilde.len()).filter(|&v| p_tilde.get(v) >= cut && p_tilde.get(v) > 0.0).collect();
    PlausibleTokenSet {
        members,
        p_tilde: p_tilde.clone(),
    }
}
