use super::weights::{
    build_constraint_set, context_weights, ensemble_distribution, plausible_tokens, relative_scores,
    ContextWeightVector, PlausibleTokenSet, RelativeScoreVector,
};
use super::{ConstraintMode, DecoderConfig, Method};
use crate::backend::{Backend, PromptState};
use crate::error::{Error, Result};
use crate::kb::RetrievedContextSet;
use crate::numerics::{stable_softmax, weighted_logit_sum, LogitVector, ProbVector};

/// Every intermediate of one RMCD step.
#[derive(Debug, Clone)]
pub struct RmcdTrace {
    /// One backend output per context, before masking.
    pub logits: Vec<LogitVector>,
    pub relative: RelativeScoreVector,
    pub weights: ContextWeightVector,
    pub constraint_set: Vec<usize>,
    /// `None` when the constraint is disabled.
    pub plausible: Option<PlausibleTokenSet>,
    pub distribution: ProbVector,
}

/// Runs one RMCD step over an already augmented context set and keeps the
/// intermediates.
pub fn rmcd_trace<B: Backend + ?Sized>(
    backend: &B,
    state: &PromptState,
    set: &RetrievedContextSet,
    config: &DecoderConfig,
) -> Result<RmcdTrace> {
    if set.is_empty() {
        return Err(Error::contract("RMCD needs at least one context"));
    }
    let logits = set
        .iter()
        .map(|c| backend.next_token_logits(state, Some(&c.text)))
        .collect::<Result<Vec<_>>>()?;
    let scores = set.scores();
    let relative = relative_scores(set, config.tau1)?;
    let weights = context_weights(&relative, &scores, config)?;
    let constraint_set = build_constraint_set(set, &relative, config);

    let (masked, plausible) = if config.constraint_mode == ConstraintMode::Disabled {
        (logits.clone(), None)
    } else {
        let members: Vec<&LogitVector> = constraint_set.iter().map(|&j| &logits[j]).collect();
        let member_scores: Vec<f64> = constraint_set.iter().map(|&j| scores[j]).collect();
        let p_tilde = ensemble_distribution(&members, &member_scores, config.tau2)?;
        let plausible = plausible_tokens(&p_tilde, config.beta);
        let keep = plausible.mask();
        let masked = logits.iter().map(|l| l.masked(&keep)).collect::<Result<Vec<_>>>()?;
        (masked, Some(plausible))
    };

    let refs: Vec<&LogitVector> = masked.iter().collect();
    let mut combined = weighted_logit_sum(&refs, &weights.summation_weights(config.deflection_enabled))?;
    if let Some(p) = &plausible {
        // the sum only preserves a mask through positive weights; reapply it
        combined = combined.masked(&p.mask())?;
    }
    let distribution = stable_softmax(&combined, 1.0)?;
    Ok(RmcdTrace {
        logits,
        relative,
        weights,
        constraint_set,
        plausible,
        distribution,
    })
}

/// The RMCD next-token distribution for an augmented context set.
pub fn rmcd_step<B: Backend + ?Sized>(
    backend: &B,
    state: &PromptState,
    set: &RetrievedContextSet,
    config: &DecoderConfig,
) -> Result<ProbVector> {
    rmcd_trace(backend, state, set, config).map(|t| t.distribution)
}

/// One step of a single-prompt baseline: unconditional, RAG on the top
/// context, SCD, or RAG on all contexts joined by newlines.
pub fn baseline_step<B: Backend + ?Sized>(
    method: Method,
    backend: &B,
    state: &PromptState,
    set: &RetrievedContextSet,
    config: &DecoderConfig,
) -> Result<ProbVector> {
    let contexts: Vec<&str> = set.iter().filter(|c| !c.is_sentinel()).map(|c| c.text.as_str()).collect();
    if method != Method::Unconditional && contexts.is_empty() {
        return Err(Error::contract(format!("{method} needs at least one retrieved context")));
    }
    let logits = match method {
        Method::Unconditional => backend.next_token_logits(state, None)?,
        Method::Rag => backend.next_token_logits(state, Some(contexts[0]))?,
        Method::Scd => {
            let with = backend.next_token_logits(state, Some(contexts[0]))?;
            let without = backend.next_token_logits(state, None)?;
            weighted_logit_sum(&[&with, &without], &[config.scd_alpha1, -config.scd_alpha2])?
        }
        Method::Concat => backend.next_token_logits(state, Some(&contexts.join("\n")))?,
        other => {
            return Err(Error::contract(format!("{other} has no single-step distribution")));
        }
    };
    stable_softmax(&logits, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Vocabulary;
    use crate::decoder::{augment_with_sentinel, EmptyContextMode, WeightScheme};
    use crate::kb::ScoredContext;
    use proptest::prelude::*;
    use std::collections::HashMap;

    /// Returns fixed logits per context text; `None` and "" share an entry.
    struct Table {
        vocab: Vocabulary,
        rows: HashMap<String, Vec<f64>>,
    }

    impl Table {
        fn new(rows: &[(&str, Vec<f64>)]) -> Self {
            let dim = rows[0].1.len();
            let words: Vec<String> = (3..dim).map(|i| format!("t{i}")).collect();
            Self {
                vocab: Vocabulary::new(words).unwrap(),
                rows: rows.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            }
        }
    }

    impl Backend for Table {
        fn vocabulary(&self) -> &Vocabulary {
            &self.vocab
        }

        fn next_token_logits(&self, _: &PromptState, context: Option<&str>) -> Result<LogitVector> {
            LogitVector::new(self.rows[context.unwrap_or("")].clone())
        }
    }

    fn contexts(items: &[(&str, f64)]) -> RetrievedContextSet {
        RetrievedContextSet::new(items.iter().map(|&(t, s)| ScoredContext::new(t, t, s)).collect()).unwrap()
    }

    fn state() -> PromptState {
        PromptState::new("What is the color of X?")
    }

    fn close(a: &ProbVector, b: &ProbVector, tol: f64) -> bool {
        a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn scd_example() {
        let t = Table::new(&[("c1", vec![2.0, 0.0]), ("", vec![1.0, 1.0])]);
        let p = baseline_step(Method::Scd, &t, &state(), &contexts(&[("c1", 1.0)]), &DecoderConfig::default()).unwrap();
        assert!((p.get(0) - 0.982_013_790_037_908_5).abs() < 1e-12);
        assert!((p.get(1) - 0.017_986_209_962_091_6).abs() < 1e-12);
    }

    #[test]
    fn degenerate_baselines_match_rag() {
        let t = Table::new(&[("c1", vec![0.3, 1.2, -0.4]), ("c2", vec![2.0, 0.0, 0.0]), ("", vec![1.0, 0.5, 0.0])]);
        let set = contexts(&[("c1", 2.0)]);
        let rag = baseline_step(Method::Rag, &t, &state(), &set, &DecoderConfig::default()).unwrap();
        let plain = DecoderConfig { scd_alpha1: 1.0, scd_alpha2: 0.0, ..DecoderConfig::default() };
        assert_eq!(baseline_step(Method::Scd, &t, &state(), &set, &plain).unwrap(), rag);
        assert_eq!(baseline_step(Method::Concat, &t, &state(), &set, &plain).unwrap(), rag);
        let empty = RetrievedContextSet::default();
        for m in [Method::Rag, Method::Scd, Method::Concat] {
            assert!(matches!(baseline_step(m, &t, &state(), &empty, &plain), Err(Error::Contract(_))));
        }
        assert!(baseline_step(Method::Unconditional, &t, &state(), &empty, &plain).is_ok());
        assert!(baseline_step(Method::Rmcd, &t, &state(), &set, &plain).is_err());
    }

    #[test]
    fn single_context_rmcd_is_scd() {
        let t = Table::new(&[("c1", vec![2.0, 0.0, 0.5]), ("", vec![1.0, 1.0, -0.2])]);
        let cfg = DecoderConfig {
            n_contexts: 1,
            max_weight: 2.0,
            min_weight: -1.0,
            constraint_mode: ConstraintMode::Disabled,
            ..DecoderConfig::default()
        };
        let set = contexts(&[("c1", 7.0)]);
        let aug = augment_with_sentinel(&set, EmptyContextMode::NegInf).unwrap();
        let trace = rmcd_trace(&t, &state(), &aug, &cfg).unwrap();
        assert_eq!(trace.weights.as_slice(), &[2.0, -1.0]);
        let scd = baseline_step(Method::Scd, &t, &state(), &set, &cfg).unwrap();
        assert!(close(&trace.distribution, &scd, 1e-12));
    }

    #[test]
    fn identical_contexts_keep_argmax() {
        let row = vec![0.1, 2.0, -1.0, 0.7];
        let t = Table::new(&[("a", row.clone()), ("b", row.clone()), ("c", row.clone()), ("", row.clone())]);
        let set = augment_with_sentinel(&contexts(&[("a", 3.0), ("b", 2.5), ("c", 1.0)]), EmptyContextMode::NegInf).unwrap();
        let cfg = DecoderConfig { constraint_mode: ConstraintMode::Disabled, ..DecoderConfig::default() };
        let trace = rmcd_trace(&t, &state(), &set, &cfg).unwrap();
        assert!(trace.weights.as_slice().iter().sum::<f64>() > 0.0);
        assert_eq!(crate::numerics::greedy_select(&trace.distribution), 1);
    }

    #[test]
    fn best_context_ensemble_is_top_context() {
        let t = Table::new(&[("a", vec![1.0, 0.0, 3.0]), ("b", vec![0.0, 4.0, 0.0]), ("", vec![0.0, 0.0, 0.0])]);
        let set = augment_with_sentinel(&contexts(&[("a", 3.0), ("b", 2.9)]), EmptyContextMode::NegInf).unwrap();
        let cfg = DecoderConfig { constraint_mode: ConstraintMode::BestContext, ..DecoderConfig::default() };
        let trace = rmcd_trace(&t, &state(), &set, &cfg).unwrap();
        let p = trace.plausible.unwrap();
        let top = LogitVector::new(t.rows["a"].clone()).unwrap();
        assert_eq!(p.p_tilde(), &stable_softmax(&top, 1.0).unwrap());
    }

    #[test]
    fn masked_tokens_get_exactly_zero() {
        let t = Table::new(&[
            ("a", vec![5.0, 0.0, 0.0, 4.0]),
            ("b", vec![0.0, 5.0, 0.0, 0.0]),
            ("", vec![0.0, 0.0, 9.0, 0.0]),
        ]);
        let set = augment_with_sentinel(&contexts(&[("a", 3.0), ("b", 1.0)]), EmptyContextMode::NegInf).unwrap();
        let trace = rmcd_trace(&t, &state(), &set, &DecoderConfig::default()).unwrap();
        let s = trace.plausible.unwrap();
        assert_eq!(s.members(), &[0, 3]);
        assert_eq!(trace.distribution.get(1), 0.0);
        assert_eq!(trace.distribution.get(2), 0.0);
    }

    #[test]
    fn masks_survive_nonpositive_weights() {
        // with every weight at or below zero the sum alone would revive masked tokens
        let t = Table::new(&[("a", vec![5.0, 0.0, 0.0]), ("", vec![0.0, 1.0, 2.0])]);
        let set = augment_with_sentinel(&contexts(&[("a", 1.0)]), EmptyContextMode::NegInf).unwrap();
        let cfg = DecoderConfig { max_weight: 0.0, min_weight: -1.0, ..DecoderConfig::default() };
        let trace = rmcd_trace(&t, &state(), &set, &cfg).unwrap();
        assert_eq!(trace.distribution.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn absolute_scheme_needs_positive_top_score() {
        let t = Table::new(&[("a", vec![1.0, 0.0]), ("", vec![0.0, 0.0])]);
        let set = augment_with_sentinel(&contexts(&[("a", 0.0)]), EmptyContextMode::NegInf).unwrap();
        let cfg = DecoderConfig { weight_scheme: WeightScheme::Absolute, ..DecoderConfig::default() };
        assert!(matches!(rmcd_step(&t, &state(), &set, &cfg), Err(Error::SchemeInapplicable(_))));
    }

    fn logit_rows(k: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-8.0f64..8.0, dim), k)
    }

    /// The last row is the no-context output; the others belong to c0, c1, ...
    fn table_for(rows: &[Vec<f64>]) -> (Table, Vec<String>) {
        let names: Vec<String> = (0..rows.len() - 1).map(|i| format!("c{i}")).collect();
        let mut entries: Vec<(&str, Vec<f64>)> = names.iter().map(|n| n.as_str()).zip(rows.iter().cloned()).collect();
        entries.push(("", rows[rows.len() - 1].clone()));
        (Table::new(&entries), names)
    }

    proptest! {
        #[test]
        fn shift_invariance(rows in logit_rows(6, 6), mut scores in prop::collection::vec(-5.0f64..15.0, 5), c in -50.0f64..50.0) {
            scores.sort_by(|a, b| b.total_cmp(a));
            let (t, names) = table_for(&rows);
            let build = |offset: f64| {
                let items: Vec<(&str, f64)> = names.iter().map(|n| n.as_str()).zip(scores.iter().map(|s| s + offset)).collect();
                augment_with_sentinel(&contexts(&items), EmptyContextMode::NegInf).unwrap()
            };
            let cfg = DecoderConfig::default();
            let a = rmcd_step(&t, &state(), &build(0.0), &cfg).unwrap();
            let b = rmcd_step(&t, &state(), &build(c), &cfg).unwrap();
            prop_assert!(close(&a, &b, 1e-9));
        }

        #[test]
        fn outputs_are_valid_distributions(rows in logit_rows(4, 5), mut scores in prop::collection::vec(-5.0f64..15.0, 3), mode in 0usize..3, constraint in 0usize..4) {
            scores.sort_by(|a, b| b.total_cmp(a));
            let (t, names) = table_for(&rows);
            let items: Vec<(&str, f64)> = names.iter().map(|n| n.as_str()).zip(scores.iter().copied()).collect();
            let mode = EmptyContextMode::ALL[mode];
            let set = augment_with_sentinel(&contexts(&items), mode).unwrap();
            let cfg = DecoderConfig { constraint_mode: ConstraintMode::ALL[constraint], empty_context_mode: mode, ..DecoderConfig::default() };
            let p = rmcd_step(&t, &state(), &set, &cfg).unwrap();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let plain = contexts(&items);
            for m in [Method::Unconditional, Method::Rag, Method::Scd] {
                let q = baseline_step(m, &t, &state(), &plain, &cfg).unwrap();
                prop_assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
