//! Vector operations over logits and probabilities shared by every decoder.
//!
//! Masked entries are carried as `f64::NEG_INFINITY` rather than a large
//! negative number, so a masked token keeps probability exactly zero through
//! any chain of softmax and weighted sums.

use rand::Rng;

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Per-vocabulary scores. Entries may be `-inf`; at least one is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::contract("logits must be finite or -inf"));
        }
        if !scores.iter().any(|x| x.is_finite()) {
            return Err(Error::degenerate("every logit is -inf"));
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest finite entry, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        argmax_lowest(&self.0)
    }

    /// Copy with every entry whose `keep` flag is false replaced by `-inf`.
    pub fn masked(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.0.len() {
            return Err(Error::contract(format!(
                "mask length {} does not match logits length {}",
                keep.len(),
                self.0.len()
            )));
        }
        let scores = self
            .0
            .iter()
            .zip(keep)
            .map(|(&x, &k)| if k { x } else { f64::NEG_INFINITY })
            .collect();
        Self::new(scores)
    }
}

/// A probability distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Validates non-negativity and unit mass.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::contract("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.0[id]
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}

/// Softmax of `logits / temperature` with the max finite entry subtracted first.
pub fn stable_softmax(logits: &LogitVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::contract(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    softmax_slice(logits.as_slice(), temperature).map(ProbVector)
}

/// Softmax over a raw slice; shared by the score-level softmaxes in the decoder.
pub(crate) fn softmax_slice(xs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let max = xs
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::degenerate("softmax over all -inf entries"));
    }
    let mut out: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x == f64::NEG_INFINITY {
                0.0
            } else {
                ((x - max) / temperature).exp()
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// Entrywise `sum_j weights[j] * logits[j]`.
///
/// A `-inf` entry with positive weight keeps the result at `-inf`; with zero or
/// negative weight it contributes nothing.
pub fn weighted_logit_sum(logits: &[&LogitVector], weights: &[f64]) -> Result<LogitVector> {
    if logits.is_empty() {
        return Err(Error::contract("weighted sum over no logit vectors"));
    }
    if logits.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} logit vectors but {} weights",
            logits.len(),
            weights.len()
        )));
    }
    let dim = logits[0].len();
    if let Some(bad) = logits.iter().find(|l| l.len() != dim) {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            dim,
            bad.len()
        )));
    }
    let mut out = vec![0.0; dim];
    for (l, &w) in logits.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (acc, &x) in out.iter_mut().zip(l.as_slice()) {
            if x == f64::NEG_INFINITY {
                if w > 0.0 {
                    *acc = f64::NEG_INFINITY;
                }
            } else if *acc != f64::NEG_INFINITY {
                *acc += w * x;
            }
        }
    }
    LogitVector::new(out)
}

/// Argmax with ties resolved to the lowest token id.
pub fn greedy_select(probs: &ProbVector) -> TokenId {
    argmax_lowest(probs.as_slice())
}

/// Draws from the smallest descending-probability prefix whose mass reaches
/// `top_p`, renormalized.
///
/// # Panics
///
/// If `top_p` is outside `(0, 1]`.
pub fn nucleus_sample<R: Rng + ?Sized>(probs: &ProbVector, top_p: f64, rng: &mut R) -> TokenId {
    assert!(
        top_p > 0.0 && top_p <= 1.0,
        "top_p must lie in (0, 1], got {top_p}"
    );
    let mut order: Vec<TokenId> = (0..probs.len()).filter(|&i| probs.get(i) > 0.0).collect();
    order.sort_by(|&a, &b| probs.get(b).total_cmp(&probs.get(a)).then(a.cmp(&b)));

    let mut cut = order.len();
    let mut mass = 0.0;
    for (rank, &id) in order.iter().enumerate() {
        mass += probs.get(id);
        // small slack so a nucleus that sums to top_p in exact arithmetic is not overshot
        if mass >= top_p - 1e-12 {
            cut = rank + 1;
            break;
        }
    }
    let nucleus = &order[..cut];
    let nucleus_mass: f64 = nucleus.iter().map(|&id| probs.get(id)).sum();

    let draw = rng.gen::<f64>() * nucleus_mass;
    let mut acc = 0.0;
    for &id in nucleus {
        acc += probs.get(id);
        if draw < acc {
            return id;
        }
    }
    *nucleus.last().expect("a valid distribution has a non-empty support")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lv(xs: &[f64]) -> LogitVector {
        LogitVector::new(xs.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_symmetric_pair() {
        let p = stable_softmax(&lv(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_masked_entry_is_exactly_zero() {
        for x in [-30.0, 0.0, 2.5, 700.0] {
            let p = stable_softmax(&lv(&[x, f64::NEG_INFINITY]), 1.0).unwrap();
            assert_eq!(p.as_slice(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn softmax_three_way_reference() {
        // e^2, e^1, e^0 normalised by hand: 7.389056/11.107338 etc.
        let p = stable_softmax(&lv(&[2.0, 1.0, 0.0]), 1.0).unwrap();
        assert!(close(p.as_slice(), &[0.665241, 0.244728, 0.090031], 1e-6));
    }

    #[test]
    fn softmax_rejects_all_masked_and_bad_temperature() {
        let err = LogitVector::new(vec![f64::NEG_INFINITY; 3]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(stable_softmax(&lv(&[1.0]), 0.0).is_err());
        assert!(stable_softmax(&lv(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        let a = lv(&[2.0, 0.0]);
        let b = lv(&[1.0, 1.0]);
        assert_eq!(weighted_logit_sum(&[&a], &[1.0]).unwrap(), a);
        assert_eq!(
            weighted_logit_sum(&[&a, &b], &[0.0, 0.0]).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        assert_eq!(
            weighted_logit_sum(&[&a, &b], &[2.0, -1.0]).unwrap().as_slice(),
            &[3.0, -1.0]
        );
    }

    #[test]
    fn weighted_sum_masking_rule() {
        let masked = lv(&[f64::NEG_INFINITY, 1.0]);
        let plain = lv(&[2.0, 2.0]);
        let pos = weighted_logit_sum(&[&masked, &plain], &[1.0, 1.0]).unwrap();
        assert_eq!(pos.as_slice(), &[f64::NEG_INFINITY, 3.0]);
        let neg = weighted_logit_sum(&[&masked, &plain], &[-1.0, 1.0]).unwrap();
        assert_eq!(neg.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn weighted_sum_dimension_mismatch() {
        let a = lv(&[1.0, 2.0]);
        let b = lv(&[1.0]);
        assert!(matches!(
            weighted_logit_sum(&[&a, &b], &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            weighted_logit_sum(&[&a], &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn greedy_examples() {
        let p = ProbVector::from_probs(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(greedy_select(&p), 1);
        let tie = ProbVector::from_probs(vec![0.5, 0.5]).unwrap();
        assert_eq!(greedy_select(&tie), 0);
        let sm = stable_softmax(&lv(&[3.0, -1.0]), 1.0).unwrap();
        assert_eq!(greedy_select(&sm), 0);
    }

    #[test]
    fn nucleus_point_mass() {
        let p = ProbVector::from_probs(vec![1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for top_p in [0.1, 0.5, 1.0] {
            for _ in 0..100 {
                assert_eq!(nucleus_sample(&p, top_p, &mut rng), 0);
            }
        }
    }

    #[test]
    fn nucleus_frequencies_match_renormalized_head() {
        let p = ProbVector::from_probs(vec![0.6, 0.3, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[nucleus_sample(&p, 0.8, &mut rng)] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        assert!((freq[0] - 2.0 / 3.0).abs() < 0.01, "{freq:?}");
        assert!((freq[1] - 1.0 / 3.0).abs() < 0.01, "{freq:?}");
        assert_eq!(counts[2], 0);
    }

    #[test]
    fn nucleus_full_mass_reaches_tail() {
        let p = ProbVector::from_probs(vec![0.6, 0.3, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false; 3];
        for _ in 0..10_000 {
            seen[nucleus_sample(&p, 1.0, &mut rng)] = true;
        }
        assert_eq!(seen, [true, true, true]);
    }

    #[test]
    fn nucleus_is_seed_deterministic() {
        let p = ProbVector::from_probs(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| nucleus_sample(&p, 0.9, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::from_probs(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::from_probs(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::from_probs(vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn logits() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-20.0f64..20.0, 1..24)
        }

        proptest! {
            #[test]
            fn shift_invariance(xs in logits(), c in -50.0f64..50.0, t in 0.1f64..5.0) {
                let a = stable_softmax(&lv(&xs), t).unwrap();
                let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
                let b = stable_softmax(&lv(&shifted), t).unwrap();
                prop_assert!(close(a.as_slice(), b.as_slice(), 1e-12));
            }

            #[test]
            fn low_temperature_concentrates(xs in prop::collection::vec(-5.0f64..5.0, 2..16)) {
                let mut sorted = xs.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                prop_assume!(sorted[0] - sorted[1] > 1e-4);
                let p = stable_softmax(&lv(&xs), 1e-6).unwrap();
                prop_assert!(p.get(lv(&xs).argmax()) > 0.999);
            }

            #[test]
            fn weighted_sum_is_linear(xs in logits(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let l = lv(&xs);
                let split = weighted_logit_sum(&[&l, &l], &[a, b]).unwrap();
                let joined = weighted_logit_sum(&[&l], &[a + b]).unwrap();
                prop_assert!(close(split.as_slice(), joined.as_slice(), 1e-12));
            }

            #[test]
            fn greedy_matches_logit_argmax(
                xs in logits(),
                mask in prop::collection::vec(any::<bool>(), 24),
                t in 0.05f64..10.0,
            ) {
                let mut ys = xs.clone();
                for (y, m) in ys.iter_mut().zip(&mask) {
                    if *m { *y = f64::NEG_INFINITY; }
                }
                prop_assume!(ys.iter().any(|y| y.is_finite()));
                let l = lv(&ys);
                let p = stable_softmax(&l, t).unwrap();
                prop_assert_eq!(greedy_select(&p), l.argmax());
                prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (q, y) in p.as_slice().iter().zip(&ys) {
                    if *y == f64::NEG_INFINITY { prop_assert_eq!(*q, 0.0); }
                }
            }
        }
    }
}
