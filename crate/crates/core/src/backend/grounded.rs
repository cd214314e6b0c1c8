use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, PromptState, Vocabulary, EOS};
use crate::error::{Error, Result};
use crate::kb::{tokenize, Document, QueryRecord, SyntheticWorld};
use crate::numerics::{LogitVector, TokenId};
use crate::seed::stream;

const NOISE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundedParams {
    /// Boost for the first token of a value found in the context (κ).
    pub kappa: f64,
    /// Boost for continuing a value already begun, and for EOS once it is complete.
    pub continuation_kappa: f64,
    pub prior_temperature: f64,
    pub noise_seed: u64,
    /// Multiplier on the first-token boost of a context whose leading
    /// `entity:` line names a different entity than the question. 1.0 ignores
    /// entity identity.
    pub mismatch_factor: f64,
}

impl Default for GroundedParams {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            continuation_kappa: 8.0,
            prior_temperature: 1.0,
            noise_seed: 0,
            mismatch_factor: 0.3,
        }
    }
}

impl GroundedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.continuation_kappa > 0.0) {
            return Err(Error::Config("boost strengths must be positive".into()));
        }
        if !(self.prior_temperature > 0.0) {
            return Err(Error::Config("prior temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mismatch_factor) {
            return Err(Error::Config("mismatch_factor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A desk-scale language model over the attribute facts of a knowledge base.
///
/// Without context the next token follows a near-uniform prior over value
/// tokens and EOS. A context boosts the next token of every value written on a
/// line keyed by the question's attribute, whichever entity that line belongs
/// to, and boosts EOS once such a value has been emitted in full.
#[derive(Debug, Clone)]
pub struct GroundedWorldModel {
    vocab: Vocabulary,
    support: Vec<TokenId>,
    facts: BTreeMap<String, BTreeMap<String, String>>,
    params: GroundedParams,
}

fn split_line(line: &str) -> Option<(String, &str)> {
    let (key, value) = line.split_once(':')?;
    Some((key.trim().to_lowercase(), value.trim()))
}

/// Splits "What is the <attribute> of <entity>?" into the lowercase attribute
/// and the entity's tokens.
pub fn parse_question(question: &str) -> Result<(String, Vec<String>)> {
    let bad = || Error::contract(format!("question {question:?} does not match the template"));
    let q = question.trim();
    let head = "what is the ";
    if q.len() < head.len() || !q[..head.len()].eq_ignore_ascii_case(head) {
        return Err(bad());
    }
    let rest = q[head.len()..].trim_end_matches('?');
    let (attr, entity) = rest.split_once(" of ").ok_or_else(bad)?;
    let attr = attr.trim().to_lowercase();
    let entity = tokenize(entity);
    if attr.is_empty() || entity.is_empty() {
        return Err(bad());
    }
    Ok((attr, entity))
}

impl GroundedWorldModel {
    /// Reads `entity:` and `<attribute>: <value>` lines from `docs`. The value
    /// tokens, and the words of every question and answer, form the vocabulary.
    pub fn from_documents(docs: &[Document], queries: &[QueryRecord], params: GroundedParams) -> Result<Self> {
        params.validate()?;
        let mut facts: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut value_words: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut add_value = |w: String, out: &mut Vec<String>| {
            if seen.insert(w.clone()) {
                out.push(w);
            }
        };
        for doc in docs {
            let mut entity = String::new();
            for line in doc.text.lines() {
                let Some((key, value)) = split_line(line) else { continue };
                match key.as_str() {
                    "entity" => entity = tokenize(value).join(" "),
                    "related" => {}
                    _ => {
                        let tokens = tokenize(value);
                        if tokens.is_empty() {
                            continue;
                        }
                        for t in &tokens {
                            add_value(t.clone(), &mut value_words);
                        }
                        facts
                            .entry(entity.clone())
                            .or_default()
                            .entry(key)
                            .or_insert_with(|| tokens.join(" "));
                    }
                }
            }
        }
        for q in queries {
            for a in &q.answers {
                let tokens = tokenize(a);
                if tokens.is_empty() {
                    return Err(Error::contract(format!("answer {a:?} of {} has no tokens", q.qid)));
                }
                for t in tokens {
                    add_value(t, &mut value_words);
                }
            }
        }
        let n_values = value_words.len();
        let mut words = value_words;
        for q in queries {
            words.extend(tokenize(&q.question));
        }
        let vocab = Vocabulary::new(words)?;
        let mut support: Vec<TokenId> = (0..n_values).map(|i| i + Vocabulary::RESERVED.len()).collect();
        support.push(EOS);
        support.sort_unstable();
        Ok(Self {
            vocab,
            support,
            facts,
            params,
        })
    }

    pub fn from_world(world: &SyntheticWorld, params: GroundedParams) -> Result<Self> {
        Self::from_documents(world.kb.documents(), &world.queries, params)
    }

    pub fn params(&self) -> &GroundedParams {
        &self.params
    }

    /// Entity name, then attribute, then value.
    pub fn facts(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.facts
    }

    /// Token ids the prior gives finite mass to: value tokens and EOS.
    pub fn support(&self) -> &[TokenId] {
        &self.support
    }

    pub fn encode_value(&self, value: &str) -> Vec<TokenId> {
        tokenize(value).iter().map(|t| self.vocab.encode(t)).collect()
    }

    /// The prior logits for `state`, before any context boost.
    pub fn prior_logits(&self, state: &PromptState) -> Vec<f64> {
        let mut logits = vec![f64::NEG_INFINITY; self.vocab.len()];
        let base = -(self.support.len() as f64).ln();
        let prefix: Vec<u8> = state.prefix().iter().flat_map(|t| (*t as u64).to_le_bytes()).collect();
        let mut rng = stream(self.params.noise_seed, &[state.question.as_bytes(), &prefix]);
        for &t in &self.support {
            let noise: f64 = rng.gen_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
            logits[t] = base + noise / self.params.prior_temperature;
        }
        logits
    }

    /// Per-token boost multipliers contributed by `context`.
    fn boosts(&self, attr: &str, entity: &[String], prefix: &[TokenId], context: &str) -> Vec<(TokenId, f64)> {
        let mut lines = context.lines().filter(|l| !l.trim().is_empty()).peekable();
        let relevance = match lines.peek().and_then(|l| split_line(l)) {
            Some((key, value)) if key == "entity" && tokenize(value) != entity => self.params.mismatch_factor,
            _ => 1.0,
        };
        let mut out: Vec<(TokenId, f64)> = Vec::new();
        for line in lines {
            let Some((key, value)) = split_line(line) else { continue };
            if key != attr {
                continue;
            }
            let Some(ids) = tokenize(value).iter().map(|t| self.vocab.id(t)).collect::<Option<Vec<_>>>() else {
                continue;
            };
            if ids.is_empty() || !ids.starts_with(prefix) {
                continue;
            }
            let (target, strength) = match ids.get(prefix.len()) {
                Some(&next) if prefix.is_empty() => (next, self.params.kappa * relevance),
                Some(&next) => (next, self.params.continuation_kappa),
                None => (EOS, self.params.continuation_kappa),
            };
            match out.iter_mut().find(|(t, _)| *t == target) {
                Some(slot) => slot.1 = slot.1.max(strength),
                None => out.push((target, strength)),
            }
        }
        out
    }
}

/// Prior logits plus the context boost. See [`GroundedWorldModel`].
pub fn grounded_logits(
    world: &GroundedWorldModel,
    state: &PromptState,
    context: Option<&str>,
) -> Result<LogitVector> {
    if state.is_finished() {
        return Err(Error::contract("prefix already ended with EOS"));
    }
    let (attr, entity) = parse_question(&state.question)?;
    let mut logits = world.prior_logits(state);
    if let Some(text) = context.filter(|c| !c.is_empty()) {
        for (token, boost) in world.boosts(&attr, &entity, state.prefix(), text) {
            logits[token] += boost;
        }
    }
    LogitVector::new(logits)
}

impl Backend for GroundedWorldModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logits(&self, state: &PromptState, context: Option<&str>) -> Result<LogitVector> {
        grounded_logits(self, state, context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            title: String::new(),
            text: text.into(),
            entity_id: String::new(),
        }
    }

    fn query(question: &str, answer: &str) -> QueryRecord {
        QueryRecord {
            qid: "q".into(),
            question: question.into(),
            answers: vec![answer.into()],
            oracle_doc_id: "a".into(),
        }
    }

    const Q: &str = "What is the color of Alda Morv?";

    fn model(params: GroundedParams) -> GroundedWorldModel {
        let docs = vec![
            doc("a", "entity: alda morv\ncolor: red\nsize: big tall"),
            doc("b", "entity: bren kol\ncolor: blue\nsize: small"),
            doc("c", "entity: alda tesh\ncolor: green wide"),
        ];
        GroundedWorldModel::from_documents(&docs, &[query(Q, "red")], params).unwrap()
    }

    fn spread(logits: &[f64]) -> f64 {
        let finite: Vec<f64> = logits.iter().copied().filter(|x| x.is_finite()).collect();
        finite.iter().cloned().fold(f64::MIN, f64::max) - finite.iter().cloned().fold(f64::MAX, f64::min)
    }

    #[test]
    fn question_template() {
        let (a, e) = parse_question(Q).unwrap();
        assert_eq!(a, "color");
        assert_eq!(e, vec!["alda", "morv"]);
        assert!(parse_question("Who is Alda Morv?").is_err());
        assert!(parse_question("What is the color of ?").is_err());
    }

    #[test]
    fn deterministic_and_empty_context_is_unconditional() {
        let m = model(GroundedParams::default());
        let s = PromptState::new(Q);
        let a = m.next_token_logits(&s, Some("entity: alda morv\ncolor: red")).unwrap();
        let b = m.next_token_logits(&s, Some("entity: alda morv\ncolor: red")).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.next_token_logits(&s, None).unwrap(), m.next_token_logits(&s, Some("")).unwrap());
    }

    #[test]
    fn prior_is_near_uniform_over_values() {
        let m = model(GroundedParams::default());
        let logits = m.next_token_logits(&PromptState::new(Q), None).unwrap();
        let finite = logits.as_slice().iter().filter(|x| x.is_finite()).count();
        // red, big, tall, blue, small, green, wide, EOS
        assert_eq!(finite, 8);
        assert!(spread(logits.as_slice()) <= 2.0 * NOISE_AMPLITUDE);
        let v = m.vocabulary();
        assert_eq!(logits.as_slice()[v.id("color").unwrap()], f64::NEG_INFINITY);
    }

    #[test]
    fn relevant_context_boosts_its_value() {
        let m = model(GroundedParams::default());
        let s = PromptState::new(Q);
        let logits = m.next_token_logits(&s, Some("color: red")).unwrap();
        let red = m.vocabulary().id("red").unwrap();
        let l = logits.as_slice();
        assert!(l.iter().enumerate().all(|(i, &x)| i == red || x < l[red]));
        let prior = m.prior_logits(&s);
        assert!((l[red] - prior[red] - m.params().kappa).abs() < 1e-12);
    }

    #[test]
    fn distractor_context_boosts_wrong_value() {
        let m = model(GroundedParams::default());
        let s = PromptState::new(Q);
        let logits = m.next_token_logits(&s, Some("entity: bren kol\ncolor: blue")).unwrap();
        assert_eq!(logits.argmax(), m.vocabulary().id("blue").unwrap());
    }

    #[test]
    fn mismatch_factor_scales_other_entities() {
        let m = model(GroundedParams {
            kappa: 10.0,
            continuation_kappa: 12.0,
            mismatch_factor: 0.5,
            ..GroundedParams::default()
        });
        let s = PromptState::new(Q);
        let prior = m.prior_logits(&s);
        let blue = m.vocabulary().id("blue").unwrap();
        let l = m.next_token_logits(&s, Some("entity: bren kol\ncolor: blue")).unwrap();
        assert!((l.as_slice()[blue] - prior[blue] - 5.0).abs() < 1e-12);
        // a context without a leading entity line counts as relevant
        let l = m.next_token_logits(&s, Some("color: blue\nentity: bren kol")).unwrap();
        assert!((l.as_slice()[blue] - prior[blue] - 10.0).abs() < 1e-12);
        // only the first token is discounted
        let v = m.vocabulary();
        let s = PromptState::with_prefix(Q, vec![v.id("green").unwrap()]).unwrap();
        let wide = v.id("wide").unwrap();
        let l = m.next_token_logits(&s, Some("entity: alda tesh\ncolor: green wide")).unwrap();
        assert!((l.as_slice()[wide] - m.prior_logits(&s)[wide] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn multi_token_values_then_eos() {
        let m = model(GroundedParams {
            continuation_kappa: 12.0,
            ..GroundedParams::default()
        });
        let v = m.vocabulary();
        let ctx = "entity: alda tesh\ncolor: green wide";
        let (green, wide) = (v.id("green").unwrap(), v.id("wide").unwrap());
        let s = PromptState::with_prefix(Q, vec![green]).unwrap();
        let l = m.next_token_logits(&s, Some(ctx)).unwrap();
        assert_eq!(l.argmax(), wide);
        assert!((l.as_slice()[wide] - m.prior_logits(&s)[wide] - 12.0).abs() < 1e-12);
        let s = PromptState::with_prefix(Q, vec![green, wide]).unwrap();
        assert_eq!(m.next_token_logits(&s, Some(ctx)).unwrap().argmax(), EOS);
        // a diverged prefix gets no boost at all
        let s = PromptState::with_prefix(Q, vec![wide]).unwrap();
        let l = m.next_token_logits(&s, Some(ctx)).unwrap();
        assert_eq!(l.as_slice(), m.prior_logits(&s).as_slice());
    }

    #[test]
    fn duplicate_lines_do_not_stack() {
        let m = model(GroundedParams::default());
        let s = PromptState::new(Q);
        let red = m.vocabulary().id("red").unwrap();
        let once = m.next_token_logits(&s, Some("color: red")).unwrap();
        let twice = m.next_token_logits(&s, Some("color: red\ncolor: red")).unwrap();
        assert_eq!(once.as_slice()[red], twice.as_slice()[red]);
    }

    #[test]
    fn finished_prefix_and_bad_question_rejected() {
        let m = model(GroundedParams::default());
        let s = PromptState::with_prefix(Q, vec![EOS]).unwrap();
        assert!(matches!(m.next_token_logits(&s, None), Err(Error::Contract(_))));
        assert!(m.next_token_logits(&PromptState::new("hello"), None).is_err());
    }

    #[test]
    fn facts_table() {
        let m = model(GroundedParams::default());
        assert_eq!(m.facts()["alda morv"]["size"], "big tall");
        assert_eq!(m.facts()["alda tesh"]["color"], "green wide");
    }
}
