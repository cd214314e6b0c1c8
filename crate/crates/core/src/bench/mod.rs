//! Seeded experiment protocols over synthetic worlds: the knowledge-base size
//! sweep, oracle-context injection, ablations, the context-count sweep and
//! decoding-cost accounting.

mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{GroundedParams, GroundedWorldModel};
use crate::decoder::{generate, ConstraintMode, DecoderConfig, EmptyContextMode, Method, WeightScheme};
use crate::error::{Error, Result};
use crate::kb::{
    inject_oracle, recall_at_k, retrieve, Bm25, Bm25Params, QueryRecord, RetrievedContextSet, ScoredContext,
    SyntheticWorld, SyntheticWorldSpec,
};
use crate::seed::stream;

pub use config::{parse_config, ConfigFile};
pub use report::{emit_report, render_csv, render_json, Latency, MethodReport, Recall, Report, TierReport, CSV_HEADER};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// How a predicted answer is compared with the gold answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExactMatch,
    NumericRelaxed,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "exact_match" | "exact" => Ok(Metric::ExactMatch),
            "numeric_relaxed" | "relaxed" => Ok(Metric::NumericRelaxed),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

impl Metric {
    pub fn is_correct(self, prediction: &str, answers: &[String]) -> bool {
        match self {
            Metric::ExactMatch => exact_match(prediction, answers),
            Metric::NumericRelaxed => numeric_relaxed(prediction, answers),
        }
    }
}

pub fn exact_match(prediction: &str, answers: &[String]) -> bool {
    let p = crate::decoder::normalize_answer(prediction);
    answers.iter().any(|a| crate::decoder::normalize_answer(a) == p)
}

fn as_number(text: &str) -> Option<f64> {
    let t = crate::decoder::normalize_answer(text).replace(',', "");
    t.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Exact match, except that numeric answers within 10% of a numeric gold
/// answer also count.
pub fn numeric_relaxed(prediction: &str, answers: &[String]) -> bool {
    if exact_match(prediction, answers) {
        return true;
    }
    let Some(p) = as_number(prediction) else { return false };
    answers
        .iter()
        .filter_map(|a| as_number(a))
        .any(|g| (p - g).abs() <= 0.1 * g.abs())
}

/// Everything that determines a report, apart from wall-clock timings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    /// World shape; the distractor count is set per tier.
    pub world: SyntheticWorldSpec,
    /// Total knowledge-base sizes, strictly increasing.
    pub tiers: Vec<usize>,
    pub methods: Vec<Method>,
    pub decoder: DecoderConfig,
    pub method_overrides: BTreeMap<Method, DecoderConfig>,
    pub n_sweep: Vec<usize>,
    pub seed: u64,
    pub metric: Metric,
    pub backend: GroundedParams,
    pub bm25: Bm25Params,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            world: SyntheticWorldSpec::default(),
            tiers: vec![64, 1024, 16384],
            methods: Method::ALL.to_vec(),
            decoder: DecoderConfig::default(),
            method_overrides: BTreeMap::new(),
            n_sweep: vec![1, 2, 3, 4, 5],
            seed: 42,
            metric: Metric::ExactMatch,
            backend: GroundedParams::default(),
            bm25: Bm25Params::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.world.validate()?;
        self.decoder.validate()?;
        self.backend.validate()?;
        for c in self.method_overrides.values() {
            c.validate()?;
        }
        if self.tiers.is_empty() {
            return bad("at least one knowledge-base tier is required".into());
        }
        if self.tiers.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("tiers must be strictly increasing, got {:?}", self.tiers));
        }
        if self.tiers[0] < self.world.num_entities {
            return bad(format!(
                "tier {} is smaller than the {} oracle documents",
                self.tiers[0], self.world.num_entities
            ));
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.n_sweep.contains(&0) {
            return bad("context counts in the sweep must be positive".into());
        }
        Ok(())
    }

    /// The decoder configuration `method` runs with.
    pub fn config_for(&self, method: Method) -> DecoderConfig {
        let mut c = *self.method_overrides.get(&method).unwrap_or(&self.decoder);
        c.method = method;
        c
    }

    pub fn world_for_tier(&self, kb_size: usize) -> Result<SyntheticWorld> {
        let spec = SyntheticWorldSpec {
            num_distractor_docs: kb_size - self.world.num_entities,
            ..self.world.clone()
        };
        crate::kb::synthesize_world(&spec, self.seed)
    }
}

/// One decoder setup evaluated in a report row.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub method: Method,
    pub config: DecoderConfig,
}

impl Variant {
    pub fn new(name: impl Into<String>, method: Method, config: DecoderConfig) -> Self {
        Self {
            name: name.into(),
            method,
            config: DecoderConfig { method, ..config },
        }
    }
}

/// The nine RMCD variants of the ablation suite, full model first.
pub fn ablation_variants(base: &DecoderConfig) -> Vec<Variant> {
    let rmcd = |name: &str, c: DecoderConfig| Variant::new(name, Method::Rmcd, c);
    let b = *base;
    vec![
        rmcd("full", b),
        rmcd("no_deflection", DecoderConfig { deflection_enabled: false, ..b }),
        rmcd("best_context", DecoderConfig { constraint_mode: ConstraintMode::BestContext, ..b }),
        rmcd("all_contexts", DecoderConfig { constraint_mode: ConstraintMode::AllContexts, ..b }),
        rmcd("uniform", DecoderConfig { weight_scheme: WeightScheme::Uniform, ..b }),
        rmcd("absolute", DecoderConfig { weight_scheme: WeightScheme::Absolute, ..b }),
        rmcd("empty_exclude", DecoderConfig { empty_context_mode: EmptyContextMode::Exclude, ..b }),
        rmcd("empty_mean", DecoderConfig { empty_context_mode: EmptyContextMode::Mean, ..b }),
        rmcd("no_constraint", DecoderConfig { constraint_mode: ConstraintMode::Disabled, ..b }),
    ]
}

/// Per-query result of one variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub qid: String,
    pub answer: String,
    pub correct: bool,
    pub forward_calls: usize,
    pub streams: usize,
    pub stream_tokens: usize,
    #[serde(skip)]
    pub latency_ms: f64,
}

/// Retrieves `depth` contexts for every query, in query order.
pub fn retrieve_all(
    world: &SyntheticWorld,
    bm25: &Bm25,
    depth: usize,
) -> Result<Vec<RetrievedContextSet>> {
    world
        .queries
        .par_iter()
        .map(|q| retrieve(&world.kb, bm25, &q.question, depth))
        .collect()
}

fn oracle_context(world: &SyntheticWorld, q: &QueryRecord) -> Result<ScoredContext> {
    let doc = world
        .kb
        .get(&q.oracle_doc_id)
        .ok_or_else(|| Error::Ingest(format!("oracle {:?} of {} is missing", q.oracle_doc_id, q.qid)))?;
    Ok(ScoredContext::new(&doc.id, &doc.text, 0.0))
}

/// The contexts a variant sees for query `i`.
fn contexts_for(
    world: &SyntheticWorld,
    retrieved: &[RetrievedContextSet],
    i: usize,
    n: usize,
    oracle: bool,
) -> Result<RetrievedContextSet> {
    let set = retrieved[i].truncated(n);
    if oracle {
        inject_oracle(&set, oracle_context(world, &world.queries[i])?)
    } else {
        Ok(set)
    }
}

/// Runs every variant over every query of `world`.
pub fn evaluate_variants(
    world: &SyntheticWorld,
    backend: &GroundedWorldModel,
    retrieved: &[RetrievedContextSet],
    variants: &[Variant],
    spec: &ExperimentSpec,
    oracle: bool,
) -> Result<Vec<Vec<QueryOutcome>>> {
    variants
        .iter()
        .map(|v| {
            world
                .queries
                .par_iter()
                .enumerate()
                .map(|(i, q)| {
                    let set = contexts_for(world, retrieved, i, v.config.n_contexts, oracle)?;
                    let mut rng = stream(spec.seed, &[q.qid.as_bytes(), v.name.as_bytes()]);
                    let start = Instant::now();
                    let record = generate(v.method, backend, &q.question, &set, &v.config, &mut rng)?;
                    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
                    Ok(QueryOutcome {
                        qid: q.qid.clone(),
                        correct: spec.metric.is_correct(&record.answer, &q.answers),
                        answer: record.answer,
                        forward_calls: record.forward_calls,
                        streams: record.streams,
                        stream_tokens: record.stream_tokens,
                        latency_ms,
                    })
                })
                .collect()
        })
        .collect()
}

fn summarize(name: &str, outcomes: &[QueryOutcome]) -> MethodReport {
    let n = outcomes.len().max(1) as f64;
    let accuracy = outcomes.iter().filter(|o| o.correct).count() as f64 / n;
    let calls: usize = outcomes.iter().map(|o| o.forward_calls * o.streams).sum();
    let positions: usize = outcomes.iter().map(|o| o.stream_tokens).sum();
    let fwd = if positions == 0 { 0.0 } else { calls as f64 / positions as f64 };
    let latencies: Vec<f64> = outcomes.iter().map(|o| o.latency_ms).collect();
    MethodReport {
        name: name.to_string(),
        accuracy,
        fwd_calls_per_token: fwd,
        latency_ms: Latency::from_samples(&latencies),
    }
}

fn recall_of(world: &SyntheticWorld, sets: &[RetrievedContextSet]) -> Result<Recall> {
    Ok(Recall {
        at1: recall_at_k(sets, &world.queries, 1)?,
        at3: recall_at_k(sets, &world.queries, 3)?,
        at5: recall_at_k(sets, &world.queries, 5)?,
    })
}

fn run_tiers(
    spec: &ExperimentSpec,
    kind: &str,
    tiers: &[usize],
    variants: &[Variant],
    oracle: bool,
) -> Result<Report> {
    spec.validate()?;
    let bm25 = Bm25::new(spec.bm25);
    let depth = variants.iter().map(|v| v.config.n_contexts).max().unwrap_or(1).max(5);
    let mut out = Vec::with_capacity(tiers.len());
    for &kb_size in tiers {
        let world = spec.world_for_tier(kb_size)?;
        let backend = GroundedWorldModel::from_world(&world, spec.backend)?;
        let retrieved = retrieve_all(&world, &bm25, depth)?;
        let recall = if oracle {
            let injected = (0..world.queries.len())
                .map(|i| contexts_for(&world, &retrieved, i, 5, true))
                .collect::<Result<Vec<_>>>()?;
            recall_of(&world, &injected)?
        } else {
            recall_of(&world, &retrieved)?
        };
        let outcomes = evaluate_variants(&world, &backend, &retrieved, variants, spec, oracle)?;
        out.push(TierReport {
            kb_size,
            recall,
            methods: variants.iter().zip(&outcomes).map(|(v, o)| summarize(&v.name, o)).collect(),
        });
    }
    Ok(Report {
        kind: kind.to_string(),
        version: VERSION.to_string(),
        spec_echo: serde_json::to_value(spec).expect("spec serializes"),
        seed: spec.seed,
        tiers: out,
    })
}

fn method_variants(spec: &ExperimentSpec) -> Vec<Variant> {
    spec.methods
        .iter()
        .map(|&m| Variant::new(m.name(), m, spec.config_for(m)))
        .collect()
}

/// Every selected method on every knowledge-base tier.
pub fn run_benchmark(spec: &ExperimentSpec) -> Result<Report> {
    run_tiers(spec, "benchmark", &spec.tiers, &method_variants(spec), false)
}

/// As [`run_benchmark`], with each query's oracle document injected at rank 1.
pub fn run_oracle_experiment(spec: &ExperimentSpec) -> Result<Report> {
    run_tiers(spec, "oracle", &spec.tiers, &method_variants(spec), true)
}

/// Full RMCD and its eight single-switch variants on every tier.
pub fn run_ablation_suite(spec: &ExperimentSpec) -> Result<Report> {
    let variants = ablation_variants(&spec.config_for(Method::Rmcd));
    run_tiers(spec, "ablation", &spec.tiers, &variants, false)
}

/// Every selected method at every context count of the sweep.
pub fn run_context_sweep(spec: &ExperimentSpec) -> Result<Report> {
    let variants: Vec<Variant> = spec
        .n_sweep
        .iter()
        .flat_map(|&n| {
            spec.methods.iter().map(move |&m| {
                let c = DecoderConfig { n_contexts: n, ..spec.config_for(m) };
                Variant::new(format!("{m} n={n}"), m, c)
            })
        })
        .collect();
    run_tiers(spec, "context_sweep", &spec.tiers, &variants, false)
}

/// Forward passes per generated token for every method at each context count,
/// measured on the smallest tier.
pub fn run_cost_accounting(spec: &ExperimentSpec, counts: &[usize]) -> Result<Report> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("context counts must be positive".into()));
    }
    let variants: Vec<Variant> = counts
        .iter()
        .flat_map(|&n| {
            spec.methods.iter().map(move |&m| {
                let c = DecoderConfig { n_contexts: n, ..spec.config_for(m) };
                Variant::new(format!("{m} n={n}"), m, c)
            })
        })
        .collect();
    run_tiers(spec, "cost", &spec.tiers[..1], &variants, false)
}

/// Expected forward passes per token for `method` with `n` contexts.
pub fn expected_calls_per_token(method: Method, n: usize, mode: EmptyContextMode) -> usize {
    match method {
        Method::Unconditional | Method::Rag | Method::Concat => 1,
        Method::Scd => 2,
        Method::Consistency | Method::MaxProbability => n,
        Method::Rmcd if mode == EmptyContextMode::Exclude => n,
        Method::Rmcd => n + 1,
    }
}
