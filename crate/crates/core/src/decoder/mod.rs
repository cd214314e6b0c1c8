//! Decoding strategies: unconditional, RAG, single-context contrastive
//! decoding, consistency and max-probability voting, concatenation, and
//! relevance-aware multi-context contrastive decoding (RMCD) with its
//! ablation switches.

mod generate;
mod step;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{aggregate_answers, generate, normalize_answer, select_record, GenerationRecord};
pub use step::{baseline_step, rmcd_step, rmcd_trace, RmcdTrace};
pub use weights::{
    augment_with_sentinel, build_constraint_set, context_weights, ensemble_distribution,
    plausible_tokens, relative_scores, ContextWeightVector, PlausibleTokenSet, RelativeScoreVector,
};

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let key = s.trim().to_lowercase().replace('-', "_");
                match key.as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    _ => Err(Error::Config(format!(
                        "unknown {} {s:?}; expected one of {}",
                        stringify!($name),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(
    Method {
        Unconditional => "unconditional",
        Rag => "rag",
        Scd => "scd",
        Consistency => "consistency",
        MaxProbability => "max_probability" | "maxprob" | "max_prob",
        Concat => "concat",
        Rmcd => "rmcd",
    }
);

named_enum!(
    /// How the empty context joins the retrieved set.
    EmptyContextMode {
        NegInf => "neg_inf" | "neginf",
        Mean => "mean",
        Exclude => "exclude",
    }
);

named_enum!(
    /// Which contexts build the ensemble distribution behind the plausibility
    /// constraint.
    ConstraintMode {
        Threshold => "threshold",
        BestContext => "best_context",
        AllContexts => "all_contexts",
        Disabled => "disabled" | "none",
    }
);

named_enum!(
    WeightScheme {
        Relative => "relative",
        Absolute => "absolute",
        Uniform => "uniform",
    }
);

impl Method {
    /// Methods that produce one distribution per step from a single prompt.
    pub fn is_single_stream(self) -> bool {
        !matches!(self, Method::Consistency | Method::MaxProbability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Greedy,
    Nucleus { top_p: f64 },
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Greedy => f.write_str("greedy"),
            Sampling::Nucleus { top_p } => write!(f, "nucleus:{top_p}"),
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_lowercase();
        match s.split_once(':') {
            None if s == "greedy" => Ok(Sampling::Greedy),
            None if s == "nucleus" => Ok(Sampling::Nucleus { top_p: 0.9 }),
            Some(("nucleus", p)) => p
                .trim()
                .parse()
                .map(|top_p| Sampling::Nucleus { top_p })
                .map_err(|_| Error::Config(format!("bad nucleus mass {p:?}"))),
            _ => Err(Error::Config(format!(
                "unknown sampling {s:?}; expected greedy, nucleus or nucleus:<p>"
            ))),
        }
    }
}

/// Hyperparameters and switches shared by every decoding method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub gamma: f64,
    pub max_weight: f64,
    pub min_weight: f64,
    pub beta: f64,
    pub n_contexts: usize,
    pub scd_alpha1: f64,
    pub scd_alpha2: f64,
    pub method: Method,
    pub empty_context_mode: EmptyContextMode,
    pub deflection_enabled: bool,
    pub constraint_mode: ConstraintMode,
    pub weight_scheme: WeightScheme,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            tau1: 1.75,
            tau2: 0.5,
            gamma: 0.3,
            max_weight: 4.0,
            min_weight: -1.0,
            beta: 0.2,
            n_contexts: 5,
            scd_alpha1: 2.0,
            scd_alpha2: 1.0,
            method: Method::Rmcd,
            empty_context_mode: EmptyContextMode::NegInf,
            deflection_enabled: true,
            constraint_mode: ConstraintMode::Threshold,
            weight_scheme: WeightScheme::Relative,
            sampling: Sampling::Greedy,
            max_new_tokens: 32,
        }
    }
}

impl DecoderConfig {
    /// Keys accepted by [`DecoderConfig::set`], in field order.
    pub const KEYS: &'static [&'static str] = &[
        "tau1",
        "tau2",
        "gamma",
        "max_weight",
        "min_weight",
        "beta",
        "n_contexts",
        "scd_alpha1",
        "scd_alpha2",
        "method",
        "empty_context_mode",
        "deflection_enabled",
        "constraint_mode",
        "weight_scheme",
        "sampling",
        "max_new_tokens",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return bad(format!("temperatures must be positive (tau1={}, tau2={})", self.tau1, self.tau2));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.max_weight > self.min_weight) || !self.max_weight.is_finite() || !self.min_weight.is_finite() {
            return bad(format!(
                "max_weight {} must exceed min_weight {}",
                self.max_weight, self.min_weight
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.n_contexts == 0 {
            return bad("n_contexts must be at least 1".into());
        }
        if !(self.scd_alpha1.is_finite() && self.scd_alpha2.is_finite()) {
            return bad("scd coefficients must be finite".into());
        }
        if let Sampling::Nucleus { top_p } = self.sampling {
            if !(top_p > 0.0 && top_p <= 1.0) {
                return bad(format!("nucleus mass must lie in (0, 1], got {top_p}"));
            }
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "tau1" => self.tau1 = num(key, value)?,
            "tau2" => self.tau2 = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "max_weight" => self.max_weight = num(key, value)?,
            "min_weight" => self.min_weight = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "n_contexts" => self.n_contexts = num(key, value)?,
            "scd_alpha1" => self.scd_alpha1 = num(key, value)?,
            "scd_alpha2" => self.scd_alpha2 = num(key, value)?,
            "method" => self.method = value.parse()?,
            "empty_context_mode" => self.empty_context_mode = value.parse()?,
            "deflection_enabled" => self.deflection_enabled = num(key, value)?,
            "constraint_mode" => self.constraint_mode = value.parse()?,
            "weight_scheme" => self.weight_scheme = value.parse()?,
            "sampling" => self.sampling = value.parse()?,
            "max_new_tokens" => self.max_new_tokens = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown decoder key {key:?}"))),
        }
        Ok(())
    }

    /// Textual form of one field, the inverse of [`DecoderConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "tau1" => self.tau1.to_string(),
            "tau2" => self.tau2.to_string(),
            "gamma" => self.gamma.to_string(),
            "max_weight" => self.max_weight.to_string(),
            "min_weight" => self.min_weight.to_string(),
            "beta" => self.beta.to_string(),
            "n_contexts" => self.n_contexts.to_string(),
            "scd_alpha1" => self.scd_alpha1.to_string(),
            "scd_alpha2" => self.scd_alpha2.to_string(),
            "method" => self.method.to_string(),
            "empty_context_mode" => self.empty_context_mode.to_string(),
            "deflection_enabled" => self.deflection_enabled.to_string(),
            "constraint_mode" => self.constraint_mode.to_string(),
            "weight_scheme" => self.weight_scheme.to_string(),
            "sampling" => self.sampling.to_string(),
            "max_new_tokens" => self.max_new_tokens.to_string(),
            _ => return None,
        })
    }
}
