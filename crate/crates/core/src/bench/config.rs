//! Flat `key = value` experiment files.
//!
//! Blank lines and `#` comments are ignored. Decoder keys apply to every
//! method; prefixing one with a method name (`rmcd.tau1 = 2`) applies it to
//! that method only.

use std::str::FromStr;

use super::{ExperimentSpec, Metric};
use crate::decoder::{DecoderConfig, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    /// `(line, key, value)` in file order.
    pub entries: Vec<(usize, String, String)>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
        }
        entries.push((i + 1, key.to_string(), value.trim().to_string()));
    }
    Ok(ConfigFile { entries })
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentSpec {
    /// Applies every entry of `file`, method-specific decoder keys last.
    pub fn apply_config(&mut self, file: &ConfigFile) -> Result<()> {
        let at = |line: usize| move |e: Error| Error::Parse { line, msg: e.to_string() };
        let mut overrides = Vec::new();
        for (line, key, value) in &file.entries {
            if let Some((method, field)) = key.split_once('.') {
                let method: Method = method.parse().map_err(at(*line))?;
                overrides.push((*line, method, field.to_string(), value.clone()));
                continue;
            }
            self.set(key, value).map_err(at(*line))?;
        }
        for (line, method, field, value) in overrides {
            let mut c = self.config_for(method);
            c.set(&field, &value).map_err(at(line))?;
            self.method_overrides.insert(method, c);
        }
        Ok(())
    }

    /// Sets one top-level key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.world;
        let g = &mut self.backend;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "backend" if value == "grounded" => {}
            "backend" => return Err(Error::Config(format!("unknown backend {value:?}; only `grounded` exists"))),
            "tiers" => self.tiers = list(key, value)?,
            "methods" => self.methods = list(key, value)?,
            "n_sweep" => self.n_sweep = list(key, value)?,
            "metric" => self.metric = value.parse::<Metric>()?,
            "num_entities" | "entities" => w.num_entities = parse(key, value)?,
            "attributes_per_entity" => w.attributes_per_entity = parse(key, value)?,
            "value_vocab_size" => w.value_vocab_size = parse(key, value)?,
            "max_value_tokens" => w.max_value_tokens = parse(key, value)?,
            "name_pool_size" => w.name_pool_size = parse(key, value)?,
            "name_share_rate" => w.name_share_rate = parse(key, value)?,
            "related_rate" => w.related_rate = parse(key, value)?,
            "rumor_rate" => w.rumor_rate = parse(key, value)?,
            "distractor_attributes" => {
                let (lo, hi) = value
                    .split_once(['-', ','])
                    .ok_or_else(|| Error::Config(format!("{key}: expected `lo-hi`, got {value:?}")))?;
                w.distractor_attributes = (parse(key, lo.trim())?, parse(key, hi.trim())?);
            }
            "kappa" => g.kappa = parse(key, value)?,
            "continuation_kappa" => g.continuation_kappa = parse(key, value)?,
            "prior_temperature" => g.prior_temperature = parse(key, value)?,
            "noise_seed" => g.noise_seed = parse(key, value)?,
            "mismatch_factor" => g.mismatch_factor = parse(key, value)?,
            "k1" => self.bm25.k1 = parse(key, value)?,
            "b" => self.bm25.b = parse(key, value)?,
            "clamp_idf" => self.bm25.clamp_idf = parse(key, value)?,
            _ if DecoderConfig::KEYS.contains(&key) => {
                self.decoder.set(key, value)?;
                for c in self.method_overrides.values_mut() {
                    c.set(key, value)?;
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}
