//! Config resolution: flags over the JSON file over built-in defaults.

use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lqre_core::datakit::{QaCorpusConfig, ToyWorldConfig};
use lqre_core::pipeline::InferConfig;
use lqre_core::runner::{EvalMode, PretrainConfig, RunConfig};
use lqre_core::{Error, ObjectiveKind};

use crate::SamplerArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub world: ToyWorldConfig,
    pub qa: QaCorpusConfig,
    /// Add relation-swapped negatives to the train split.
    pub negs: bool,
    pub pretrain: PretrainConfig,
    /// Fraction of the pretraining corpus held out.
    pub held_out: f64,
    pub run: RunConfig,
    pub eval_mode: EvalMode,
    pub infer: InferConfig,
    /// Question length limit applied to loaded generators.
    pub max_len: Option<usize>,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            world: ToyWorldConfig::default(),
            qa: QaCorpusConfig::default(),
            negs: false,
            pretrain: PretrainConfig::default(),
            held_out: 0.1,
            run: RunConfig::default(),
            eval_mode: EvalMode::Both,
            infer: InferConfig::default(),
            max_len: None,
        }
    }
}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.world.seed = s;
            self.qa.seed = s;
            self.pretrain.seed = s;
            self.run.seed = s;
            self.run.sampler.seed = s;
        }
    }

    pub fn apply_sampler(&mut self, a: &SamplerArgs) {
        set(&mut self.run.sampler.p, a.p);
        set(&mut self.run.sampler.n_samples, a.samples);
        set(&mut self.run.sampler.beam_size, a.beam);
        if a.beam.is_some() {
            self.infer.beam_size = self.run.sampler.beam_size;
        }
        if a.max_len.is_some() {
            self.max_len = a.max_len;
        }
    }
}

pub fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses a flag value through the type's serde names.
pub fn parse_named<T: DeserializeOwned>(what: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_ascii_lowercase()))
        .map_err(|_| config_error(format!("unknown {what} {value:?}")))
}

pub fn parse_objective(value: &str) -> Result<ObjectiveKind> {
    ObjectiveKind::parse(value).ok_or_else(|| config_error(format!("unknown objective {value:?}")))
}

/// `"6,1,3"` as train, dev and test counts.
pub fn parse_relations(value: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| config_error(format!("--relations expects TRAIN,DEV,TEST counts, got {value:?}")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(config_error(format!("--relations expects three counts, got {value:?}"))),
    }
}
