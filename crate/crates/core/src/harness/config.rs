//! Flat `key = value` engine configuration. Every CLI flag has a key of the
//! same name with dashes replaced by underscores.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{DEFAULT_AUGMENT_MIN, DEFAULT_PIXEL_MEAN, DEFAULT_PIXEL_STD, DEFAULT_SEGMENT_LEN, GRAPH_SIDE};
use crate::model::{Architecture, TrainConfig};
use crate::triage::{LimeConfig, RatioSource, RegularizerSign, TriageConfig, DEFAULT_K, DEFAULT_THRESHOLD};

pub const SEED_ENV: &str = "TRIAGE_ENGINE_SEED";

/// Where extra memory slots come from during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemorySeed {
    /// Slots are built from the episode's support set only.
    #[default]
    Episode,
    /// One-shot episodes also see base-class mean slots.
    Base,
}

impl FromStr for MemorySeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "episode" => Ok(MemorySeed::Episode),
            "base" => Ok(MemorySeed::Base),
            other => Err(Error::arg(format!(
                "memory seed must be base or episode, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for MemorySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemorySeed::Episode => "episode",
            MemorySeed::Base => "base",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// `None` falls back to the environment, then 0.
    pub seed: Option<u64>,
    pub segment_len: usize,
    pub augment_min: usize,
    pub pixel_mean: f64,
    pub pixel_std: f64,
    pub split_seed: Option<u64>,

    pub input_side: usize,
    pub stem_pool: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub embed_dim: usize,

    pub learning_rate: f64,
    pub task_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub episodes: usize,
    pub tau: f64,
    pub train_way: usize,
    pub train_shot: usize,
    pub train_query: usize,

    pub way: usize,
    pub shot: usize,
    /// `None` picks the per-shot default.
    pub query: Option<usize>,
    pub eval_episodes: usize,
    pub memory_seed: MemorySeed,

    pub k: usize,
    pub threshold: f64,
    pub ratio_source: RatioSource,
    pub lime_lambda: f64,
    pub lime_sign: RegularizerSign,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        let train = TrainConfig::default();
        EngineConfig {
            seed: None,
            segment_len: DEFAULT_SEGMENT_LEN,
            augment_min: DEFAULT_AUGMENT_MIN,
            pixel_mean: DEFAULT_PIXEL_MEAN,
            pixel_std: DEFAULT_PIXEL_STD,
            split_seed: None,
            input_side: arch.input_side,
            stem_pool: arch.stem_pool,
            channels: arch.channels,
            hidden: arch.hidden,
            embed_dim: arch.embed_dim,
            learning_rate: train.learning_rate,
            task_rate: train.task_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            episodes: 20_000,
            tau: train.tau,
            train_way: train.way,
            train_shot: train.shot,
            train_query: train.query,
            way: 5,
            shot: 1,
            query: None,
            eval_episodes: 20_000,
            memory_seed: MemorySeed::Episode,
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            ratio_source: RatioSource::Rank,
            lime_lambda: LimeConfig::default().lambda,
            lime_sign: RegularizerSign::Spread,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::arg(format!("config key {key}: cannot parse {value:?}")))
}

fn optional<V: FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<V: ToString>(v: &Option<V>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), V::to_string)
}

impl EngineConfig {
    /// Defaults overlaid with `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = EngineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::arg(format!("config line {}: expected key = value", n + 1)));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        match k {
            "seed" => self.seed = optional(k, value)?,
            "segment_len" => self.segment_len = parse(k, value)?,
            "augment_min" => self.augment_min = parse(k, value)?,
            "pixel_mean" => self.pixel_mean = parse(k, value)?,
            "pixel_std" => self.pixel_std = parse(k, value)?,
            "split_seed" => self.split_seed = optional(k, value)?,
            "input_side" => self.input_side = parse(k, value)?,
            "stem_pool" => self.stem_pool = parse(k, value)?,
            "channels" => self.channels = value.split(',').map(|c| parse(k, c.trim())).collect::<Result<_>>()?,
            "hidden" => self.hidden = parse(k, value)?,
            "embed_dim" => self.embed_dim = parse(k, value)?,
            "learning_rate" => self.learning_rate = parse(k, value)?,
            "task_rate" => self.task_rate = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "epochs" => self.epochs = parse(k, value)?,
            "episodes" => self.episodes = parse(k, value)?,
            "tau" => self.tau = parse(k, value)?,
            "train_way" => self.train_way = parse(k, value)?,
            "train_shot" => self.train_shot = parse(k, value)?,
            "train_query" => self.train_query = parse(k, value)?,
            "way" => self.way = parse(k, value)?,
            "shot" => self.shot = parse(k, value)?,
            "query" => self.query = optional(k, value)?,
            "eval_episodes" => self.eval_episodes = parse(k, value)?,
            "memory_seed" => self.memory_seed = value.parse()?,
            "k" => self.k = parse(k, value)?,
            "threshold" => self.threshold = parse(k, value)?,
            "ratio_source" => self.ratio_source = value.parse()?,
            "lime_lambda" => self.lime_lambda = parse(k, value)?,
            "lime_sign" => {
                self.lime_sign = match value {
                    "plus" => RegularizerSign::Spread,
                    "minus" => RegularizerSign::Concentrate,
                    other => return Err(Error::arg(format!("lime_sign must be plus or minus, got {other:?}"))),
                }
            }
            other => return Err(Error::arg(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        BTreeMap::from([
            ("seed", show(&self.seed)),
            ("segment_len", self.segment_len.to_string()),
            ("augment_min", self.augment_min.to_string()),
            ("pixel_mean", self.pixel_mean.to_string()),
            ("pixel_std", self.pixel_std.to_string()),
            ("split_seed", show(&self.split_seed)),
            ("input_side", self.input_side.to_string()),
            ("stem_pool", self.stem_pool.to_string()),
            ("channels", join(&self.channels)),
            ("hidden", self.hidden.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("task_rate", self.task_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("episodes", self.episodes.to_string()),
            ("tau", self.tau.to_string()),
            ("train_way", self.train_way.to_string()),
            ("train_shot", self.train_shot.to_string()),
            ("train_query", self.train_query.to_string()),
            ("way", self.way.to_string()),
            ("shot", self.shot.to_string()),
            ("query", show(&self.query)),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("memory_seed", self.memory_seed.to_string()),
            ("k", self.k.to_string()),
            ("threshold", self.threshold.to_string()),
            ("ratio_source", self.ratio_source.to_string()),
            ("lime_lambda", self.lime_lambda.to_string()),
            (
                "lime_sign",
                match self.lime_sign {
                    RegularizerSign::Spread => "plus",
                    RegularizerSign::Concentrate => "minus",
                }
                .to_string(),
            ),
        ])
    }

    /// Sorted `key = value` lines; parsing them yields an equal config.
    pub fn canonical(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Explicit seed, else `TRIAGE_ENGINE_SEED`, else 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::arg(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn architecture(&self, classes: usize) -> Architecture {
        Architecture {
            input_side: self.input_side,
            stem_pool: self.stem_pool,
            channels: self.channels.clone(),
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            classes,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            task_rate: self.task_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            episode_count: self.episodes,
            seed,
            tau: self.tau,
            way: self.train_way,
            shot: self.train_shot,
            query: self.train_query,
            ..TrainConfig::default()
        }
    }

    pub fn eval_query(&self) -> usize {
        self.query.unwrap_or_else(|| crate::model::default_query(self.shot))
    }

    pub fn triage_config(&self) -> TriageConfig {
        TriageConfig {
            k: self.k,
            threshold: self.threshold,
            ratio_source: self.ratio_source,
            lime: LimeConfig {
                lambda: self.lime_lambda,
                sign: self.lime_sign,
                ..LimeConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len == 0 {
            return Err(Error::arg("segment_len must be at least 1"));
        }
        if !self.pixel_std.is_finite() || self.pixel_std <= 0.0 || !self.pixel_mean.is_finite() {
            return Err(Error::arg("pixel_std must be > 0 and pixel_mean finite"));
        }
        if self.input_side != GRAPH_SIDE {
            return Err(Error::arg(format!(
                "input_side must be {GRAPH_SIDE}, the side of every extracted graph"
            )));
        }
        self.architecture(2).validate()?;
        self.train_config(0).validate()?;
        if self.way < 2 || self.shot == 0 || self.eval_query() == 0 || self.eval_episodes == 0 {
            return Err(Error::arg(
                "evaluation needs way >= 2, shot >= 1, query >= 1 and episodes >= 1",
            ));
        }
        self.triage_config().validate()
    }
}
