use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemorySlot;
use crate::model::{meta_test_embeddings, EmbedderParams};
use crate::scalar::Scalar;

use super::config::{EngineConfig, MemorySeed};
use super::{eligible_classes, embed_dataset, ClassTable, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub mean_accuracy: f64,
    pub ci95: f64,
    /// A single episode has no spread, so its interval is meaningless.
    pub ci_degenerate: bool,
    pub seed: u64,
    pub tau: f64,
    pub memory_seed: MemorySeed,
    pub split_seed: Option<u64>,
    /// Classes with fewer than `shot + query` samples.
    pub excluded_classes: Vec<String>,
    pub config_hash: String,
}

/// Mean embedding of every base class, used as extra memory slots.
pub fn base_slots<T: Scalar>(params: &EmbedderParams<T>, base: &Dataset) -> Result<Vec<MemorySlot<T>>> {
    let emb = embed_dataset(params, base)?;
    base.classes
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| {
            let rows: Vec<&[T]> = m.iter().map(|&i| emb[i].as_slice()).collect();
            crate::memory::class_mean(c, &rows)
        })
        .collect()
}

/// Few-shot evaluation on `novel` using the episode settings in `config`.
/// `base` supplies extra memory slots for one-shot runs under
/// [`MemorySeed::Base`].
pub fn run_evaluation<T: Scalar>(
    params: &EmbedderParams<T>,
    novel: &Dataset,
    base: Option<&Dataset>,
    config: &EngineConfig,
    seed: u64,
) -> Result<EvalReport> {
    let started = Instant::now();
    if novel.is_empty() {
        return Err(Error::EmptyInput("novel split has no samples".into()));
    }
    let (way, shot, query) = (config.way, config.shot, config.eval_query());
    let (eligible, short) = eligible_classes(&novel.classes, shot, query);
    let excluded_classes: Vec<String> = short.iter().map(|&c| novel.classes.names[c].clone()).collect();
    if !excluded_classes.is_empty() {
        info!("excluded at {shot}-shot/{query}-query: {}", excluded_classes.join(", "));
    }
    if eligible.len() < way {
        return Err(Error::arg(format!(
            "{way}-way evaluation needs {way} novel classes with at least {} samples, found {} ({} excluded)",
            shot + query,
            eligible.len(),
            excluded_classes.len()
        )));
    }
    let table = ClassTable {
        names: eligible.iter().map(|&c| novel.classes.names[c].clone()).collect(),
        members: eligible.iter().map(|&c| novel.classes.members[c].clone()).collect(),
    };
    let extra = match (config.memory_seed, base) {
        (MemorySeed::Base, Some(b)) if shot == 1 => base_slots(params, b)?,
        (MemorySeed::Base, None) if shot == 1 => {
            return Err(Error::arg("memory seed 'base' needs the base split"));
        }
        _ => Vec::new(),
    };
    let embeddings = embed_dataset(params, novel)?;
    let result = meta_test_embeddings(
        &table,
        &embeddings,
        way,
        shot,
        query,
        config.eval_episodes,
        seed,
        T::lit(config.tau),
        &extra,
    )?;
    info!(
        "{way}-way {shot}-shot: {:.4} ± {:.4} over {} episodes in {:.2?}",
        result.mean_accuracy,
        result.ci95,
        result.episodes,
        started.elapsed()
    );
    Ok(EvalReport {
        way,
        shot,
        query,
        episodes: result.episodes,
        mean_accuracy: result.mean_accuracy,
        ci95: result.ci95,
        ci_degenerate: result.episodes < 2,
        seed,
        tau: config.tau,
        memory_seed: config.memory_seed,
        split_seed: config.split_seed,
        excluded_classes,
        config_hash: config.hash(),
    })
}
