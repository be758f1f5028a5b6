//! Dataset ingestion, synthetic corpora, episode sampling, evaluation,
//! configuration and the end-to-end pipeline used by the CLI.

mod config;
mod dataset;
mod episode;
mod eval;
mod pipeline;
mod synth;

pub use config::{EngineConfig, MemorySeed, SEED_ENV};
pub use dataset::{load_dataset, load_sample_file, split_classes, ClassSplit, ClassTable, Dataset, Sample};
pub use episode::{eligible_classes, episode_rng, sample_episode, Episode, EpisodeItem};
pub use eval::{base_slots, run_evaluation, EvalReport};
pub use pipeline::{
    build_reference_index, embed_dataset, sweep_samples, train_pipeline, triage_dataset, PipelineOutput,
};
pub use synth::{class_dir, class_profile, synth_dataset, synth_files, SynthFile, SynthSpec};
