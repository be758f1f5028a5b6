use triage_core::harness::{
    build_reference_index, run_evaluation, synth_dataset, train_pipeline, triage_dataset, EngineConfig, SynthSpec,
};
use triage_core::model::write_checkpoint;
use triage_core::triage::write_index;

fn tiny() -> EngineConfig {
    EngineConfig {
        stem_pool: 14,
        channels: vec![3, 4, 4, 4],
        hidden: 12,
        embed_dim: 8,
        epochs: 2,
        episodes: 10,
        train_way: 2,
        train_query: 3,
        way: 2,
        query: Some(4),
        eval_episodes: 30,
        ..EngineConfig::default()
    }
}

/// Checkpoint, evaluation report, index and verdicts, all as bytes.
fn run(seed: u64) -> Vec<Vec<u8>> {
    let cfg = tiny();
    cfg.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        classes: 4,
        per_class: 8,
        seed: 1,
        ..SynthSpec::default()
    };
    let data = synth_dataset(&spec, dir.path())
        .unwrap()
        .prepare(Some(10), cfg.pixel_mean, cfg.pixel_std, seed)
        .unwrap();
    let (base, novel) = data.split(None);
    let out = train_pipeline(&base, &cfg, seed).unwrap();
    let mut checkpoint = Vec::new();
    write_checkpoint(&out.params, &mut checkpoint).unwrap();
    let report = run_evaluation(&out.params, &novel, Some(&base), &cfg, seed).unwrap();
    let index = build_reference_index(&out.params, &base).unwrap();
    let mut index_bytes = Vec::new();
    write_index(&index, &mut index_bytes).unwrap();
    let verdicts = triage_dataset(&out.params, &index, &novel, &cfg.triage_config()).unwrap();
    vec![
        checkpoint,
        serde_json::to_vec(&report).unwrap(),
        index_bytes,
        serde_json::to_vec(&verdicts).unwrap(),
    ]
}

#[test]
fn same_seed_gives_identical_bytes() {
    assert_eq!(run(4), run(4));
}

#[test]
fn different_seed_changes_the_model() {
    assert_ne!(run(4)[0], run(5)[0]);
}
