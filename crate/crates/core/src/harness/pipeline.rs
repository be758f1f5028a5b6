use log::info;

use crate::error::Result;
use crate::model::{episodic_train, init_embedder, pretrain_base, EmbedderParams};
use crate::scalar::Scalar;
use crate::triage::{build_index, triage, ReferenceIndex, SweepSample, TriageConfig, TriageDecision};

use super::config::EngineConfig;
use super::Dataset;

pub struct PipelineOutput {
    pub params: EmbedderParams<f64>,
    /// Weights after pretraining, before meta-training.
    pub pretrained: EmbedderParams<f64>,
    pub pretrain_loss: Vec<f64>,
    pub meta_loss: Vec<f64>,
}

/// Initialize, pretrain on `base`, then meta-train the unfrozen tail.
pub fn train_pipeline(base: &Dataset, config: &EngineConfig, seed: u64) -> Result<PipelineOutput> {
    let arch = config.architecture(base.class_count());
    let train = config.train_config(seed);
    let params = init_embedder::<f64>(&arch, seed)?;
    info!(
        "pretraining {} parameters on {} samples",
        params.parameter_count(),
        base.len()
    );
    let pre = pretrain_base(params, base, &train)?;
    let meta = episodic_train(pre.params.clone().with_meta_mask(), base, &train)?;
    Ok(PipelineOutput {
        params: meta.params,
        pretrained: pre.params,
        pretrain_loss: pre.loss_trace,
        meta_loss: meta.loss_trace,
    })
}

pub fn embed_dataset<T: Scalar>(params: &EmbedderParams<T>, data: &Dataset) -> Result<Vec<Vec<T>>> {
    data.samples.iter().map(|s| params.embed(&s.graph)).collect()
}

pub fn build_reference_index<T: Scalar>(params: &EmbedderParams<T>, data: &Dataset) -> Result<ReferenceIndex<T>> {
    let emb = embed_dataset(params, data)?;
    build_index(data.classes.names.clone(), &emb, &data.labels())
}

pub fn triage_dataset<T: Scalar>(
    params: &EmbedderParams<T>,
    index: &ReferenceIndex<T>,
    data: &Dataset,
    config: &TriageConfig,
) -> Result<Vec<TriageDecision>> {
    embed_dataset(params, data)?
        .iter()
        .map(|e| triage(index, e, config))
        .collect()
}

/// Pair each decision's ratios with the sample's class in index numbering,
/// matched by class name; classes unknown to the index get `None`.
pub fn sweep_samples<T: Scalar>(
    index: &ReferenceIndex<T>,
    data: &Dataset,
    decisions: &[TriageDecision],
) -> Vec<SweepSample> {
    data.samples
        .iter()
        .zip(decisions)
        .map(|(s, d)| SweepSample {
            ratios: d.ratios.clone(),
            truth: index.classes().iter().position(|n| *n == data.classes.names[s.class]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::banded_dataset;
    use crate::triage::Verdict;

    fn tiny_config() -> EngineConfig {
        EngineConfig {
            input_side: 16,
            stem_pool: 1,
            channels: vec![3, 4, 4, 4],
            hidden: 12,
            embed_dim: 8,
            batch_size: 8,
            epochs: 3,
            episodes: 5,
            train_way: 2,
            train_shot: 1,
            train_query: 2,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let data = banded_dataset(3, 6, 16, 3);
        let a = train_pipeline(&data, &tiny_config(), 4).unwrap();
        let b = train_pipeline(&data, &tiny_config(), 4).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.pretrain_loss.len(), 3);
        assert_eq!(a.meta_loss.len(), 5);
    }

    #[test]
    fn index_members_triage_to_their_own_class_at_k1() {
        let data = banded_dataset(3, 4, 16, 5);
        let p = train_pipeline(&data, &tiny_config(), 1).unwrap().params;
        let idx = build_reference_index(&p, &data).unwrap();
        assert_eq!(idx.len(), 12);
        let cfg = TriageConfig {
            k: 1,
            threshold: 1.0,
            ..Default::default()
        };
        let d = triage_dataset(&p, &idx, &data, &cfg).unwrap();
        for (s, dec) in data.samples.iter().zip(&d) {
            assert_eq!(dec.verdict, Verdict::Class(s.class));
        }
        let sweep = sweep_samples(&idx, &data, &d);
        assert!(sweep.iter().zip(&data.samples).all(|(w, s)| w.truth == Some(s.class)));
    }
}
