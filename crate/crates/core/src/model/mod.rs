//! Compact convolutional embedder and its three-stage training regimen:
//! supervised pretraining on base classes, first-order inner updates of the
//! classifier head, and episodic meta-training scored by the task-memory
//! prototype softmax.

mod adam;
mod checkpoint;
mod embedder;
pub mod layers;
mod train;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embedder::{init_embedder, Architecture, ClassifierHead, EmbedderParams, Gradients, HeadGrad, Tensor, Trace};
pub use train::{
    classification_loss_and_grad, default_query, episode_loss_and_grad, episodic_train, inner_update, meta_test,
    meta_test_embeddings, pretrain_base, EpisodicOutcome, LossAndGrad, MetaTestResult, PretrainOutcome, TrainConfig,
};
