use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::{episode_rng, sample_episode, ClassTable, Dataset, Episode};
use crate::memory::{episode_objective, EpisodeMemory, MemorySlot};
use crate::scalar::Scalar;

use super::adam::Adam;
use super::embedder::{ClassifierHead, EmbedderParams, Gradients};

/// Optimization settings shared by pretraining and episodic training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Outer (Adam) learning rate.
    pub learning_rate: f64,
    /// Inner-loop step for first-order head updates.
    pub task_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub episode_count: usize,
    pub seed: u64,
    /// Blend between adaptive prototype and raw feature.
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Episode shape used during meta-training.
    pub way: usize,
    pub shot: usize,
    pub query: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            task_rate: 0.01,
            batch_size: 64,
            epochs: 50,
            episode_count: 500,
            seed: 0,
            tau: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            way: 5,
            shot: 5,
            query: 15,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        rate("learning rate", self.learning_rate)?;
        rate("task rate", self.task_rate)?;
        rate("tau", self.tau)?;
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::arg("adam moment decays must lie in [0, 1) and epsilon > 0"));
        }
        if self.way < 2 || self.shot == 0 || self.query == 0 {
            return Err(Error::arg("episodes need way >= 2, shot >= 1 and query >= 1"));
        }
        Ok(())
    }

    fn adam<T: Scalar>(&self, params: &EmbedderParams<T>) -> Adam<T> {
        Adam::new(
            params,
            T::lit(self.learning_rate),
            T::lit(self.beta1),
            T::lit(self.beta2),
            T::lit(self.epsilon),
        )
    }
}

/// Query samples per class for a given shot: 19 for 1-shot, 15 otherwise.
pub fn default_query(shot: usize) -> usize {
    if shot == 1 {
        19
    } else {
        15
    }
}

pub struct LossAndGrad<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    pub correct: usize,
}

/// Mean cross-entropy of the classifier head over a batch of stem-pooled
/// inputs, with gradients for every non-frozen block.
pub fn classification_loss_and_grad<T: Scalar>(
    params: &EmbedderParams<T>,
    inputs: &[&[T]],
    labels: &[usize],
) -> Result<LossAndGrad<T>> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::arg("batch needs matching, non-empty inputs and labels"));
    }
    let head = params.head();
    let hb = params.arch.head_block();
    let mut grads = params.zero_grads();
    let mut loss = T::zero();
    let mut correct = 0;
    for (&x, &y) in inputs.iter().zip(labels) {
        let trace = params.forward_from(0, x);
        let logits = head.logits(&trace.embedding);
        if crate::scalar::argmax(&logits) == y {
            correct += 1;
        }
        let mut hg = head.loss_and_grad(&[(&trace.embedding, y)])?;
        let scale = T::one() / T::from_count(inputs.len());
        loss += hg.loss * scale;
        if !params.frozen[hb] {
            for (g, v) in grads[2 * hb].iter_mut().zip(&hg.weight) {
                *g += *v * scale;
            }
            for (g, v) in grads[2 * hb + 1].iter_mut().zip(&hg.bias) {
                *g += *v * scale;
            }
        }
        let mut ge = hg.embeddings.pop().expect("one embedding gradient");
        ge.iter_mut().for_each(|v| *v *= scale);
        params.backward(&trace, &ge, &mut grads);
    }
    Ok(LossAndGrad { loss, grads, correct })
}

/// Prototype-softmax episode loss. `support` and `query` are activations
/// entering conv block `start`; gradients cover non-frozen blocks at or
/// above `start`.
#[allow(clippy::too_many_arguments)]
pub fn episode_loss_and_grad<T: Scalar>(
    params: &EmbedderParams<T>,
    start: usize,
    support: &[&[T]],
    support_labels: &[usize],
    query: &[&[T]],
    query_labels: &[usize],
    way: usize,
    tau: T,
) -> Result<LossAndGrad<T>> {
    let s_traces: Vec<_> = support.iter().map(|x| params.forward_from(start, x)).collect();
    let q_traces: Vec<_> = query.iter().map(|x| params.forward_from(start, x)).collect();
    let s_emb: Vec<&[T]> = s_traces.iter().map(|t| t.embedding.as_slice()).collect();
    let q_emb: Vec<&[T]> = q_traces.iter().map(|t| t.embedding.as_slice()).collect();
    let obj = episode_objective(&s_emb, support_labels, &q_emb, query_labels, way, tau)?;
    let mut grads = params.zero_grads();
    for (trace, g) in s_traces.iter().zip(&obj.grad_support) {
        params.backward(trace, g, &mut grads);
    }
    for (trace, g) in q_traces.iter().zip(&obj.grad_query) {
        params.backward(trace, g, &mut grads);
    }
    Ok(LossAndGrad {
        loss: obj.loss,
        grads,
        correct: obj.correct,
    })
}

fn prepare_inputs<T: Scalar>(params: &EmbedderParams<T>, data: &Dataset) -> Result<Vec<Vec<T>>> {
    data.samples.iter().map(|s| params.prepare_input(&s.graph)).collect()
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<T> {
    pub params: EmbedderParams<T>,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Training accuracy per epoch (measured during the epoch).
    pub accuracy_trace: Vec<f64>,
}

/// Supervised pretraining of extractor and head on the base classes.
pub fn pretrain_base<T: Scalar>(
    params: EmbedderParams<T>,
    base: &Dataset,
    config: &TrainConfig,
) -> Result<PretrainOutcome<T>> {
    config.validate()?;
    if base.class_count() < 2 {
        return Err(Error::arg("pretraining needs at least two base classes"));
    }
    if let Some(c) = (0..base.class_count()).find(|&c| base.classes.members[c].len() < 2) {
        return Err(Error::arg(format!(
            "base class {} has fewer than two samples",
            base.classes.names[c]
        )));
    }
    if params.arch.classes != base.class_count() {
        return Err(Error::arg(format!(
            "classifier head has {} outputs but the base split has {} classes",
            params.arch.classes,
            base.class_count()
        )));
    }
    let mut params = params;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut accuracy_trace = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(PretrainOutcome {
            params,
            loss_trace,
            accuracy_trace,
        });
    }
    let inputs = prepare_inputs(&params, base)?;
    let labels = base.labels();
    let mut opt = config.adam(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[T]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let lg = classification_loss_and_grad(&params, &xs, &ys)?;
            total += lg.loss.as_f64() * batch.len() as f64;
            correct += lg.correct;
            opt.step(&mut params, &lg.grads);
        }
        let n = inputs.len() as f64;
        loss_trace.push(total / n);
        accuracy_trace.push(correct as f64 / n);
        log::debug!(
            "pretrain epoch {epoch}: loss {:.5} acc {:.4}",
            total / n,
            correct as f64 / n
        );
    }
    if !params.is_finite() {
        return Err(Error::state("pretraining diverged to non-finite weights"));
    }
    Ok(PretrainOutcome {
        params,
        loss_trace,
        accuracy_trace,
    })
}

/// One first-order step of the classifier head on a support set:
/// `theta - alpha * grad L(theta)`.
pub fn inner_update<T: Scalar>(
    head: &ClassifierHead<T>,
    support: &[(&[T], usize)],
    alpha: T,
) -> Result<ClassifierHead<T>> {
    if support.is_empty() {
        return Err(Error::EmptyInput("inner update support set".into()));
    }
    let g = head.loss_and_grad(support)?;
    let step = |p: &[T], g: &[T]| p.iter().zip(g).map(|(&p, &g)| p - alpha * g).collect();
    Ok(ClassifierHead {
        classes: head.classes,
        dim: head.dim,
        weight: step(&head.weight, &g.weight),
        bias: step(&head.bias, &g.bias),
    })
}

#[derive(Debug, Clone)]
pub struct EpisodicOutcome<T> {
    pub params: EmbedderParams<T>,
    pub loss_trace: Vec<f64>,
    pub accuracy_trace: Vec<f64>,
}

/// Activations and labels, support first, then query.
type EpisodeBatch<'a, T> = (Vec<&'a [T]>, Vec<usize>, Vec<&'a [T]>, Vec<usize>);

fn episode_batch<'a, T>(episode: &Episode, acts: &'a [Vec<T>]) -> EpisodeBatch<'a, T> {
    let split = |items: &[crate::harness::EpisodeItem]| {
        items
            .iter()
            .map(|i| (acts[i.sample].as_slice(), i.label))
            .unzip::<_, _, Vec<_>, Vec<_>>()
    };
    let (s, sl) = split(&episode.support);
    let (q, ql) = split(&episode.query);
    (s, sl, q, ql)
}

/// Episodic meta-training of the non-frozen blocks on base-class tasks.
///
/// Activations below the first trainable block never change, so they are
/// computed once per sample up front.
pub fn episodic_train<T: Scalar>(
    params: EmbedderParams<T>,
    base: &Dataset,
    config: &TrainConfig,
) -> Result<EpisodicOutcome<T>> {
    config.validate()?;
    if base.class_count() < config.way {
        return Err(Error::arg(format!(
            "{}-way meta-training needs at least {} base classes, found {}",
            config.way,
            config.way,
            base.class_count()
        )));
    }
    let mut params = params;
    let mut loss_trace = Vec::with_capacity(config.episode_count);
    let mut accuracy_trace = Vec::with_capacity(config.episode_count);
    let n = params.arch.conv_blocks();
    let start = params.first_trainable().unwrap_or(n).min(n);
    if config.episode_count == 0 || params.first_trainable().is_none() {
        return Ok(EpisodicOutcome {
            params,
            loss_trace,
            accuracy_trace,
        });
    }
    let acts: Vec<Vec<T>> = prepare_inputs(&params, base)?
        .iter()
        .map(|x| params.activation_before(start, x))
        .collect();
    let tau = T::lit(config.tau);
    let mut opt = config.adam(&params);
    for i in 0..config.episode_count {
        let mut rng = episode_rng(config.seed, i as u64);
        let ep = sample_episode(&base.classes, config.way, config.shot, config.query, &mut rng)?;
        let (s, sl, q, ql) = episode_batch(&ep, &acts);
        let lg = episode_loss_and_grad(&params, start, &s, &sl, &q, &ql, config.way, tau)?;
        opt.step(&mut params, &lg.grads);
        loss_trace.push(lg.loss.as_f64());
        accuracy_trace.push(lg.correct as f64 / q.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::state("episodic training diverged to non-finite weights"));
    }
    Ok(EpisodicOutcome {
        params,
        loss_trace,
        accuracy_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestResult {
    pub episodes: usize,
    pub mean_accuracy: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub accuracies: Vec<f64>,
}

/// Few-shot evaluation over precomputed embeddings (one per sample, aligned
/// with `table` member indices). The classifier head plays no part.
#[allow(clippy::too_many_arguments)]
pub fn meta_test_embeddings<T: Scalar>(
    table: &ClassTable,
    embeddings: &[Vec<T>],
    way: usize,
    shot: usize,
    query: usize,
    episodes: usize,
    seed: u64,
    tau: T,
    extra_slots: &[MemorySlot<T>],
) -> Result<MetaTestResult> {
    if episodes == 0 {
        return Err(Error::arg("meta-test needs at least one episode"));
    }
    if way > table.len() {
        return Err(Error::arg(format!(
            "{way}-way evaluation requested but only {} novel classes exist",
            table.len()
        )));
    }
    let mut accuracies = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut rng = episode_rng(seed, i as u64);
        let ep = sample_episode(table, way, shot, query, &mut rng)?;
        let (s, sl, q, ql) = episode_batch(&ep, embeddings);
        let mem = EpisodeMemory::build(&s, &sl, way, tau, extra_slots)?;
        let correct = q.iter().zip(&ql).filter(|(f, &y)| mem.predict(f) == y).count();
        accuracies.push(correct as f64 / q.len() as f64);
    }
    let n = episodes as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let ci95 = if episodes > 1 {
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    } else {
        0.0
    };
    Ok(MetaTestResult {
        episodes,
        mean_accuracy: mean,
        ci95,
        accuracies,
    })
}

/// Embed every novel sample once, then evaluate `episodes` seeded tasks.
#[allow(clippy::too_many_arguments)]
pub fn meta_test<T: Scalar>(
    params: &EmbedderParams<T>,
    novel: &Dataset,
    way: usize,
    shot: usize,
    query: usize,
    episodes: usize,
    seed: u64,
    tau: T,
    extra_slots: &[MemorySlot<T>],
) -> Result<MetaTestResult> {
    if way > novel.class_count() {
        return Err(Error::arg(format!(
            "{way}-way evaluation requested but only {} novel classes exist",
            novel.class_count()
        )));
    }
    let embeddings = novel
        .samples
        .iter()
        .map(|s| params.embed(&s.graph))
        .collect::<Result<Vec<_>>>()?;
    meta_test_embeddings(
        &novel.classes,
        &embeddings,
        way,
        shot,
        query,
        episodes,
        seed,
        tau,
        extra_slots,
    )
}
