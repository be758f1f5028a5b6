//! External task memory: per-class mean slots, tanh-cosine attention,
//! adaptive prototypes and blended features, plus the prototype softmax that
//! turns blended features into a class distribution.
//!
//! Memory contents are plain values. Nothing here records gradients through
//! slot vectors; callers that train treat prototypes read from memory as
//! constants.

mod episode;

pub use episode::{episode_objective, EpisodeMemory, EpisodeObjective};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, softmax, squared_distance, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySlot<T> {
    pub class_id: usize,
    pub vector: Vec<T>,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMemory<T> {
    slots: Vec<MemorySlot<T>>,
}

impl<T: Scalar> TaskMemory<T> {
    pub fn new(slots: Vec<MemorySlot<T>>) -> Result<Self> {
        let Some(first) = slots.first() else {
            return Err(Error::EmptyInput("task memory needs at least one slot".into()));
        };
        let dim = first.vector.len();
        let mut seen = HashSet::new();
        for s in &slots {
            if s.vector.len() != dim {
                return Err(Error::arg("memory slots differ in dimension"));
            }
            if !seen.insert(s.class_id) {
                return Err(Error::arg(format!("duplicate memory slot for class {}", s.class_id)));
            }
            if s.support_count == 0 || !s.vector.iter().all(|v| v.is_finite()) {
                return Err(Error::arg(format!("memory slot {} is degenerate", s.class_id)));
            }
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &[MemorySlot<T>] {
        &self.slots
    }

    /// Memory size `m`.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.slots[0].vector.len()
    }
}

/// Where a blended feature came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Support,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFeature<T> {
    pub h: Vec<T>,
    pub source: FeatureSource,
    pub tau: T,
}

/// Elementwise mean of one class's embeddings.
pub fn class_mean<T: Scalar>(class_id: usize, embeddings: &[&[T]]) -> Result<MemorySlot<T>> {
    let Some(first) = embeddings.first() else {
        return Err(Error::arg(format!("class {class_id} has no embeddings")));
    };
    let dim = first.len();
    let mut acc = vec![T::zero(); dim];
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::arg("embeddings differ in dimension"));
        }
        for (a, &v) in acc.iter_mut().zip(e.iter()) {
            *a += v;
        }
    }
    let n = T::from_count(embeddings.len());
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(MemorySlot {
        class_id,
        vector: acc,
        support_count: embeddings.len(),
    })
}

pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::arg("cosine of vectors with different lengths"));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroNorm("cosine similarity operand".into()));
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// `a_j = softmax_j(tanh(cos(x, v_j)))` over all memory slots.
pub fn attention_weights<T: Scalar>(x: &[T], memory: &TaskMemory<T>) -> Result<Vec<T>> {
    let scores = memory
        .slots
        .iter()
        .map(|s| cosine_similarity(x, &s.vector).map(|c| c.tanh()))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&scores))
}

/// `v_m = sum_j a_j v_j`.
pub fn adaptive_prototype<T: Scalar>(weights: &[T], memory: &TaskMemory<T>) -> Result<Vec<T>> {
    if weights.len() != memory.len() {
        return Err(Error::arg(format!(
            "{} attention weights for {} memory slots",
            weights.len(),
            memory.len()
        )));
    }
    let mut out = vec![T::zero(); memory.dim()];
    for (&a, slot) in weights.iter().zip(&memory.slots) {
        for (o, &v) in out.iter_mut().zip(&slot.vector) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// `h = tau * v_m + (1 - tau) * f_x`.
pub fn blend<T: Scalar>(v_m: &[T], f_x: &[T], tau: T, source: FeatureSource) -> Result<AdaptedFeature<T>> {
    check_tau(tau)?;
    if v_m.len() != f_x.len() {
        return Err(Error::arg("blend operands differ in dimension"));
    }
    let keep = T::one() - tau;
    let h = v_m.iter().zip(f_x).map(|(&m, &f)| tau * m + keep * f).collect();
    Ok(AdaptedFeature { h, source, tau })
}

pub(crate) fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::arg(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// `p_c = exp(-|h_q - h_c|^2) / sum_c' exp(-|h_q - h_c'|^2)`.
pub fn predict_distribution<T: Scalar>(h_query: &[T], prototypes: &[Vec<T>]) -> Result<Vec<T>> {
    if prototypes.len() < 2 {
        return Err(Error::arg("prototype distribution needs at least two classes"));
    }
    let logits: Vec<T> = prototypes.iter().map(|p| -squared_distance(h_query, p)).collect();
    Ok(softmax(&logits))
}
