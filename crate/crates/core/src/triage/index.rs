use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Exact cosine index over unit-normalized reference embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceIndex<T> {
    classes: Vec<String>,
    dim: usize,
    vectors: Vec<T>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborHit<T> {
    /// 1-based.
    pub rank: usize,
    pub row: usize,
    pub class: usize,
    pub score: T,
}

fn unit<T: Scalar>(v: &[T], what: &str) -> Result<Vec<T>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg(format!("{what} has non-finite entries")));
    }
    let n = norm(v);
    if n == T::zero() {
        return Err(Error::ZeroNorm(what.to_string()));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

pub fn build_index<T: Scalar>(
    classes: Vec<String>,
    embeddings: &[Vec<T>],
    labels: &[usize],
) -> Result<ReferenceIndex<T>> {
    let Some(first) = embeddings.first() else {
        return Err(Error::EmptyInput("reference index needs at least one vector".into()));
    };
    if embeddings.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} reference vectors but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let dim = first.len();
    if dim == 0 {
        return Err(Error::arg("reference vectors must have nonzero dimension"));
    }
    let mut vectors = Vec::with_capacity(embeddings.len() * dim);
    for (row, (v, &label)) in embeddings.iter().zip(labels).enumerate() {
        if v.len() != dim {
            return Err(Error::arg(format!(
                "reference row {row} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        if label >= classes.len() {
            return Err(Error::arg(format!("reference row {row} has unknown class {label}")));
        }
        vectors.extend(unit(v, &format!("reference row {row}"))?);
    }
    Ok(ReferenceIndex {
        classes,
        dim,
        vectors,
        labels: labels.to_vec(),
    })
}

impl<T: Scalar> ReferenceIndex<T> {
    pub(crate) fn from_parts(classes: Vec<String>, dim: usize, vectors: Vec<T>, labels: Vec<usize>) -> Self {
        ReferenceIndex {
            classes,
            dim,
            vectors,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine scores of every row against `query`, in row order.
    pub fn scores(&self, query: &[T]) -> Result<Vec<T>> {
        if query.len() != self.dim {
            return Err(Error::arg(format!(
                "query has dimension {}, index expects {}",
                query.len(),
                self.dim
            )));
        }
        let q = unit(query, "query")?;
        Ok(self
            .vectors
            .chunks_exact(self.dim)
            .map(|r| dot(r, &q).max(-T::one()).min(T::one()))
            .collect())
    }

    /// Top-`k` rows by descending cosine; equal scores go to the lower row id.
    pub fn search(&self, query: &[T], k: usize) -> Result<Vec<NeighborHit<T>>> {
        if k == 0 {
            return Err(Error::arg("search needs k >= 1"));
        }
        let scores = self.scores(query)?;
        let order = |&a: &usize, &b: &usize| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        };
        let mut ids: Vec<usize> = (0..scores.len()).collect();
        let k = k.min(ids.len());
        if k < ids.len() {
            ids.select_nth_unstable_by(k - 1, order);
            ids.truncate(k);
        }
        ids.sort_unstable_by(order);
        Ok(ids
            .into_iter()
            .enumerate()
            .map(|(i, row)| NeighborHit {
                rank: i + 1,
                row,
                class: self.labels[row],
                score: scores[row],
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> ReferenceIndex<U> {
        ReferenceIndex {
            classes: self.classes.clone(),
            dim: self.dim,
            vectors: self.vectors.iter().map(|v| U::lit(v.as_f64())).collect(),
            labels: self.labels.clone(),
        }
    }
}
