use std::collections::BTreeMap;

use num_traits::Num;

use crate::error::{Error, Result};

/// Linear rank weights: rank `i` (1-based) gets `k + 1 - i`.
pub fn rank_weights<W: Num + Clone>(k: usize) -> Result<Vec<W>> {
    if k == 0 {
        return Err(Error::arg("rank weights need k >= 1"));
    }
    let mut w = Vec::with_capacity(k);
    let mut next = W::one();
    for _ in 0..k {
        w.push(next.clone());
        next = next + W::one();
    }
    w.reverse();
    Ok(w)
}

/// Each class's share of the total weight carried by its hits, keyed by
/// class id. Only classes present among the hits appear.
pub fn weight_ratio<W: Num + Clone>(labels: &[usize], weights: &[W]) -> Result<BTreeMap<usize, W>> {
    if labels.len() != weights.len() {
        return Err(Error::arg(format!(
            "{} hits but {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("weight ratio needs at least one hit".into()));
    }
    let mut per_class: BTreeMap<usize, W> = BTreeMap::new();
    let mut total = W::zero();
    for (&c, w) in labels.iter().zip(weights) {
        let e = per_class.entry(c).or_insert_with(W::zero);
        *e = e.clone() + w.clone();
        total = total + w.clone();
    }
    if total == W::zero() {
        return Err(Error::arg("weights sum to zero"));
    }
    Ok(per_class.into_iter().map(|(c, w)| (c, w / total.clone())).collect())
}
