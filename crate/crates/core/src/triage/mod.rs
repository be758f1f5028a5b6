//! Reference index, rank-weighted neighbour voting, LiME weight
//! normalization and the class-or-risk-pool decision.

mod decide;
mod format;
mod index;
mod lime;
mod ratio;
mod sweep;

pub use decide::{decide, Verdict};
pub use format::{read_index, write_index, INDEX_FORMAT_VERSION, INDEX_MAGIC};
pub use index::{build_index, NeighborHit, ReferenceIndex};
pub use lime::{lime_objective, lime_weights, project_simplex, LimeConfig, LimeSolution, RegularizerSign};
pub use ratio::{rank_weights, weight_ratio};
pub use sweep::{threshold_sweep, SweepRow, SweepSample};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// Which per-class ratios drive the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioSource {
    #[default]
    Rank,
    Lime,
}

impl FromStr for RatioSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(RatioSource::Rank),
            "lime" => Ok(RatioSource::Lime),
            other => Err(Error::arg(format!("ratio source must be rank or lime, got {other:?}"))),
        }
    }
}

impl fmt::Display for RatioSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatioSource::Rank => "rank",
            RatioSource::Lime => "lime",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriageConfig {
    pub k: usize,
    pub threshold: f64,
    pub ratio_source: RatioSource,
    pub lime: LimeConfig,
}

impl Default for TriageConfig {
    fn default() -> Self {
        TriageConfig {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            ratio_source: RatioSource::Rank,
            lime: LimeConfig::default(),
        }
    }
}

impl TriageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::arg(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.lime.lambda.is_nan() || self.lime.lambda < 0.0 {
            return Err(Error::arg(format!("lambda must be >= 0, got {}", self.lime.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriageDecision {
    pub verdict: Verdict,
    /// `(class, ratio)` pairs from the configured source, ascending class id.
    pub ratios: Vec<(usize, f64)>,
    pub ratio_source: RatioSource,
    pub threshold: f64,
    pub hits: Vec<NeighborHit<f64>>,
    /// One weight per hit, in rank order.
    pub lime_weights: Vec<f64>,
}

/// Top-K search, ratios and verdict for one query embedding.
pub fn triage<T: Scalar>(index: &ReferenceIndex<T>, query: &[T], config: &TriageConfig) -> Result<TriageDecision> {
    config.validate()?;
    let hits = index.search(query, config.k)?;
    let labels: Vec<usize> = hits.iter().map(|h| h.class).collect();
    let rank = weight_ratio(&labels, &rank_weights::<f64>(hits.len())?)?;

    let qn = crate::scalar::norm(query);
    let unit_query: Vec<T> = query.iter().map(|&x| x / qn).collect();
    let rows: Vec<&[T]> = hits.iter().map(|h| index.row(h.row)).collect();
    let lime = lime_weights(&rows, &unit_query, &config.lime)?;
    let lime_weights: Vec<f64> = lime.weights.iter().map(|w| w.as_f64()).collect();

    let ratios: Vec<(usize, f64)> = match config.ratio_source {
        RatioSource::Rank => rank.into_iter().collect(),
        RatioSource::Lime => weight_ratio(&labels, &lime_weights)?.into_iter().collect(),
    };
    Ok(TriageDecision {
        verdict: decide(&ratios, &config.threshold)?,
        ratios,
        ratio_source: config.ratio_source,
        threshold: config.threshold,
        hits: hits
            .iter()
            .map(|h| NeighborHit {
                rank: h.rank,
                row: h.row,
                class: h.class,
                score: h.score.as_f64(),
            })
            .collect(),
        lime_weights,
    })
}
