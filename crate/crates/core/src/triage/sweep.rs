use serde::Serialize;

use crate::error::{Error, Result};

use super::{decide, Verdict};

/// Ratios for one test sample and its ground truth; `truth` is `None` for
/// samples from classes absent from the index.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub ratios: Vec<(usize, f64)>,
    pub truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub total: usize,
    pub classified: usize,
    pub classified_fraction: f64,
    pub risk_fraction: f64,
    /// Over classified samples only; `None` when nothing was classified.
    pub accuracy: Option<f64>,
}

pub fn threshold_sweep(samples: &[SweepSample], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("threshold sweep needs a non-empty test set".into()));
    }
    thresholds
        .iter()
        .map(|&t| {
            let mut classified = 0;
            let mut correct = 0;
            for s in samples {
                if let Verdict::Class(c) = decide(&s.ratios, &t)? {
                    classified += 1;
                    correct += usize::from(s.truth == Some(c));
                }
            }
            let total = samples.len();
            let classified_fraction = classified as f64 / total as f64;
            Ok(SweepRow {
                threshold: t,
                total,
                classified,
                classified_fraction,
                risk_fraction: (total - classified) as f64 / total as f64,
                accuracy: (classified > 0).then(|| correct as f64 / classified as f64),
            })
        })
        .collect()
}
