//! Synthetic corpora whose classes differ by entropy band structure.
//!
//! Each half of a file is cut into equal bands that alternate between a
//! low-entropy regime (tiny alphabets) and a high-entropy regime (wide
//! alphabets). The first `ceil(n/2)` classes use one band count `2 + c` in
//! both halves. Each later class joins the front pattern of one of those
//! classes to the back pattern of the next, so it shares traits with two
//! of them. Band counts are relative to file length, so the pattern survives
//! the variable lengths.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::DEFAULT_SEGMENT_LEN;

use super::{load_dataset, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub segment_len: usize,
    /// Inclusive range of segments per file.
    pub segments: (usize, usize),
    /// Chance that a segment takes the opposite regime.
    pub flip_rate: f64,
    /// Per-file shift of band boundaries, as a fraction of one band.
    pub jitter: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 5,
            per_class: 40,
            seed: 0,
            segment_len: DEFAULT_SEGMENT_LEN,
            segments: (100, 140),
            flip_rate: 0.03,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFile {
    pub class: usize,
    /// `class_XX/sample_YYY.bin`.
    pub path: String,
    pub bytes: Vec<u8>,
}

pub fn class_dir(class: usize) -> String {
    format!("class_{class:02}")
}

/// Band counts of the front and back halves for class `c` of `classes`.
pub fn class_profile(c: usize, classes: usize) -> (usize, usize) {
    let pure = classes.div_ceil(2);
    // a single pure pattern has no neighbour to recombine with
    if c < pure || pure < 2 {
        (2 + c, 2 + c)
    } else {
        let j = (c - pure) % pure;
        (2 + j, 2 + (j + 1) % pure)
    }
}

fn segment(rng: &mut ChaCha8Rng, len: usize, alphabet: usize, out: &mut Vec<u8>) {
    let offset: u8 = rng.gen();
    out.extend((0..len).map(|_| offset.wrapping_add(rng.gen_range(0..alphabet) as u8)));
}

pub fn synth_files(spec: &SynthSpec) -> Result<Vec<SynthFile>> {
    let (lo, hi) = spec.segments;
    if spec.classes == 0 || spec.per_class == 0 || spec.segment_len == 0 || lo == 0 || lo > hi {
        return Err(Error::arg(
            "synthetic corpus needs classes, samples, segment length and a valid segment range",
        ));
    }
    if !(0.0..=1.0).contains(&spec.flip_rate) || !(0.0..=1.0).contains(&spec.jitter) {
        return Err(Error::arg("flip rate and jitter must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut files = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        let (front, back) = class_profile(class, spec.classes);
        for i in 0..spec.per_class {
            let segments = rng.gen_range(lo..=hi);
            let shift = if spec.jitter > 0.0 {
                rng.gen_range(-spec.jitter..=spec.jitter)
            } else {
                0.0
            };
            let mut bytes = Vec::with_capacity(segments * spec.segment_len);
            for j in 0..segments {
                // position within the current half, in units of that half's bands
                let scaled = if 2 * j < segments {
                    2 * j * front
                } else {
                    (2 * j - segments) * back
                };
                let band = (scaled as f64 / segments as f64 + shift).floor().max(0.0) as usize;
                let mut high = band % 2 == 1;
                if rng.gen_bool(spec.flip_rate) {
                    high = !high;
                }
                let alphabet = if high {
                    rng.gen_range(96..=256)
                } else {
                    rng.gen_range(1..=4)
                };
                segment(&mut rng, spec.segment_len, alphabet, &mut bytes);
            }
            files.push(SynthFile {
                class,
                path: format!("{}/sample_{i:03}.bin", class_dir(class)),
                bytes,
            });
        }
    }
    Ok(files)
}

/// Write the corpus under `root` and load it back.
pub fn synth_dataset(spec: &SynthSpec, root: &Path) -> Result<Dataset> {
    for f in synth_files(spec)? {
        let path = root.join(&f.path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, &f.bytes).map_err(|e| Error::io(&path, e))?;
    }
    load_dataset(root, spec.segment_len)
}
