//! Small synthetic graph sets for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::EntropyGraph;
use crate::harness::{Dataset, Sample};
use crate::model::Architecture;

pub fn tiny_arch(classes: usize) -> Architecture {
    Architecture {
        input_side: 16,
        stem_pool: 1,
        channels: vec![3, 4, 4, 4],
        hidden: 12,
        embed_dim: 8,
        classes,
    }
}

/// Class `c` lights a distinct band of rows; pixels carry uniform noise.
pub fn banded_dataset(classes: usize, per_class: usize, side: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (side / classes).max(1);
    let mut samples = Vec::new();
    for c in 0..classes {
        for i in 0..per_class {
            let pixels = (0..side * side)
                .map(|k| {
                    let row = k / side;
                    let lit = row / band == c;
                    let base = if lit { 0.8 } else { 0.3 };
                    (base + rng.gen_range(-0.1..0.1)) as f32
                })
                .collect();
            let graph = EntropyGraph::new(side, side, pixels)
                .unwrap()
                .normalize(0.5, 0.25)
                .unwrap();
            samples.push(Sample {
                id: format!("c{c}/{i}"),
                class: c,
                graph,
            });
        }
    }
    Dataset::from_samples((0..classes).map(|c| format!("c{c}")).collect(), samples).unwrap()
}
