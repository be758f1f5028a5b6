//! Simplex-constrained regularized least squares over neighbour embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RegularizerSign {
    /// `+λ‖d‖²`, pulling weights toward uniform.
    #[default]
    Spread,
    /// `−λ‖d‖²`, rewarding concentration.
    Concentrate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimeConfig {
    pub lambda: f64,
    pub sign: RegularizerSign,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            lambda: 0.1,
            sign: RegularizerSign::Spread,
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeSolution<T> {
    pub weights: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (j, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - T::one()) / T::from_count(j + 1);
        if x - t > T::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

struct Quadratic<T> {
    gram: Vec<T>,
    linear: Vec<T>,
    constant: T,
    k: usize,
}

impl<T: Scalar> Quadratic<T> {
    fn value(&self, d: &[T]) -> T {
        let mut v = self.constant;
        for i in 0..self.k {
            let row = &self.gram[i * self.k..(i + 1) * self.k];
            v += d[i] * (dot(row, d) - T::lit(2.0) * self.linear[i]);
        }
        v
    }

    fn gradient(&self, d: &[T]) -> Vec<T> {
        (0..self.k)
            .map(|i| T::lit(2.0) * (dot(&self.gram[i * self.k..(i + 1) * self.k], d) - self.linear[i]))
            .collect()
    }
}

/// `‖Σ dᵢ xᵢ − t‖² ± λ‖d‖²` for weights `d`.
pub fn lime_objective<T: Scalar>(neighbors: &[&[T]], target: &[T], lambda: T, sign: RegularizerSign, d: &[T]) -> T {
    let mut residual: Vec<T> = target.iter().map(|&t| -t).collect();
    for (x, &w) in neighbors.iter().zip(d) {
        for (r, &xi) in residual.iter_mut().zip(x.iter()) {
            *r += w * xi;
        }
    }
    let reg = lambda * dot(d, d);
    match sign {
        RegularizerSign::Spread => dot(&residual, &residual) + reg,
        RegularizerSign::Concentrate => dot(&residual, &residual) - reg,
    }
}

/// Projected gradient from the uniform point with step `1/L`, `L` bounded by
/// the Gershgorin radius of the Hessian.
pub fn lime_weights<T: Scalar>(neighbors: &[&[T]], target: &[T], config: &LimeConfig) -> Result<LimeSolution<T>> {
    let k = neighbors.len();
    if k == 0 {
        return Err(Error::arg("LiME needs at least one neighbour"));
    }
    if config.lambda < 0.0 || !config.lambda.is_finite() {
        return Err(Error::arg(format!(
            "LiME lambda must be finite and >= 0, got {}",
            config.lambda
        )));
    }
    if neighbors.iter().any(|x| x.len() != target.len()) {
        return Err(Error::arg("neighbour and target dimensions differ"));
    }
    let lambda = T::lit(config.lambda);
    let signed = match config.sign {
        RegularizerSign::Spread => lambda,
        RegularizerSign::Concentrate => -lambda,
    };
    let mut gram = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] = dot(neighbors[i], neighbors[j]);
        }
        gram[i * k + i] += signed;
    }
    let q = Quadratic {
        linear: neighbors.iter().map(|x| dot(x, target)).collect(),
        constant: dot(target, target),
        gram,
        k,
    };
    let lipschitz = (0..k)
        .map(|i| q.gram[i * k..(i + 1) * k].iter().map(|g| g.abs()).sum::<T>())
        .fold(T::zero(), T::max)
        * T::lit(2.0);
    let mut d = vec![T::one() / T::from_count(k); k];
    let mut value = q.value(&d);
    let mut iterations = 0;
    if k > 1 && lipschitz > T::zero() {
        let step = T::one() / lipschitz;
        let tol = T::lit(config.tolerance);
        while iterations < config.max_iterations {
            iterations += 1;
            let g = q.gradient(&d);
            let moved: Vec<T> = d.iter().zip(&g).map(|(&di, &gi)| di - step * gi).collect();
            let next = project_simplex(&moved);
            let next_value = q.value(&next);
            let shift = d
                .iter()
                .zip(&next)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            d = next;
            let gain = value - next_value;
            value = next_value;
            if gain.abs() <= tol && shift <= tol.sqrt() {
                break;
            }
        }
    }
    Ok(LimeSolution {
        objective: lime_objective(neighbors, target, lambda, config.sign, &d),
        weights: d,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = (0..k)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let t = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (xs, t)
    }

    fn grid_best(xs: &[&[f64]], t: &[f64], lambda: f64, sign: RegularizerSign) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..=100 {
            for b in 0..=100 - a {
                let d = [a as f64 / 100.0, b as f64 / 100.0, (100 - a - b) as f64 / 100.0];
                best = best.min(lime_objective(xs, t, lambda, sign, &d));
            }
        }
        best
    }

    fn assert_feasible(d: &[f64]) {
        assert!(d.iter().all(|&x| x >= 0.0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_neighbour_takes_all_weight() {
        for lambda in [0.0, 0.1, 50.0] {
            let x = [1.0, 2.0];
            let s = lime_weights(
                &[&x[..]],
                &[0.3, -1.0],
                &LimeConfig {
                    lambda,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(s.weights, [1.0]);
        }
    }

    #[test]
    fn heavy_regularization_tends_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (xs, t) = instance(&mut rng, 4, 6);
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let s = lime_weights(
            &refs,
            &t,
            &LimeConfig {
                lambda: 1e6,
                ..Default::default()
            },
        )
        .unwrap();
        for w in &s.weights {
            assert!((w - 0.25).abs() < 1e-5, "{:?}", s.weights);
        }
    }

    #[test]
    fn exact_reconstruction_recovers_mixture() {
        let xs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let refs: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let s = lime_weights(
            &refs,
            &[0.2, 0.5, 0.3],
            &LimeConfig {
                lambda: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        for (w, e) in s.weights.iter().zip([0.2, 0.5, 0.3]) {
            assert!((w - e).abs() < 1e-4);
        }
    }

    #[test]
    fn matches_grid_search_on_three_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (xs, t) = instance(&mut rng, 3, 8);
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            for sign in [RegularizerSign::Spread, RegularizerSign::Concentrate] {
                let cfg = LimeConfig {
                    sign,
                    ..Default::default()
                };
                let s = lime_weights(&refs, &t, &cfg).unwrap();
                assert_feasible(&s.weights);
                if sign == RegularizerSign::Spread {
                    assert!(s.objective <= grid_best(&refs, &t, 0.1, sign) + 1e-3);
                }
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(lime_weights::<f64>(&[], &[1.0], &LimeConfig::default()).is_err());
        let x = [1.0];
        assert!(lime_weights(
            &[&x[..]],
            &[1.0],
            &LimeConfig {
                lambda: -1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(lime_weights(&[&x[..]], &[1.0, 2.0], &LimeConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn projection_fixes_simplex_points(raw in prop::collection::vec(0.01f64..1.0, 1..10)) {
            let s: f64 = raw.iter().sum();
            let v: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let p = project_simplex(&v);
            for (a, b) in p.iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn solutions_are_feasible(seed in any::<u64>(), k in 1usize..12, lambda in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (xs, t) = instance(&mut rng, k, 5);
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            let s = lime_weights(&refs, &t, &LimeConfig { lambda, ..Default::default() }).unwrap();
            prop_assert!(s.weights.iter().all(|&x| x >= 0.0));
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let uniform = vec![1.0 / k as f64; k];
            prop_assert!(s.objective <= lime_objective(&refs, &t, lambda, RegularizerSign::Spread, &uniform) + 1e-12);
        }
    }
}
