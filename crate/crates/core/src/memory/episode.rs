use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, softmax, squared_distance, Scalar};

use super::{
    adaptive_prototype, attention_weights, blend, check_tau, class_mean, FeatureSource, MemorySlot, TaskMemory,
};

/// Memory built from one episode's support set.
///
/// Each class `c` attends from its raw support mean into the full memory to
/// obtain its adaptive prototype `v_m(c)`. Support features of `c` and every
/// query feature scored against `c` are blended with that same `v_m(c)`.
#[derive(Debug, Clone)]
pub struct EpisodeMemory<T> {
    pub memory: TaskMemory<T>,
    pub means: Vec<Vec<T>>,
    pub adaptive: Vec<Vec<T>>,
    pub prototypes: Vec<Vec<T>>,
    pub support_counts: Vec<usize>,
    pub tau: T,
}

impl<T: Scalar> EpisodeMemory<T> {
    /// `extra_slots` are appended after the `way` episode slots and are
    /// renumbered to follow them.
    pub fn build(
        support: &[&[T]],
        labels: &[usize],
        way: usize,
        tau: T,
        extra_slots: &[MemorySlot<T>],
    ) -> Result<Self> {
        check_tau(tau)?;
        if support.len() != labels.len() {
            return Err(Error::arg("support embeddings and labels differ in length"));
        }
        let mut slots = Vec::with_capacity(way + extra_slots.len());
        for c in 0..way {
            let members: Vec<&[T]> = support
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(e, _)| *e)
                .collect();
            slots.push(class_mean(c, &members)?);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= way) {
            return Err(Error::arg(format!("support label {bad} outside {way}-way episode")));
        }
        let means: Vec<Vec<T>> = slots.iter().map(|s| s.vector.clone()).collect();
        let support_counts = slots.iter().map(|s| s.support_count).collect();
        slots.extend(extra_slots.iter().enumerate().map(|(i, s)| MemorySlot {
            class_id: way + i,
            ..s.clone()
        }));
        let memory = TaskMemory::new(slots)?;

        let mut adaptive = Vec::with_capacity(way);
        let mut prototypes = Vec::with_capacity(way);
        for mean in &means {
            let a = attention_weights(mean, &memory)?;
            let v_m = adaptive_prototype(&a, &memory)?;
            prototypes.push(blend(&v_m, mean, tau, FeatureSource::Support)?.h);
            adaptive.push(v_m);
        }
        Ok(Self {
            memory,
            means,
            adaptive,
            prototypes,
            support_counts,
            tau,
        })
    }

    pub fn way(&self) -> usize {
        self.prototypes.len()
    }

    /// Query feature blended with each class's adaptive prototype.
    pub fn blended_queries(&self, f_q: &[T]) -> Vec<Vec<T>> {
        let keep = T::one() - self.tau;
        self.adaptive
            .iter()
            .map(|v_m| v_m.iter().zip(f_q).map(|(&m, &f)| self.tau * m + keep * f).collect())
            .collect()
    }

    pub fn squared_distances(&self, f_q: &[T]) -> Vec<T> {
        self.blended_queries(f_q)
            .iter()
            .zip(&self.prototypes)
            .map(|(h_q, h_c)| squared_distance(h_q, h_c))
            .collect()
    }

    pub fn distribution(&self, f_q: &[T]) -> Vec<T> {
        let logits: Vec<T> = self.squared_distances(f_q).into_iter().map(|d| -d).collect();
        softmax(&logits)
    }

    /// Most probable class; ties resolve to the lowest label.
    pub fn predict(&self, f_q: &[T]) -> usize {
        argmin(&self.squared_distances(f_q))
    }
}

pub(crate) fn argmin<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Mean query cross-entropy of one episode under the prototype softmax,
/// with gradients with respect to every support and query embedding.
#[derive(Debug, Clone)]
pub struct EpisodeObjective<T> {
    pub loss: T,
    pub grad_support: Vec<Vec<T>>,
    pub grad_query: Vec<Vec<T>>,
    pub correct: usize,
}

pub fn episode_objective<T: Scalar>(
    support: &[&[T]],
    support_labels: &[usize],
    query: &[&[T]],
    query_labels: &[usize],
    way: usize,
    tau: T,
) -> Result<EpisodeObjective<T>> {
    if query.is_empty() || query.len() != query_labels.len() {
        return Err(Error::arg("episode needs labeled queries"));
    }
    if way < 2 {
        return Err(Error::arg("episode needs at least two classes"));
    }
    let mem = EpisodeMemory::build(support, support_labels, way, tau, &[])?;
    let dim = mem.memory.dim();
    let scale = T::one() / T::from_count(query.len());
    let two_keep = T::lit(2.0) * (T::one() - tau);

    let mut loss = T::zero();
    let mut correct = 0;
    let mut grad_query = Vec::with_capacity(query.len());
    // dL/d(class mean), spread over the class's support items at the end
    let mut grad_mean = vec![vec![T::zero(); dim]; way];
    for (&f_q, &y) in query.iter().zip(query_labels) {
        if y >= way {
            return Err(Error::arg(format!("query label {y} outside {way}-way episode")));
        }
        let h_q = mem.blended_queries(f_q);
        let dist: Vec<T> = h_q
            .iter()
            .zip(&mem.prototypes)
            .map(|(a, b)| squared_distance(a, b))
            .collect();
        let logits: Vec<T> = dist.iter().map(|&d| -d).collect();
        loss += (dist[y] + log_sum_exp(&logits)) * scale;
        if argmin(&dist) == y {
            correct += 1;
        }
        let p = softmax(&logits);
        let mut g_q = vec![T::zero(); dim];
        for c in 0..way {
            let indicator = if c == y { T::one() } else { T::zero() };
            let coeff = (indicator - p[c]) * scale * two_keep;
            for k in 0..dim {
                let diff = h_q[c][k] - mem.prototypes[c][k];
                g_q[k] += coeff * diff;
                grad_mean[c][k] -= coeff * diff;
            }
        }
        grad_query.push(g_q);
    }
    let grad_support = support_labels
        .iter()
        .map(|&l| {
            let n = T::from_count(mem.support_counts[l]);
            grad_mean[l].iter().map(|&g| g / n).collect()
        })
        .collect();
    Ok(EpisodeObjective {
        loss,
        grad_support,
        grad_query,
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::predict_distribution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|x| x.as_slice()).collect()
    }

    #[test]
    fn zero_tau_is_a_plain_prototypical_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let support = random(&mut rng, 9, 6);
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let queries = random(&mut rng, 7, 6);
        let mem = EpisodeMemory::build(&refs(&support), &labels, 3, 0.0, &[]).unwrap();
        let plain: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                let members: Vec<&[f64]> = (0..9)
                    .filter(|&i| labels[i] == c)
                    .map(|i| support[i].as_slice())
                    .collect();
                class_mean(c, &members).unwrap().vector
            })
            .collect();
        for q in &queries {
            let expected = predict_distribution(q, &plain).unwrap();
            let got = mem.distribution(q);
            assert_eq!(
                got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                expected.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let support = random(&mut rng, 4, 3);
        let labels = [0, 1, 1, 2];
        let queries = random(&mut rng, 5, 3);
        let qlabels = [0, 1, 2, 2, 1];
        let tau = 0.3;
        let obj = episode_objective(&refs(&support), &labels, &refs(&queries), &qlabels, 3, tau).unwrap();
        let loss = |s: &[Vec<f64>], q: &[Vec<f64>]| {
            episode_objective(&refs(s), &labels, &refs(q), &qlabels, 3, tau)
                .unwrap()
                .loss
        };
        let eps = 1e-6;
        for i in 0..support.len() {
            for k in 0..3 {
                let (mut p, mut m) = (support.clone(), support.clone());
                p[i][k] += eps;
                m[i][k] -= eps;
                let fd = (loss(&p, &queries) - loss(&m, &queries)) / (2.0 * eps);
                assert!((fd - obj.grad_support[i][k]).abs() < 1e-7, "support {i},{k}");
            }
        }
        for i in 0..queries.len() {
            for k in 0..3 {
                let (mut p, mut m) = (queries.clone(), queries.clone());
                p[i][k] += eps;
                m[i][k] -= eps;
                let fd = (loss(&support, &p) - loss(&support, &m)) / (2.0 * eps);
                assert!((fd - obj.grad_query[i][k]).abs() < 1e-7, "query {i},{k}");
            }
        }
    }

    #[test]
    fn duplicate_queries_are_classified_perfectly() {
        let support = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
        let obj = episode_objective(&refs(&support), &[0, 1, 2], &refs(&support), &[0, 1, 2], 3, 0.5).unwrap();
        assert_eq!(obj.correct, 3);
    }

    #[test]
    fn missing_class_in_support_is_an_error() {
        let support = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(EpisodeMemory::build(&refs(&support), &[0, 0], 2, 0.5, &[]).is_err());
        assert!(EpisodeMemory::build(&refs(&support), &[0, 2], 2, 0.5, &[]).is_err());
    }

    #[test]
    fn extra_slots_extend_memory() {
        let support = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let extra = [MemorySlot {
            class_id: 0,
            vector: vec![1.0, 1.0],
            support_count: 20,
        }];
        let mem = EpisodeMemory::build(&refs(&support), &[0, 1], 2, 0.5, &extra).unwrap();
        assert_eq!(mem.memory.len(), 3);
        assert_eq!(mem.memory.slots()[2].class_id, 2);
    }
}
