use crate::scalar::Scalar;

use super::embedder::{EmbedderParams, Gradients};

/// Adaptive-moment optimizer state over an [`EmbedderParams`] layout.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: i32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &EmbedderParams<T>, learning_rate: T, beta1: T, beta2: T, epsilon: T) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: params.zero_grads(),
            second: params.zero_grads(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update of every tensor whose block is not frozen.
    pub fn step(&mut self, params: &mut EmbedderParams<T>, grads: &Gradients<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for (i, tensor) in params.tensors.iter_mut().enumerate() {
            if params.frozen[i / 2] {
                continue;
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((p, &g), m), v) in tensor.data.iter_mut().zip(&grads[i]).zip(m).zip(v) {
                *m = self.beta1 * *m + (one - self.beta1) * g;
                *v = self.beta2 * *v + (one - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
