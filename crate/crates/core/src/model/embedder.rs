use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{EntropyGraph, GRAPH_SIDE};
use crate::scalar::{log_sum_exp, softmax, Scalar};

use super::layers;

/// Shape of the embedder: a fixed average-pool stem, `channels.len()` conv
/// blocks (3x3 conv, 2x2 max-pool, ReLU), a ReLU hidden dense layer, a
/// linear embedding layer and a linear classifier head over base classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub stem_pool: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub embed_dim: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_side: GRAPH_SIDE,
            stem_pool: 4,
            channels: vec![8, 16, 32, 32],
            hidden: 128,
            embed_dim: 64,
            classes: 2,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.stem_pool == 0 || self.input_side < self.stem_pool {
            return Err(Error::arg("stem pool must be in 1..=input_side"));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::arg("every conv block needs at least one channel"));
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.classes == 0 {
            return Err(Error::arg("dense widths and class count must be positive"));
        }
        let mut side = self.input_side / self.stem_pool;
        for b in 0..self.channels.len() {
            if side < 2 {
                return Err(Error::arg(format!(
                    "feature map collapses before conv block {b}; input side too small"
                )));
            }
            side /= 2;
        }
        Ok(())
    }

    pub fn conv_blocks(&self) -> usize {
        self.channels.len()
    }

    /// Conv blocks, hidden dense, embedding dense, classifier head.
    pub fn block_count(&self) -> usize {
        self.channels.len() + 3
    }

    pub fn hidden_block(&self) -> usize {
        self.channels.len()
    }

    pub fn output_block(&self) -> usize {
        self.channels.len() + 1
    }

    pub fn head_block(&self) -> usize {
        self.channels.len() + 2
    }

    /// Side length of the map entering conv block `b` (`b == conv_blocks()`
    /// gives the flattened map side).
    pub fn side_at(&self, b: usize) -> usize {
        (self.input_side / self.stem_pool) >> b
    }

    pub fn channels_into(&self, b: usize) -> usize {
        if b == 0 {
            1
        } else {
            self.channels[b - 1]
        }
    }

    pub fn flat_len(&self) -> usize {
        let n = self.conv_blocks();
        self.channels[n - 1] * self.side_at(n) * self.side_at(n)
    }

    /// Length of the activation entering block `b`.
    pub fn activation_len(&self, b: usize) -> usize {
        let n = self.conv_blocks();
        if b < n {
            self.channels_into(b) * self.side_at(b) * self.side_at(b)
        } else if b == n {
            self.flat_len()
        } else if b == n + 1 {
            self.hidden
        } else {
            self.embed_dim
        }
    }

    /// `(weight shape, bias shape, fan_in)` of block `b`.
    pub fn block_shapes(&self, b: usize) -> (Vec<usize>, Vec<usize>, usize) {
        let n = self.conv_blocks();
        if b < n {
            let (cin, cout) = (self.channels_into(b), self.channels[b]);
            (vec![cout, cin, 3, 3], vec![cout], cin * 9)
        } else if b == n {
            (vec![self.hidden, self.flat_len()], vec![self.hidden], self.flat_len())
        } else if b == n + 1 {
            (vec![self.embed_dim, self.hidden], vec![self.embed_dim], self.hidden)
        } else {
            (vec![self.classes, self.embed_dim], vec![self.classes], self.embed_dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }
}

/// Feature extractor weights plus the detachable classifier head.
///
/// Tensors are stored block by block as `[weight, bias]` pairs in
/// [`Architecture`] order; `frozen[b]` pins block `b` during training.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams<T> {
    pub arch: Architecture,
    pub tensors: Vec<Tensor<T>>,
    pub frozen: Vec<bool>,
}

/// Per-tensor gradient buffers, aligned with [`EmbedderParams::tensors`].
pub type Gradients<T> = Vec<Vec<T>>;

/// Fan-in scaled uniform init: He bounds for ReLU-followed layers, LeCun
/// bounds for the linear embedding and head layers. Biases start at zero.
pub fn init_embedder<T: Scalar>(arch: &Architecture, seed: u64) -> Result<EmbedderParams<T>> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::with_capacity(2 * arch.block_count());
    for b in 0..arch.block_count() {
        let (wshape, bshape, fan_in) = arch.block_shapes(b);
        let gain = if b < arch.output_block() { 6.0 } else { 3.0 };
        let bound = (gain / fan_in as f64).sqrt();
        let mut w = Tensor::<T>::zeros(wshape);
        for v in &mut w.data {
            *v = T::lit((2.0 * rng.gen::<f64>() - 1.0) * bound);
        }
        tensors.push(w);
        tensors.push(Tensor::zeros(bshape));
    }
    Ok(EmbedderParams {
        frozen: vec![false; arch.block_count()],
        arch: arch.clone(),
        tensors,
    })
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Trace<T> {
    start: usize,
    /// Input activation of each conv block from `start` on.
    conv_inputs: Vec<Vec<T>>,
    routes: Vec<Vec<u32>>,
    flat: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    pub embedding: Vec<T>,
}

/// Linear classifier over embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<T> {
    pub classes: usize,
    pub dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn logits(&self, embedding: &[T]) -> Vec<T> {
        layers::dense_forward(embedding, &self.weight, &self.bias)
    }

    /// Mean cross-entropy over `(embedding, label)` pairs with gradients for
    /// weight and bias, plus per-sample gradients with respect to the
    /// embeddings.
    pub fn loss_and_grad(&self, batch: &[(&[T], usize)]) -> Result<HeadGrad<T>> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("classifier batch".into()));
        }
        let scale = T::one() / T::from_count(batch.len());
        let mut out = HeadGrad {
            loss: T::zero(),
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
            embeddings: Vec::with_capacity(batch.len()),
        };
        for &(e, label) in batch {
            if label >= self.classes {
                return Err(Error::arg(format!(
                    "label {label} outside classifier of {} classes",
                    self.classes
                )));
            }
            let z = self.logits(e);
            out.loss += (log_sum_exp(&z) - z[label]) * scale;
            let mut g = softmax(&z);
            g[label] -= T::one();
            g.iter_mut().for_each(|v| *v *= scale);
            let ge = layers::dense_backward(e, &self.weight, &g, &mut out.weight, &mut out.bias, true);
            out.embeddings.push(ge.expect("input gradient requested"));
        }
        Ok(out)
    }
}

pub struct HeadGrad<T> {
    pub loss: T,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub embeddings: Vec<Vec<T>>,
}

impl<T: Scalar> EmbedderParams<T> {
    pub fn weight(&self, block: usize) -> &[T] {
        &self.tensors[2 * block].data
    }

    pub fn bias(&self, block: usize) -> &[T] {
        &self.tensors[2 * block + 1].data
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Freeze everything except the last conv block and the two dense layers
    /// of the embedding; the classifier head is frozen because episodic
    /// training discards it.
    pub fn with_meta_mask(mut self) -> Self {
        let n = self.arch.conv_blocks();
        for (b, f) in self.frozen.iter_mut().enumerate() {
            *f = !(b + 1 == n || b == n || b == n + 1);
        }
        self
    }

    pub fn unfrozen(mut self) -> Self {
        self.frozen.iter_mut().for_each(|f| *f = false);
        self
    }

    /// First block whose parameters receive gradients, if any.
    pub fn first_trainable(&self) -> Option<usize> {
        self.frozen.iter().position(|f| !f)
    }

    pub fn head(&self) -> ClassifierHead<T> {
        let h = self.arch.head_block();
        ClassifierHead {
            classes: self.arch.classes,
            dim: self.arch.embed_dim,
            weight: self.weight(h).to_vec(),
            bias: self.bias(h).to_vec(),
        }
    }

    pub fn set_head(&mut self, head: &ClassifierHead<T>) -> Result<()> {
        let h = self.arch.head_block();
        if head.weight.len() != self.tensors[2 * h].data.len() || head.bias.len() != self.tensors[2 * h + 1].data.len()
        {
            return Err(Error::arg("classifier head shape does not match architecture"));
        }
        self.tensors[2 * h].data.clone_from(&head.weight);
        self.tensors[2 * h + 1].data.clone_from(&head.bias);
        Ok(())
    }

    /// Precision conversion, e.g. `f64` training weights to `f32` inference.
    pub fn cast<U: Scalar>(&self) -> EmbedderParams<U> {
        EmbedderParams {
            arch: self.arch.clone(),
            frozen: self.frozen.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Stem-pooled network input for a normalized graph.
    pub fn prepare_input(&self, graph: &EntropyGraph) -> Result<Vec<T>> {
        if !graph.normalized {
            return Err(Error::state(format!(
                "graph '{}' must be normalized before embedding",
                graph.provenance
            )));
        }
        let side = self.arch.input_side;
        if graph.width != side || graph.height != side {
            return Err(Error::arg(format!(
                "embedder expects {side}x{side} graphs, got {}x{}",
                graph.width, graph.height
            )));
        }
        Ok(layers::stem_pool(&graph.pixels, side, self.arch.stem_pool))
    }

    /// `f(x)`: the embedding of one normalized graph.
    pub fn embed(&self, graph: &EntropyGraph) -> Result<Vec<T>> {
        let input = self.prepare_input(graph)?;
        Ok(self.embed_input(&input))
    }

    pub fn embed_input(&self, input: &[T]) -> Vec<T> {
        self.forward_from(0, input).embedding
    }

    /// Run conv blocks `0..block` and return the activation entering `block`.
    pub fn activation_before(&self, block: usize, input: &[T]) -> Vec<T> {
        let n = self.arch.conv_blocks();
        let mut act = input.to_vec();
        for b in 0..block.min(n) {
            act = self.conv_block(b, &act).0;
        }
        act
    }

    fn conv_block(&self, b: usize, input: &[T]) -> (Vec<T>, Vec<u32>) {
        let side = self.arch.side_at(b);
        let cin = self.arch.channels_into(b);
        let cout = self.arch.channels[b];
        let conv = layers::conv3x3_forward(input, cin, side, self.weight(b), self.bias(b), cout);
        let (pooled, route) = layers::max_pool_relu(&conv, cout, side);
        if side % 2 == 1 {
            // odd maps drop their last row/column in pooling
            debug_assert_eq!(pooled.len(), cout * (side / 2) * (side / 2));
        }
        (pooled, route)
    }

    /// Forward pass starting at conv block `start` (`start <= conv_blocks()`)
    /// from its input activation.
    pub fn forward_from(&self, start: usize, activation: &[T]) -> Trace<T> {
        let n = self.arch.conv_blocks();
        assert!(start <= n, "forward must start at a conv block or the flatten point");
        assert_eq!(activation.len(), self.arch.activation_len(start));
        let mut conv_inputs = Vec::with_capacity(n - start);
        let mut routes = Vec::with_capacity(n - start);
        let mut act = activation.to_vec();
        for b in start..n {
            let (next, route) = self.conv_block(b, &act);
            conv_inputs.push(act);
            routes.push(route);
            act = next;
        }
        let flat = act;
        let hb = self.arch.hidden_block();
        let hidden_pre = layers::dense_forward(&flat, self.weight(hb), self.bias(hb));
        let hidden: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
        let ob = self.arch.output_block();
        let embedding = layers::dense_forward(&hidden, self.weight(ob), self.bias(ob));
        Trace {
            start,
            conv_inputs,
            routes,
            flat,
            hidden_pre,
            hidden,
            embedding,
        }
    }

    /// Backpropagate `dL/d embedding` through the trace into `grads`.
    /// Blocks below `first_trainable()` are skipped entirely; frozen blocks
    /// above it pass gradients through without accumulating.
    pub fn backward(&self, trace: &Trace<T>, grad_embedding: &[T], grads: &mut Gradients<T>) {
        let Some(lowest) = self.first_trainable() else {
            return;
        };
        let n = self.arch.conv_blocks();
        let lowest = lowest.max(trace.start);
        let ob = self.arch.output_block();
        let hb = self.arch.hidden_block();
        if lowest > ob {
            return;
        }

        let mut scratch_w;
        let mut scratch_b;
        macro_rules! sinks {
            ($b:expr) => {{
                if self.frozen[$b] {
                    scratch_w = vec![T::zero(); self.tensors[2 * $b].data.len()];
                    scratch_b = vec![T::zero(); self.tensors[2 * $b + 1].data.len()];
                    (&mut scratch_w[..], &mut scratch_b[..])
                } else {
                    let (lo, hi) = grads.split_at_mut(2 * $b + 1);
                    (&mut lo[2 * $b][..], &mut hi[0][..])
                }
            }};
        }

        let g_hidden = {
            let (gw, gb) = sinks!(ob);
            layers::dense_backward(&trace.hidden, self.weight(ob), grad_embedding, gw, gb, lowest < ob)
        };
        let Some(mut g_hidden) = g_hidden else { return };
        for (g, &z) in g_hidden.iter_mut().zip(&trace.hidden_pre) {
            if z <= T::zero() {
                *g = T::zero();
            }
        }
        let g_flat = {
            let (gw, gb) = sinks!(hb);
            layers::dense_backward(&trace.flat, self.weight(hb), &g_hidden, gw, gb, lowest < hb)
        };
        let Some(mut g_act) = g_flat else { return };
        for b in (lowest..n).rev() {
            let k = b - trace.start;
            let side = self.arch.side_at(b);
            let cin = self.arch.channels_into(b);
            let cout = self.arch.channels[b];
            let g_conv = layers::max_pool_relu_backward(&g_act, &trace.routes[k], cout * side * side);
            let input = &trace.conv_inputs[k];
            let mut g_in = (b > lowest).then(|| vec![T::zero(); input.len()]);
            let (gw, gb) = sinks!(b);
            layers::conv3x3_backward(
                input,
                cin,
                side,
                self.weight(b),
                cout,
                &g_conv,
                gw,
                gb,
                g_in.as_deref_mut(),
            );
            match g_in {
                Some(g) => g_act = g,
                None => break,
            }
        }
    }
}
