//! Fully connected ReLU Q-network with hand-written backpropagation.
//!
//! All parameters live in one flat buffer so optimizers can treat the network
//! as a single vector. For each layer the buffer holds the `out x in` weight
//! matrix row-major followed by the `out` biases.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl LayerSpan {
    fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn biases(&self) -> Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    fn end(&self) -> usize {
        self.offset + (self.fan_in + 1) * self.fan_out
    }
}

fn spans(sizes: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset = span.end();
            span
        })
        .collect()
}

/// Q-network: ReLU on every hidden layer, affine output layer with one unit
/// per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    sizes: Vec<usize>,
    spans: Vec<LayerSpan>,
    params: Vec<T>,
}

/// Parameter gradients, laid out exactly like [`QNetwork::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    spans: Vec<LayerSpan>,
    values: Vec<T>,
}

/// Reusable activation buffers for repeated forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    activations: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> QNetwork<T> {
    /// Zero-initialized network. `sizes` is `[input, hidden..., n_actions]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let spans = spans(sizes);
        let n = spans.last().map_or(0, LayerSpan::end);
        Ok(Self {
            sizes: sizes.to_vec(),
            spans,
            params: vec![T::zero(); n],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for span in net.spans.clone() {
            let bound = 1.0 / (span.fan_in as f64).sqrt();
            for p in &mut net.params[span.offset..span.end()] {
                *p = T::of(rng.gen_range(-bound..=bound));
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit per-layer weights (`out x in`) and biases.
    pub fn from_layers(layers: &[(Matrix<T>, Vec<T>)]) -> Result<Self> {
        let first = layers
            .first()
            .ok_or(Error::Empty("network needs at least one layer"))?;
        let mut sizes = vec![first.0.cols()];
        for (i, (w, b)) in layers.iter().enumerate() {
            if w.cols() != sizes[i] || b.len() != w.rows() {
                return Err(Error::dims(format!(
                    "layer {i}: weights {}x{}, bias {}, expected fan_in {}",
                    w.rows(),
                    w.cols(),
                    b.len(),
                    sizes[i]
                )));
            }
            sizes.push(w.rows());
        }
        let mut net = Self::zeros(&sizes)?;
        for (span, (w, b)) in net.spans.clone().iter().zip(layers) {
            net.params[span.weights()].copy_from_slice(w.as_slice());
            net.params[span.biases()].copy_from_slice(b);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_actions(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    /// Width `f` of the penultimate activation vector.
    pub fn feature_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    pub fn n_layers(&self) -> usize {
        self.spans.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[T] {
        &self.params[self.spans[layer].weights()]
    }

    pub fn layer_biases(&self, layer: usize) -> &[T] {
        &self.params[self.spans[layer].biases()]
    }

    /// Parameters of every layer but the last.
    pub fn body_params(&self) -> &[T] {
        &self.params[..self.spans[self.spans.len() - 1].offset]
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            spans: self.spans.clone(),
            values: vec![T::zero(); self.params.len()],
        }
    }

    fn check_input(&self, state: &[T]) -> Result<()> {
        if state.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "state of length {} for a network with input width {}",
                state.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs the network, leaving every layer's activations in `ws`. Index 0 is
    /// the input, the second-to-last entry the features, the last the Q-values.
    fn forward_into(&self, state: &[T], ws: &mut Workspace<T>, upto: usize) {
        ws.activations.resize_with(upto + 1, Vec::new);
        ws.activations[0].clear();
        ws.activations[0].extend_from_slice(state);
        let last = self.spans.len() - 1;
        for (l, span) in self.spans.iter().enumerate().take(upto) {
            let (done, rest) = ws.activations.split_at_mut(l + 1);
            let input = &done[l];
            let out = &mut rest[0];
            out.clear();
            let w = &self.params[span.weights()];
            let b = &self.params[span.biases()];
            for (o, row) in w.chunks_exact(span.fan_in).enumerate() {
                let z = dot(row, input) + b[o];
                out.push(if l == last { z } else { z.max(T::zero()) });
            }
        }
    }

    /// Q-values and penultimate features for one state.
    pub fn forward(&self, state: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let mut ws = Workspace::default();
        let q = self.forward_with(state, &mut ws)?.to_vec();
        let n = ws.activations.len();
        Ok((q, std::mem::take(&mut ws.activations[n - 2])))
    }

    /// Allocation-free forward pass; returns the Q-values.
    pub fn forward_with<'w>(&self, state: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        self.check_input(state)?;
        self.forward_into(state, ws, self.spans.len());
        Ok(ws.activations.last().expect("activations"))
    }

    pub fn q_values(&self, state: &[T]) -> Result<Vec<T>> {
        let mut ws = Workspace::default();
        Ok(self.forward_with(state, &mut ws)?.to_vec())
    }

    /// Penultimate-layer activations `φ(s)` without evaluating the last layer.
    pub fn features(&self, state: &[T]) -> Result<Vec<T>> {
        let mut ws = Workspace::default();
        Ok(self.features_with(state, &mut ws)?.to_vec())
    }

    pub fn features_with<'w>(&self, state: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        self.check_input(state)?;
        let upto = self.spans.len() - 1;
        self.forward_into(state, ws, upto);
        Ok(&ws.activations[upto])
    }

    /// Gradient of `output_grad · Q(state)` with respect to every parameter.
    pub fn backward(&self, state: &[T], output_grad: &[T]) -> Result<Gradients<T>> {
        let mut grads = self.zero_gradients();
        let mut ws = Workspace::default();
        self.accumulate_gradients(state, output_grad, &mut grads, &mut ws)?;
        Ok(grads)
    }

    /// Adds the gradient of `output_grad · Q(state)` into `grads`.
    pub fn accumulate_gradients(
        &self,
        state: &[T],
        output_grad: &[T],
        grads: &mut Gradients<T>,
        ws: &mut Workspace<T>,
    ) -> Result<()> {
        if output_grad.len() != self.n_actions() {
            return Err(Error::dims(format!(
                "output gradient of length {} for {} actions",
                output_grad.len(),
                self.n_actions()
            )));
        }
        if grads.values.len() != self.params.len() {
            return Err(Error::dims("gradient buffer does not match network"));
        }
        self.check_input(state)?;
        self.forward_into(state, ws, self.spans.len());
        ws.delta.clear();
        ws.delta.extend_from_slice(output_grad);
        for (l, span) in self.spans.iter().enumerate().rev() {
            let input = &ws.activations[l];
            let (gw, gb) = grads.values[span.weights().start..span.end()]
                .split_at_mut(span.fan_in * span.fan_out);
            for (o, &d) in ws.delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[o] += d;
                for (g, &x) in gw[o * span.fan_in..(o + 1) * span.fan_in]
                    .iter_mut()
                    .zip(input)
                {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through the weights and the ReLU of the layer below.
            let w = &self.params[span.weights()];
            ws.delta_prev.clear();
            ws.delta_prev.resize(span.fan_in, T::zero());
            for (o, &d) in ws.delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (p, &wij) in ws
                    .delta_prev
                    .iter_mut()
                    .zip(&w[o * span.fan_in..(o + 1) * span.fan_in])
                {
                    *p += d * wij;
                }
            }
            for (p, &a) in ws.delta_prev.iter_mut().zip(input) {
                if a <= T::zero() {
                    *p = T::zero();
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        Ok(())
    }

    /// Last-layer weights (`n_actions x f`) and biases.
    pub fn last_layer(&self) -> (Matrix<T>, Vec<T>) {
        let span = self.spans[self.spans.len() - 1];
        let w = Matrix::from_vec(
            span.fan_out,
            span.fan_in,
            self.params[span.weights()].to_vec(),
        )
        .expect("span shape");
        (w, self.params[span.biases()].to_vec())
    }

    pub fn set_last_layer(&mut self, weights: &Matrix<T>, biases: &[T]) -> Result<()> {
        let span = self.spans[self.spans.len() - 1];
        if weights.rows() != span.fan_out
            || weights.cols() != span.fan_in
            || biases.len() != span.fan_out
        {
            return Err(Error::dims(format!(
                "last layer is {}x{} (+{} biases), got {}x{} (+{})",
                span.fan_out,
                span.fan_in,
                span.fan_out,
                weights.rows(),
                weights.cols(),
                biases.len()
            )));
        }
        self.params[span.weights()].copy_from_slice(weights.as_slice());
        self.params[span.biases()].copy_from_slice(biases);
        Ok(())
    }

    /// Copies all parameters from a network of identical shape.
    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::dims(format!(
                "cannot copy {:?} into {:?}",
                other.sizes, self.sizes
            )));
        }
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    /// Fraction of exactly-zero feature entries over a batch of states.
    pub fn feature_sparsity<S: AsRef<[T]>>(&self, states: &[S]) -> Result<f64> {
        let mut ws = Workspace::default();
        let (mut zeros, mut total) = (0usize, 0usize);
        for s in states {
            let phi = self.features_with(s.as_ref(), &mut ws)?;
            zeros += phi.iter().filter(|v| **v == T::zero()).count();
            total += phi.len();
        }
        if total == 0 {
            return Err(Error::Empty("feature sparsity of an empty batch"));
        }
        Ok(zeros as f64 / total as f64)
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        &self.values[self.spans[layer].weights()]
    }

    pub fn biases(&self, layer: usize) -> &[T] {
        &self.values[self.spans[layer].biases()]
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn scale(&mut self, factor: T) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"LSDQNNET";
const CHECKPOINT_VERSION: u32 = 1;

impl<T: Scalar> QNetwork<T> {
    /// Writes the network checkpoint.
    ///
    /// Layout (all little-endian): the 8-byte magic `LSDQNNET`, a `u32`
    /// format version (1), a `u32` count of layer sizes, one `u64` per layer
    /// size, then every parameter as an `f64` in the flat order of
    /// [`QNetwork::params`]: per layer, row-major `out x in` weights followed
    /// by the `out` biases.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            out.write_all(&(s as u64).to_le_bytes())?;
        }
        for p in &self.params {
            out.write_all(&p.to_f64_lossy().to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a network checkpoint".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        input.read_exact(&mut word)?;
        let n_sizes = u32::from_le_bytes(word) as usize;
        if n_sizes > 1024 {
            return Err(Error::Format(format!("implausible layer count {n_sizes}")));
        }
        let mut long = [0u8; 8];
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            input.read_exact(&mut long)?;
            sizes.push(u64::from_le_bytes(long) as usize);
        }
        let mut net = Self::zeros(&sizes).map_err(|e| Error::Format(e.to_string()))?;
        for p in net.params.iter_mut() {
            input.read_exact(&mut long)?;
            *p = T::of(f64::from_le_bytes(long));
        }
        if input.read(&mut long)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }
}
