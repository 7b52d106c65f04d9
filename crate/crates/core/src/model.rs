//! Layered feedforward classifier.
//!
//! Layers are addressed by 1-based index `1..=L`. A "layer" is the block of
//! one dense transform's weights and biases; drift measurement and adapters
//! both operate at that granularity.

use std::fs;
use std::path::Path;

use crate::codec::{Reader, Writer, CHECKSUM_LEN};
use crate::error::{Error, Result};
use crate::numcore::{
    matmul, matmul_nt, matmul_tn, relu, relu_backward, softmax_cross_entropy, Rng, Tensor,
};

const MAGIC: &[u8; 4] = b"FSDM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in x out`
    pub weights: Tensor,
    /// `1 x out`
    pub biases: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, biases: Tensor) -> Result<Self> {
        if biases.rows() != 1 || weights.cols() != biases.cols() {
            return Err(Error::dim(format!(
                "weights {:?} with biases {:?}",
                weights.shape(),
                biases.shape()
            )));
        }
        Ok(DenseLayer { weights, biases })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer { weights: Tensor::zeros(input, output), biases: Tensor::zeros(1, output) }
    }

    pub fn input_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn same_shape(&self, other: &DenseLayer) -> bool {
        self.weights.shape() == other.weights.shape() && self.biases.shape() == other.biases.shape()
    }

    /// Weights then biases, row-major.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.data().iter().chain(self.biases.data()).copied()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params().collect()
    }

    /// Inverse of [`DenseLayer::flat`] for a layer of this shape.
    pub fn with_flat(&self, flat: &[f64]) -> Result<DenseLayer> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(format!(
                "{} values for a {}-parameter layer",
                flat.len(),
                self.param_count()
            )));
        }
        let nw = self.weights.len();
        Ok(DenseLayer {
            weights: Tensor::from_vec(self.input_size(), self.output_size(), flat[..nw].to_vec())?,
            biases: Tensor::from_vec(1, self.output_size(), flat[nw..].to_vec())?,
        })
    }

    pub fn bit_eq(&self, other: &DenseLayer) -> bool {
        self.weights.bit_eq(&other.weights) && self.biases.bit_eq(&other.biases)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    layers: Vec<DenseLayer>,
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// inputs[i] is the input to layer i (0-based); inputs[0] is the batch.
    inputs: Vec<Tensor>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Tensor>,
    logits: Tensor,
}

impl LayeredModel {
    /// Multilayer perceptron with ReLU hidden activations. Weights are drawn
    /// uniform in `[-init_scale, init_scale]`, biases start at zero.
    pub fn new_mlp(layer_sizes: &[usize], init_scale: f64, rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output size"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if !(init_scale >= 0.0) || !init_scale.is_finite() {
            return Err(Error::config("init_scale must be a finite non-negative number"));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let data = (0..w[0] * w[1]).map(|_| rng.uniform(-init_scale, init_scale)).collect();
                DenseLayer {
                    weights: Tensor::from_vec(w[0], w[1], data).expect("sized"),
                    biases: Tensor::zeros(1, w[1]),
                }
            })
            .collect();
        Ok(LayeredModel { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_size() != pair[1].input_size() {
                return Err(Error::dim(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i + 1,
                    pair[0].output_size(),
                    i + 2,
                    pair[1].input_size()
                )));
            }
        }
        Ok(LayeredModel { layers })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].input_size()];
        s.extend(self.layers.iter().map(DenseLayer::output_size));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].output_size()
    }

    fn check_index(&self, l: usize) -> Result<usize> {
        if l == 0 || l > self.layers.len() {
            return Err(Error::Index { index: l, len: self.layers.len() });
        }
        Ok(l - 1)
    }

    /// Layer `l`, 1-based.
    pub fn layer(&self, l: usize) -> Result<&DenseLayer> {
        Ok(&self.layers[self.check_index(l)?])
    }

    /// Replace layer `l` (1-based) with a block of identical shape.
    pub fn replace_layer(&mut self, l: usize, layer: DenseLayer) -> Result<DenseLayer> {
        let i = self.check_index(l)?;
        if !self.layers[i].same_shape(&layer) {
            return Err(Error::dim(format!("replacement for layer {l} has a different shape")));
        }
        Ok(std::mem::replace(&mut self.layers[i], layer))
    }

    pub fn layer_param_count(&self, l: usize) -> Result<usize> {
        Ok(self.layer(l)?.param_count())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(DenseLayer::params).collect()
    }

    /// Same architecture with parameters taken from a flat vector laid out
    /// like [`LayeredModel::flat_params`].
    pub fn with_flat_params(&self, flat: &[f64]) -> Result<LayeredModel> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(format!(
                "{} values for a {}-parameter model",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let n = layer.param_count();
            layers.push(layer.with_flat(&flat[offset..offset + n])?);
            offset += n;
        }
        Ok(LayeredModel { layers })
    }

    fn trace(&self, x: &Tensor) -> Result<Trace> {
        if x.cols() != self.input_size() {
            return Err(Error::dim(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.input_size()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = matmul(&h, &layer.weights)?.add_row_broadcast(&layer.biases)?;
            inputs.push(h);
            if i == last {
                return Ok(Trace { inputs, pre, logits: z });
            }
            h = relu(&z);
            pre.push(z);
        }
        unreachable!("model has at least one layer")
    }

    /// Logits for a batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.logits)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.argmax_rows())
    }

    /// Mean cross-entropy loss and the gradient for every layer.
    pub fn backward(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Vec<DenseLayer>)> {
        self.backward_from(x, labels, 1)
    }

    /// Like [`LayeredModel::backward`], but backpropagation stops at layer
    /// `lowest` (1-based). Gradients for layers below it are returned as zeros.
    pub fn backward_from(
        &self,
        x: &Tensor,
        labels: &[usize],
        lowest: usize,
    ) -> Result<(f64, Vec<DenseLayer>)> {
        let stop = self.check_index(lowest)?;
        let trace = self.trace(x)?;
        let (loss, mut delta) = softmax_cross_entropy(&trace.logits, labels)?;
        let mut grads: Vec<DenseLayer> = self
            .layers
            .iter()
            .map(|l| DenseLayer::zeros(l.input_size(), l.output_size()))
            .collect();
        for i in (stop..self.layers.len()).rev() {
            grads[i] = DenseLayer {
                weights: matmul_tn(&trace.inputs[i], &delta)?,
                biases: delta.sum_rows(),
            };
            if i > stop {
                let upstream = matmul_nt(&delta, &self.layers[i].weights)?;
                delta = relu_backward(&trace.pre[i - 1], &upstream)?;
            }
        }
        Ok((loss, grads))
    }

    /// Multiply-add count of one forward pass plus backpropagation down to
    /// layer `lowest`, for a batch of `batch` samples.
    pub fn step_flops(&self, batch: usize, lowest: usize) -> u64 {
        let stop = lowest.saturating_sub(1);
        let mut flops = 0u64;
        for (i, l) in self.layers.iter().enumerate() {
            let mac = 2 * (batch * l.input_size() * l.output_size()) as u64;
            flops += mac;
            if i >= stop {
                flops += mac;
                if i > stop {
                    flops += mac;
                }
            }
        }
        flops
    }

    /// Forward-only cost, used for evaluation accounting.
    pub fn forward_flops(&self, batch: usize) -> u64 {
        self.layers
            .iter()
            .map(|l| 2 * (batch * l.input_size() * l.output_size()) as u64)
            .sum()
    }

    /// Subtract `lr * grad` from every layer where `trainable[i]` holds
    /// (all layers when `trainable` is `None`).
    pub fn apply_gradients(
        &mut self,
        grads: &[DenseLayer],
        lr: f64,
        trainable: Option<&[bool]>,
    ) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::dim("gradient list does not match layer count"));
        }
        for (i, (layer, g)) in self.layers.iter_mut().zip(grads).enumerate() {
            if trainable.is_some_and(|t| !t[i]) {
                continue;
            }
            layer.weights = crate::numcore::sgd_step(&layer.weights, &g.weights, lr)?;
            layer.biases = crate::numcore::sgd_step(&layer.biases, &g.biases, lr)?;
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &LayeredModel) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.bit_eq(b))
    }

    /// Versioned binary checkpoint: magic, version, layer sizes, row-major
    /// parameters (weights then biases per layer), SHA-256 trailer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.sizes();
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(sizes.len() as u32);
        for s in &sizes {
            w.u32(*s as u32);
        }
        for layer in &self.layers {
            w.f64s(layer.weights.data());
            w.f64s(layer.biases.data());
        }
        w.finish_checked()
    }

    /// Exact byte length of [`LayeredModel::to_bytes`].
    pub fn serialized_len(&self) -> usize {
        8 + 4 + 4 * (self.layers.len() + 1) + 8 * self.param_count() + CHECKSUM_LEN
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_checked(bytes, MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        if n < 2 {
            return Err(Error::Integrity("checkpoint lists fewer than two sizes".into()));
        }
        let sizes: Vec<usize> = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let mut layers = Vec::with_capacity(n - 1);
        for w in sizes.windows(2) {
            let weights = Tensor::from_vec(w[0], w[1], r.f64s(w[0] * w[1])?)?;
            let biases = Tensor::from_vec(1, w[1], r.f64s(w[1])?)?;
            layers.push(DenseLayer { weights, biases });
        }
        r.expect_end()?;
        LayeredModel::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        LayeredModel::from_bytes(&fs::read(path)?)
    }
}
