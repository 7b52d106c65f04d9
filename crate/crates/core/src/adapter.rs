//! Sparse unlearning adapters.
//!
//! An adapter belongs to one critical layer. It fixes a random subset of the
//! layer's parameter positions at construction time and carries a trainable
//! delta for each of them. The delta lives only on kept positions, so the
//! "values are zero outside the mask" invariant holds by construction.
//!
//! The original model is never modified: the unlearned model is the pair
//! `(original, adapters)`, merged additively when logits are needed, and
//! removing the adapters simply hands back the retained original.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::critical::DriftRanking;
use crate::error::{Error, Result};
use crate::model::{DenseLayer, LayeredModel};
use crate::numcore::{Rng, Tensor};

const CKPT_MAGIC: &[u8; 4] = b"FSDA";
const VALUES_MAGIC: &[u8; 4] = b"FSDV";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdapter {
    layer_index: usize,
    input: usize,
    output: usize,
    keep_rate: f64,
    /// Kept positions in the layer's flat (weights then biases) layout, ascending.
    kept: Vec<usize>,
    /// One delta per kept position.
    values: Vec<f64>,
}

impl SparseAdapter {
    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn keep_rate(&self) -> f64 {
        self.keep_rate
    }

    pub fn kept_positions(&self) -> &[usize] {
        &self.kept
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    /// Parameter count of the layer the adapter is attached to.
    pub fn layer_param_count(&self) -> usize {
        self.input * self.output + self.output
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    fn layer_shape_matches(&self, layer: &DenseLayer) -> bool {
        layer.input_size() == self.input && layer.output_size() == self.output
    }

    fn expand(&self, dense: impl Fn(usize) -> f64) -> DenseLayer {
        let mut flat = vec![0.0; self.layer_param_count()];
        for (j, &pos) in self.kept.iter().enumerate() {
            flat[pos] = dense(j);
        }
        let nw = self.input * self.output;
        DenseLayer {
            weights: Tensor::from_vec(self.input, self.output, flat[..nw].to_vec()).expect("sized"),
            biases: Tensor::from_vec(1, self.output, flat[nw..].to_vec()).expect("sized"),
        }
    }

    /// Binary mask shaped like the layer.
    pub fn mask(&self) -> DenseLayer {
        self.expand(|_| 1.0)
    }

    /// Delta values shaped like the layer, zero off the mask.
    pub fn dense_values(&self) -> DenseLayer {
        self.expand(|j| self.values[j])
    }

    /// Overwrite the deltas. Used when loading aggregated values.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.kept.len() {
            return Err(Error::dim(format!(
                "{} values for an adapter with {} kept positions",
                values.len(),
                self.kept.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    /// Apply `values -= lr * grad` at the kept positions of a dense layer gradient.
    fn descend(&mut self, grad: &DenseLayer, lr: f64) {
        let flat = grad.flat();
        for (v, &pos) in self.values.iter_mut().zip(&self.kept) {
            *v -= lr * flat[pos];
        }
    }
}

/// Sample a Bernoulli(`keep_rate`) mask over the layer's parameters and
/// start every delta at zero.
pub fn build_adapter(
    layer: &DenseLayer,
    layer_index: usize,
    keep_rate: f64,
    rng: &mut Rng,
) -> Result<SparseAdapter> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(Error::config(format!("keep_rate must lie in (0, 1], got {keep_rate}")));
    }
    let kept: Vec<usize> = (0..layer.param_count()).filter(|_| rng.bernoulli(keep_rate)).collect();
    let values = vec![0.0; kept.len()];
    Ok(SparseAdapter {
        layer_index,
        input: layer.input_size(),
        output: layer.output_size(),
        keep_rate,
        kept,
        values,
    })
}

/// Adapters keyed by layer index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdapterSet {
    adapters: BTreeMap<usize, SparseAdapter>,
}

impl AdapterSet {
    /// One adapter per critical layer in `ranking`. Each layer's mask is drawn
    /// from its own fork of `rng`.
    pub fn for_ranking(
        model: &LayeredModel,
        ranking: &DriftRanking,
        keep_rate: f64,
        rng: &Rng,
    ) -> Result<Self> {
        let mut adapters = BTreeMap::new();
        for l in ranking.critical_layers() {
            let layer = model.layer(l)?;
            let adapter = build_adapter(layer, l, keep_rate, &mut rng.fork(l as u64))?;
            adapters.insert(l, adapter);
        }
        Ok(AdapterSet { adapters })
    }

    pub fn from_adapters(list: Vec<SparseAdapter>) -> Result<Self> {
        let mut adapters = BTreeMap::new();
        for a in list {
            if adapters.insert(a.layer_index, a).is_some() {
                return Err(Error::config("two adapters for the same layer"));
            }
        }
        Ok(AdapterSet { adapters })
    }

    pub fn layer_indices(&self) -> Vec<usize> {
        self.adapters.keys().copied().collect()
    }

    pub fn get(&self, layer_index: usize) -> Option<&SparseAdapter> {
        self.adapters.get(&layer_index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SparseAdapter> {
        self.adapters.values()
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.iter().map(SparseAdapter::kept_count).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.iter().map(SparseAdapter::nonzero_count).sum()
    }

    /// Lowest layer carrying an adapter; backpropagation can stop there.
    pub fn lowest_layer(&self) -> Option<usize> {
        self.adapters.keys().next().copied()
    }

    /// All deltas concatenated in layer order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.iter().flat_map(|a| a.values.iter().copied()).collect()
    }

    /// Copy with deltas replaced from a vector laid out like [`AdapterSet::flat_values`].
    pub fn with_flat_values(&self, flat: &[f64]) -> Result<AdapterSet> {
        if flat.len() != self.kept_count() {
            return Err(Error::dim(format!(
                "{} values for {} kept positions",
                flat.len(),
                self.kept_count()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for a in out.adapters.values_mut() {
            let n = a.kept.len();
            a.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn check_fits(&self, model: &LayeredModel) -> Result<()> {
        for a in self.iter() {
            let layer = model.layer(a.layer_index)?;
            if !a.layer_shape_matches(layer) {
                return Err(Error::dim(format!(
                    "adapter for layer {} does not match the layer's shape",
                    a.layer_index
                )));
            }
        }
        Ok(())
    }

    /// Full checkpoint: per adapter the layer index, layer shape, keep rate,
    /// kept-position list and delta values, followed by a SHA-256 trailer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CKPT_MAGIC, VERSION);
        w.u32(self.adapters.len() as u32);
        for a in self.iter() {
            w.u32(a.layer_index as u32);
            w.u32(a.input as u32);
            w.u32(a.output as u32);
            w.f64(a.keep_rate);
            w.u32(a.kept.len() as u32);
            for &p in &a.kept {
                w.u32(p as u32);
            }
            w.f64s(&a.values);
        }
        w.finish_checked()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open_checked(bytes, CKPT_MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        let mut list = Vec::with_capacity(n);
        for _ in 0..n {
            let layer_index = r.u32()? as usize;
            let input = r.u32()? as usize;
            let output = r.u32()? as usize;
            let keep_rate = r.f64()?;
            let count = r.u32()? as usize;
            let kept: Vec<usize> = (0..count).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
            let params = input * output + output;
            if kept.windows(2).any(|w| w[0] >= w[1]) || kept.last().is_some_and(|&p| p >= params) {
                return Err(Error::Integrity(format!(
                    "adapter for layer {layer_index} has an invalid position list"
                )));
            }
            let values = r.f64s(count)?;
            list.push(SparseAdapter { layer_index, input, output, keep_rate, kept, values });
        }
        r.expect_end()?;
        AdapterSet::from_adapters(list).map_err(|e| Error::Integrity(e.to_string()))
    }

    /// Per-round wire payload: only the deltas, since every party already
    /// holds the shared mask. Layout: magic, version, adapter count, then per
    /// adapter `(layer_index, count)` followed by `count` values.
    pub fn values_to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(VALUES_MAGIC, VERSION);
        w.u32(self.adapters.len() as u32);
        for a in self.iter() {
            w.u32(a.layer_index as u32);
            w.u32(a.values.len() as u32);
            w.f64s(&a.values);
        }
        w.finish()
    }

    /// Exact length of [`AdapterSet::values_to_bytes`].
    pub fn values_payload_len(&self) -> usize {
        12 + self.iter().map(|a| 8 + 8 * a.values.len()).sum::<usize>()
    }

    /// Decode a values payload onto this set's masks.
    pub fn with_values_from_bytes(&self, bytes: &[u8]) -> Result<AdapterSet> {
        let mut r = Reader::open(bytes, VALUES_MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        if n != self.adapters.len() {
            return Err(Error::Integrity("payload adapter count differs from mask set".into()));
        }
        let mut out = self.clone();
        for a in out.adapters.values_mut() {
            let l = r.u32()? as usize;
            let count = r.u32()? as usize;
            if l != a.layer_index || count != a.values.len() {
                return Err(Error::Integrity(format!("payload does not match mask of layer {l}")));
            }
            a.values = r.f64s(count)?;
        }
        r.expect_end()?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        AdapterSet::from_bytes(&fs::read(path)?)
    }
}

/// Critical layers become `original + delta`; every other layer is copied.
pub fn merge(model: &LayeredModel, adapters: &AdapterSet) -> Result<LayeredModel> {
    adapters.check_fits(model)?;
    let mut merged = model.clone();
    for a in adapters.iter() {
        let layer = model.layer(a.layer_index)?;
        let mut flat = layer.flat();
        for (&pos, &v) in a.kept.iter().zip(&a.values) {
            // skipping zeros keeps a -0.0 weight bit-identical
            if v != 0.0 {
                flat[pos] += v;
            }
        }
        merged.replace_layer(a.layer_index, layer.with_flat(&flat)?)?;
    }
    Ok(merged)
}

/// One gradient step on the merged model's loss, applied only to the
/// adapters' kept positions. The frozen model is untouched. Returns the
/// updated adapters and the batch loss before the step.
pub fn train_adapter_step(
    model_frozen: &LayeredModel,
    adapters: &AdapterSet,
    x: &Tensor,
    labels: &[usize],
    lr: f64,
) -> Result<(AdapterSet, f64)> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::config(format!("learning rate must be positive, got {lr}")));
    }
    let Some(lowest) = adapters.lowest_layer() else {
        return Err(Error::config("no adapters to train"));
    };
    let merged = merge(model_frozen, adapters)?;
    let (loss, grads) = merged.backward_from(x, labels, lowest)?;
    let mut next = adapters.clone();
    for a in next.adapters.values_mut() {
        a.descend(&grads[a.layer_index - 1], lr);
    }
    Ok((next, loss))
}

/// The unlearned model kept in its reversible form.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnedModel {
    original: LayeredModel,
    adapters: AdapterSet,
}

impl UnlearnedModel {
    pub fn new(original: LayeredModel, adapters: AdapterSet) -> Result<Self> {
        adapters.check_fits(&original)?;
        Ok(UnlearnedModel { original, adapters })
    }

    pub fn original(&self) -> &LayeredModel {
        &self.original
    }

    pub fn adapters(&self) -> &AdapterSet {
        &self.adapters
    }

    pub fn merged(&self) -> LayeredModel {
        merge(&self.original, &self.adapters).expect("adapters were checked at construction")
    }

    /// Drop the adapters and return the retained original model.
    pub fn remove_adapters(&self) -> LayeredModel {
        self.original.clone()
    }
}
