//! Critical layer identification.
//!
//! One probe federated round: every client trains the distributed global
//! model for a few local epochs, the server measures how far each layer
//! moved (Manhattan distance), averages the per-client distances weighted by
//! client data volume, and ranks layers by that drift. The top `K` layers
//! are the ones that get unlearning adapters.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::federated::local_sgd;
use crate::model::{DenseLayer, LayeredModel};
use crate::numcore::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerDrift {
    /// 1-based layer index.
    pub layer_index: usize,
    pub diff: f64,
}

/// Layers sorted by descending drift; ties go to the lower layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRanking {
    pub entries: Vec<LayerDrift>,
    pub k: usize,
}

impl DriftRanking {
    /// Rank aggregated drifts (`diffs[i]` belongs to layer `i + 1`).
    pub fn from_diffs(diffs: &[f64], k: usize) -> Result<Self> {
        if k == 0 || k > diffs.len() {
            return Err(Error::config(format!(
                "K = {k} must lie in 1..={}",
                diffs.len()
            )));
        }
        let mut entries: Vec<LayerDrift> = diffs
            .iter()
            .enumerate()
            .map(|(i, &diff)| LayerDrift { layer_index: i + 1, diff })
            .collect();
        entries.sort_by(|a, b| {
            b.diff.total_cmp(&a.diff).then(a.layer_index.cmp(&b.layer_index))
        });
        Ok(DriftRanking { entries, k })
    }

    /// Indices of the top-`K` layers, in rank order.
    pub fn critical_layers(&self) -> Vec<usize> {
        self.entries.iter().take(self.k).map(|e| e.layer_index).collect()
    }

    /// Layers left frozen without an adapter.
    pub fn remaining_layers(&self) -> Vec<usize> {
        self.entries.iter().skip(self.k).map(|e| e.layer_index).collect()
    }

    /// `layer_index,diff,rank` rows with a header; rank is 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer_index,diff,rank\n");
        for (r, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{:?},{}", e.layer_index, e.diff, r + 1);
        }
        out
    }
}

/// Manhattan distance between two equally shaped layer blocks, weights and
/// biases included.
pub fn layer_diff(client_layer: &DenseLayer, global_layer: &DenseLayer) -> Result<f64> {
    if !client_layer.same_shape(global_layer) {
        return Err(Error::dim("layer_diff on differently shaped layers"));
    }
    Ok(client_layer.params().zip(global_layer.params()).map(|(a, b)| (a - b).abs()).sum())
}

/// Data-volume weighted mean: `Σ_n |D_n| / Σ_m |D_m| · diff_n`.
pub fn aggregate_diffs(per_client_diffs: &[f64], data_volumes: &[usize]) -> Result<f64> {
    if per_client_diffs.len() != data_volumes.len() {
        return Err(Error::dim("one data volume per client diff is required"));
    }
    let total: usize = data_volumes.iter().sum();
    if total == 0 {
        return Err(Error::config("total data volume is zero"));
    }
    let total = total as f64;
    Ok(per_client_diffs
        .iter()
        .zip(data_volumes)
        .map(|(d, &v)| v as f64 / total * d)
        .sum())
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub k: usize,
    /// Divide each layer's drift by its parameter count before ranking.
    pub normalize_by_param_count: bool,
    /// Restrict probe training to these layers (`trainable[i]` for layer
    /// `i + 1`). `None` trains every layer.
    pub trainable: Option<Vec<bool>>,
}

impl ProbeConfig {
    pub fn new(local_epochs: usize, lr: f64, batch_size: usize, k: usize) -> Self {
        ProbeConfig {
            local_epochs,
            lr,
            batch_size,
            k,
            normalize_by_param_count: false,
            trainable: None,
        }
    }
}

/// Aggregated drift per layer after one probe round, before ranking.
pub fn probe_layer_drift(
    global: &LayeredModel,
    shards: &[ClientShard],
    cfg: &ProbeConfig,
    rng: &Rng,
) -> Result<Vec<f64>> {
    let layers = global.layer_count();
    if cfg.local_epochs == 0 {
        return Err(Error::config("probe needs at least one local epoch"));
    }
    if cfg.k == 0 || cfg.k > layers {
        return Err(Error::config(format!("K = {} must lie in 1..={layers}", cfg.k)));
    }
    let clients: Vec<&ClientShard> = shards.iter().filter(|s| !s.is_empty()).collect();
    if clients.is_empty() {
        return Err(Error::config("probe needs at least one non-empty client"));
    }
    if let Some(t) = &cfg.trainable {
        if t.len() != layers {
            return Err(Error::config("trainable mask must list every layer"));
        }
    }

    let per_client: Vec<Vec<f64>> = clients
        .par_iter()
        .map(|shard| {
            let mut client_rng = rng.for_client_round(stream::PROBE, shard.client_id, 0);
            let trained = local_sgd(
                global,
                &shard.data,
                cfg.local_epochs,
                cfg.lr,
                cfg.batch_size,
                cfg.trainable.as_deref(),
                &mut client_rng,
            )?;
            trained
                .model
                .layers()
                .iter()
                .zip(global.layers())
                .map(|(c, g)| layer_diff(c, g))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let volumes: Vec<usize> = clients.iter().map(|s| s.len()).collect();
    (0..layers)
        .map(|l| {
            let diffs: Vec<f64> = per_client.iter().map(|d| d[l]).collect();
            let agg = aggregate_diffs(&diffs, &volumes)?;
            Ok(if cfg.normalize_by_param_count {
                agg / global.layers()[l].param_count() as f64
            } else {
                agg
            })
        })
        .collect()
}

/// Run the probe round and rank layers by aggregated drift.
pub fn identify_critical_layers(
    global: &LayeredModel,
    shards: &[ClientShard],
    cfg: &ProbeConfig,
    rng: &Rng,
) -> Result<DriftRanking> {
    let diffs = probe_layer_drift(global, shards, cfg, rng)?;
    DriftRanking::from_diffs(&diffs, cfg.k)
}
