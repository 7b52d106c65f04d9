//! Federated orchestration with exact cost accounting.
//!
//! Every round is simulated as real transmissions: the server encodes the
//! payload it distributes, each client decodes it, trains locally and encodes
//! its upload, and the server decodes the uploads before averaging. The
//! ledger records the exact byte length of every payload.
//!
//! Client work within a round runs on the current rayon pool. Results are
//! collected in client order and reduced sequentially, so the outcome does
//! not depend on the number of workers.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::adapter::{train_adapter_step, AdapterSet, UnlearnedModel};
use crate::critical::DriftRanking;
use crate::data::{ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::model::LayeredModel;
use crate::numcore::{stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub n_clients: usize,
    /// Federated iterations `I`.
    pub rounds: usize,
    /// Local epochs `E` per round.
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Dirichlet concentration used to partition client data.
    pub alpha: f64,
    /// Number of critical layers receiving adapters.
    pub k: usize,
    /// Fraction of a critical layer's parameters kept in its adapter.
    pub keep_rate: f64,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            n_clients: 50,
            rounds: 20,
            local_epochs: 1,
            lr: 0.005,
            batch_size: 64,
            alpha: 1.0,
            k: 2,
            keep_rate: 0.1,
            seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 || self.local_epochs == 0 || self.batch_size == 0 || self.k == 0 {
            return Err(Error::config("client count, local epochs, batch size and K must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::config("keep_rate must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Resource usage of one federated run. All fields only ever grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    /// Serial-equivalent wall-clock seconds of client training.
    pub compute_seconds: f64,
    /// Deterministic multiply-add count of client training.
    pub compute_flops: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Parameter units the server must retain to serve the result.
    pub server_storage_units: u64,
}

impl CostLedger {
    fn charge_compute(&mut self, seconds: f64, flops: u64) {
        self.compute_seconds += seconds;
        self.compute_flops += flops;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub phase: &'static str,
    pub round: usize,
    pub mean_loss: f64,
    pub ra: Option<f64>,
    pub fa: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub compute_seconds: f64,
}

impl RoundRecord {
    /// `key=value` line for the round log stream.
    pub fn to_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        format!(
            "phase={} round={} loss={:.6} ra={} fa={} bytes_up={} bytes_down={} compute_s={:.3}",
            self.phase,
            self.round,
            self.mean_loss,
            fmt(self.ra),
            fmt(self.fa),
            self.bytes_up,
            self.bytes_down,
            self.compute_seconds
        )
    }
}

/// Collects one record per round. When evaluation sets are attached, RA
/// and FA are measured on the global model after each aggregation.
#[derive(Debug, Clone, Default)]
pub struct RoundLog {
    pub remaining: Option<Dataset>,
    pub forgotten: Option<Dataset>,
    pub records: Vec<RoundRecord>,
}

impl RoundLog {
    pub fn with_eval(remaining: Option<Dataset>, forgotten: Option<Dataset>) -> Self {
        RoundLog { remaining, forgotten, records: Vec::new() }
    }

    fn record(
        &mut self,
        phase: &'static str,
        round: usize,
        mean_loss: f64,
        model: &LayeredModel,
        ledger: &CostLedger,
    ) {
        let eval = |d: &Option<Dataset>| {
            d.as_ref().filter(|d| !d.is_empty()).and_then(|d| accuracy(model, d).ok())
        };
        self.records.push(RoundRecord {
            phase,
            round,
            mean_loss,
            ra: eval(&self.remaining),
            fa: eval(&self.forgotten),
            bytes_up: ledger.bytes_up,
            bytes_down: ledger.bytes_down,
            compute_seconds: ledger.compute_seconds,
        });
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", r.to_line());
        }
        out
    }
}

fn log_round(
    log: &mut Option<&mut RoundLog>,
    phase: &'static str,
    round: usize,
    loss: f64,
    model: &LayeredModel,
    ledger: &CostLedger,
) {
    if let Some(l) = log.as_deref_mut() {
        l.record(phase, round, loss, model, ledger);
    }
}

fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let perm = rng.permutation(n);
    perm.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone)]
pub struct LocalOutcome<T> {
    pub result: T,
    pub mean_loss: f64,
    pub flops: u64,
}

/// Result of ordinary local training.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub model: LayeredModel,
    pub mean_loss: f64,
    pub flops: u64,
}

/// `epochs` passes of minibatch SGD over `data`, starting from `model`.
/// Only layers flagged in `trainable` are updated when a mask is given.
pub fn local_sgd(
    model: &LayeredModel,
    data: &Dataset,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    trainable: Option<&[bool]>,
    rng: &mut Rng,
) -> Result<LocalModel> {
    if data.is_empty() {
        return Err(Error::domain("local training on an empty dataset"));
    }
    let lowest = match trainable {
        Some(t) => match t.iter().position(|&b| b) {
            Some(i) => i + 1,
            None => return Ok(LocalModel { model: model.clone(), mean_loss: 0.0, flops: 0 }),
        },
        None => 1,
    };
    let mut m = model.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    let mut flops = 0u64;
    for _ in 0..epochs {
        for idx in minibatches(data.len(), batch_size, rng) {
            let x = data.features.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = m.backward_from(&x, &y, lowest)?;
            m.apply_gradients(&grads, lr, trainable)?;
            loss_sum += loss;
            steps += 1;
            flops += m.step_flops(idx.len(), lowest);
        }
    }
    Ok(LocalModel { model: m, mean_loss: loss_sum / steps.max(1) as f64, flops })
}

/// Train only the adapters on top of a frozen model.
pub fn local_adapter_training(
    frozen: &LayeredModel,
    adapters: &AdapterSet,
    data: &Dataset,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<LocalOutcome<AdapterSet>> {
    if data.is_empty() {
        return Err(Error::domain("local training on an empty dataset"));
    }
    let lowest = adapters.lowest_layer().ok_or_else(|| Error::config("no adapters to train"))?;
    let mut current = adapters.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    let mut flops = 0u64;
    for _ in 0..epochs {
        for idx in minibatches(data.len(), batch_size, rng) {
            let x = data.features.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (next, loss) = train_adapter_step(frozen, &current, &x, &y, lr)?;
            current = next;
            loss_sum += loss;
            steps += 1;
            flops += frozen.step_flops(idx.len(), lowest);
        }
    }
    Ok(LocalOutcome { result: current, mean_loss: loss_sum / steps.max(1) as f64, flops })
}

/// Data-volume weighted mean of equally sized parameter vectors.
pub fn fedavg_aggregate(updates: &[(Vec<f64>, usize)]) -> Result<Vec<f64>> {
    let (first, _) = updates.first().ok_or_else(|| Error::Protocol("no updates to aggregate".into()))?;
    let dim = first.len();
    if updates.iter().any(|(p, _)| p.len() != dim) {
        return Err(Error::dim("updates differ in length"));
    }
    if updates.iter().any(|&(_, v)| v == 0) {
        return Err(Error::config("every update needs a positive data volume"));
    }
    let total: usize = updates.iter().map(|(_, v)| v).sum();
    let total = total as f64;
    let mut out = vec![0.0; dim];
    for (params, v) in updates {
        let w = *v as f64 / total;
        for (o, p) in out.iter_mut().zip(params) {
            *o += w * p;
        }
    }
    Ok(out)
}

/// The data a client may still train on during unlearning: nothing for a
/// client being forgotten, otherwise its untampered samples.
pub fn remaining_data(shard: &ClientShard) -> Option<Dataset> {
    if shard.is_unlearn_target {
        return None;
    }
    let d = shard.clean_part();
    (!d.is_empty()).then_some(d)
}

struct Participant {
    client_id: usize,
    data: Dataset,
}

fn fedavg_rounds(
    config: &FedConfig,
    participants: &[Participant],
    model0: &LayeredModel,
    role: u64,
    phase: &'static str,
    rng: &Rng,
    mut log: Option<&mut RoundLog>,
) -> Result<(LayeredModel, CostLedger)> {
    let mut global = model0.clone();
    let mut ledger = CostLedger { server_storage_units: model0.param_count() as u64, ..Default::default() };
    for round in 0..config.rounds {
        let payload = global.to_bytes();
        ledger.bytes_down += (payload.len() * participants.len()) as u64;
        let results: Vec<(Vec<u8>, usize, f64, u64, f64)> = participants
            .par_iter()
            .map(|p| {
                let start = Instant::now();
                let received = LayeredModel::from_bytes(&payload)?;
                let mut client_rng = rng.for_client_round(role, p.client_id, round);
                let local = local_sgd(
                    &received,
                    &p.data,
                    config.local_epochs,
                    config.lr,
                    config.batch_size,
                    None,
                    &mut client_rng,
                )?;
                let upload = local.model.to_bytes();
                Ok((upload, p.data.len(), local.mean_loss, local.flops, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;

        let mut updates = Vec::with_capacity(results.len());
        let mut loss = 0.0;
        for (upload, volume, l, flops, secs) in results {
            ledger.bytes_up += upload.len() as u64;
            ledger.charge_compute(secs, flops);
            loss += l * volume as f64;
            updates.push((LayeredModel::from_bytes(&upload)?.flat_params(), volume));
        }
        let total: usize = updates.iter().map(|(_, v)| v).sum();
        global = global.with_flat_params(&fedavg_aggregate(&updates)?)?;
        log_round(&mut log, phase, round + 1, loss / total as f64, &global, &ledger);
    }
    Ok((global, ledger))
}

/// Ordinary FedAvg over every client's full local data, producing the
/// original model.
pub fn run_pretraining(
    config: &FedConfig,
    shards: &[ClientShard],
    model0: &LayeredModel,
    rng: &Rng,
    log: Option<&mut RoundLog>,
) -> Result<(LayeredModel, CostLedger)> {
    config.validate()?;
    let participants: Vec<Participant> = shards
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| Participant { client_id: s.client_id, data: s.data.clone() })
        .collect();
    if participants.is_empty() {
        return Err(Error::Protocol("no client holds any data".into()));
    }
    fedavg_rounds(config, &participants, model0, stream::PRETRAIN, "pretrain", rng, log)
}

/// Retraining oracle: FedAvg from `model_init` using only the data that is
/// not to be forgotten.
pub fn run_retraining(
    config: &FedConfig,
    shards: &[ClientShard],
    model_init: &LayeredModel,
    rng: &Rng,
    log: Option<&mut RoundLog>,
) -> Result<(LayeredModel, CostLedger)> {
    config.validate()?;
    let participants: Vec<Participant> = shards
        .iter()
        .filter_map(|s| remaining_data(s).map(|data| Participant { client_id: s.client_id, data }))
        .collect();
    if participants.is_empty() {
        return Err(Error::Protocol("no client holds remaining data".into()));
    }
    fedavg_rounds(config, &participants, model_init, stream::RETRAIN, "retrain", rng, log)
}

#[derive(Debug, Clone)]
pub struct FusedOutcome {
    pub unlearned: UnlearnedModel,
    pub ledger: CostLedger,
    /// Client ids that trained adapters.
    pub participants: Vec<usize>,
    /// Bytes of one client's adapter upload in a round.
    pub upload_bytes_per_client: usize,
}

impl FusedOutcome {
    pub fn adapters(&self) -> &AdapterSet {
        self.unlearned.adapters()
    }

    pub fn merged(&self) -> LayeredModel {
        self.unlearned.merged()
    }
}

/// Unlearning through sparse adapters on the ranked critical layers.
///
/// The original model is distributed once to all clients in the first
/// round. Each round the current adapters go only to clients that still
/// hold remaining data; those clients freeze the original, train the
/// adapters for `local_epochs` and upload the deltas, which the server
/// averages by data volume.
pub fn run_fused_unlearning(
    config: &FedConfig,
    shards: &[ClientShard],
    m_r: &LayeredModel,
    ranking: &DriftRanking,
    rng: &Rng,
    mut log: Option<&mut RoundLog>,
) -> Result<FusedOutcome> {
    config.validate()?;
    let participants: Vec<Participant> = shards
        .iter()
        .filter_map(|s| remaining_data(s).map(|data| Participant { client_id: s.client_id, data }))
        .collect();
    if participants.is_empty() {
        return Err(Error::Protocol("no client holds remaining data".into()));
    }
    let mut adapters = AdapterSet::for_ranking(m_r, ranking, config.keep_rate, &rng.fork(stream::ADAPTER_MASK))?;
    let mut ledger = CostLedger {
        server_storage_units: (m_r.param_count() + adapters.kept_count()) as u64,
        ..Default::default()
    };
    let upload_len = adapters.values_payload_len();

    for round in 0..config.rounds {
        if round == 0 {
            ledger.bytes_down += (m_r.serialized_len() * shards.len()) as u64;
        }
        // the first distribution carries the mask, later ones only the deltas
        let payload = if round == 0 { adapters.to_bytes() } else { adapters.values_to_bytes() };
        ledger.bytes_down += (payload.len() * participants.len()) as u64;

        let results: Vec<(Vec<u8>, usize, f64, u64, f64)> = participants
            .par_iter()
            .map(|p| {
                let start = Instant::now();
                let received = if round == 0 {
                    AdapterSet::from_bytes(&payload)?
                } else {
                    adapters.with_values_from_bytes(&payload)?
                };
                let mut client_rng = rng.for_client_round(stream::UNLEARN, p.client_id, round);
                let local = local_adapter_training(
                    m_r,
                    &received,
                    &p.data,
                    config.local_epochs,
                    config.lr,
                    config.batch_size,
                    &mut client_rng,
                )?;
                let upload = local.result.values_to_bytes();
                Ok((upload, p.data.len(), local.mean_loss, local.flops, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;

        let mut updates = Vec::with_capacity(results.len());
        let mut loss = 0.0;
        for (upload, volume, l, flops, secs) in results {
            ledger.bytes_up += upload.len() as u64;
            ledger.charge_compute(secs, flops);
            loss += l * volume as f64;
            updates.push((adapters.with_values_from_bytes(&upload)?.flat_values(), volume));
        }
        let total: usize = updates.iter().map(|(_, v)| v).sum();
        adapters = adapters.with_flat_values(&fedavg_aggregate(&updates)?)?;
        if log.is_some() {
            let merged = crate::adapter::merge(m_r, &adapters)?;
            log_round(&mut log, "unlearn", round + 1, loss / total as f64, &merged, &ledger);
        }
    }

    Ok(FusedOutcome {
        unlearned: UnlearnedModel::new(m_r.clone(), adapters)?,
        ledger,
        participants: participants.iter().map(|p| p.client_id).collect(),
        upload_bytes_per_client: upload_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageMethod {
    /// Keeps only the global model and its adapters.
    Fused,
    /// Keeps every client model and the global model for every round.
    HistoryReplay,
}

impl StorageMethod {
    pub fn name(self) -> &'static str {
        match self {
            StorageMethod::Fused => "fused",
            StorageMethod::HistoryReplay => "history-replay",
        }
    }
}

/// Server-side storage in parameter units.
pub fn storage_model(
    method: StorageMethod,
    n_clients: u64,
    n_rounds: u64,
    model_units: u64,
    adapter_units: u64,
) -> u64 {
    match method {
        StorageMethod::Fused => model_units + adapter_units,
        StorageMethod::HistoryReplay => (n_clients + 1) * n_rounds * model_units,
    }
}
