//! End-to-end unlearning scenarios.
//!
//! Each run generates data, partitions it across clients, injects the
//! attack that defines what must be forgotten, pretrains the original model,
//! ranks critical layers, unlearns with sparse adapters, optionally trains
//! the retraining oracle, and evaluates every model on the same sets.

use std::collections::BTreeSet;

use crate::critical::{identify_critical_layers, DriftRanking, ProbeConfig};
use crate::data::{
    apply_backdoor, apply_label_flip, dirichlet_partition, gen_synthetic, interference_partition,
    train_test_split, with_trigger, ClientShard, Dataset,
};
use crate::error::{Error, Result};
use crate::federated::{
    run_fused_unlearning, run_pretraining, run_retraining, CostLedger, FedConfig, FusedOutcome,
    RoundLog,
};
use crate::metrics::{
    accuracy, mia_attack, zero_class_metrics, Predictor, RunReport,
    REPORT_SCHEMA_VERSION,
};
use crate::model::LayeredModel;
use crate::numcore::{stream, Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Forget every sample held by these clients, whose labels were flipped.
    Client { clients: Vec<usize> },
    /// Forget these classes everywhere.
    Class { classes: Vec<usize> },
    /// Forget backdoor-poisoned samples.
    Sample,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Client { .. } => "client",
            Scenario::Class { .. } => "class",
            Scenario::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackdoorSpec {
    pub fraction: f64,
    pub trigger_value: f64,
    pub target_label: usize,
}

impl Default for BackdoorSpec {
    fn default() -> Self {
        BackdoorSpec { fraction: 0.1, trigger_value: 4.0, target_label: 0 }
    }
}

/// Everything a scenario run needs besides the scenario itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub data: DataSpec,
    pub hidden: Vec<usize>,
    pub init_scale: f64,
    /// Shared federated settings; `fed.rounds` is the unlearning (and
    /// retraining) round count.
    pub fed: FedConfig,
    pub pretrain_rounds: usize,
    pub probe_epochs: usize,
    pub normalize_drift: bool,
    pub backdoor: BackdoorSpec,
    pub run_oracle: bool,
    /// Relearning rounds for ReA; `0` skips the measurement.
    pub relearn_rounds: usize,
    /// Digest of the configuration text this run came from, echoed in reports.
    pub config_digest: String,
}

impl ScenarioConfig {
    /// Small synthetic setup that runs in seconds: 10 classes, 10 clients.
    pub fn desk(seed: u64) -> Self {
        ScenarioConfig {
            data: DataSpec { classes: 10, dim: 16, per_class: 200, spread: 0.5, test_fraction: 0.2 },
            hidden: vec![64, 64],
            init_scale: 1.0,
            fed: FedConfig {
                n_clients: 10,
                rounds: 20,
                local_epochs: 5,
                lr: 0.1,
                batch_size: 16,
                alpha: 1.0,
                k: 2,
                keep_rate: 0.3,
                seed,
            },
            pretrain_rounds: 20,
            probe_epochs: 1,
            normalize_drift: false,
            backdoor: BackdoorSpec::default(),
            run_oracle: true,
            relearn_rounds: 0,
            config_digest: String::new(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.data.dim];
        sizes.extend(&self.hidden);
        sizes.push(self.data.classes);
        sizes
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            normalize_by_param_count: self.normalize_drift,
            ..ProbeConfig::new(self.probe_epochs, self.fed.lr, self.fed.batch_size, self.fed.k)
        }
    }

    fn pretrain_fed(&self) -> FedConfig {
        FedConfig { rounds: self.pretrain_rounds, ..self.fed.clone() }
    }
}

/// Data and shards after attack injection.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// Shards as seen during pretraining, attacks included.
    pub shards: Vec<ClientShard>,
}

/// Evaluation sets for one scenario.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub remaining: Dataset,
    pub forgotten: Dataset,
    pub mia_members: Dataset,
    pub mia_nonmembers: Dataset,
    /// Clean and triggered test sets for class-0 metrics (sample scenario).
    pub backdoor: Option<(Dataset, Dataset)>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub data: PreparedData,
    pub original: LayeredModel,
    pub initial: LayeredModel,
    pub ranking: DriftRanking,
    pub fused: FusedOutcome,
    pub retrained: Option<(LayeredModel, CostLedger)>,
    pub pretrain_ledger: CostLedger,
    pub eval: EvalSets,
    /// Rows for the original, unlearned and (optionally) retrained models.
    pub reports: Vec<RunReport>,
    pub log: RoundLog,
}

impl ScenarioOutcome {
    pub fn report(&self, method: &str) -> Option<&RunReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

fn validate(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<()> {
    cfg.fed.validate()?;
    let c = cfg.data.classes;
    match scenario {
        Scenario::Client { clients } => {
            if clients.is_empty() {
                return Err(Error::config("client scenario needs at least one client to forget"));
            }
            if clients.iter().any(|&k| k >= cfg.fed.n_clients) {
                return Err(Error::config("client to forget is outside the client range"));
            }
            let distinct: BTreeSet<_> = clients.iter().collect();
            if distinct.len() >= cfg.fed.n_clients {
                return Err(Error::config("cannot forget every client"));
            }
        }
        Scenario::Class { classes } => {
            if classes.is_empty() {
                return Err(Error::config("class scenario needs at least one class to forget"));
            }
            if classes.iter().any(|&k| k >= c) {
                return Err(Error::config("class to forget is outside the class range"));
            }
            let distinct: BTreeSet<_> = classes.iter().collect();
            if distinct.len() >= c {
                return Err(Error::config("cannot forget every class"));
            }
        }
        Scenario::Sample => {
            if cfg.backdoor.target_label >= c {
                return Err(Error::config("backdoor target outside the class range"));
            }
        }
    }
    if cfg.hidden.contains(&0) {
        return Err(Error::config("hidden sizes must be positive"));
    }
    if cfg.fed.k > cfg.hidden.len() + 1 {
        return Err(Error::config(format!(
            "K = {} exceeds the model's {} layers",
            cfg.fed.k,
            cfg.hidden.len() + 1
        )));
    }
    Ok(())
}

/// Generate, split, poison and partition the data for `scenario`.
pub fn prepare_data(scenario: &Scenario, cfg: &ScenarioConfig, rng: &Rng) -> Result<PreparedData> {
    let d = &cfg.data;
    let full = gen_synthetic(d.classes, d.dim, d.per_class, d.spread, &mut rng.fork(stream::DATA))?;
    let (mut train, test) = train_test_split(&full, d.test_fraction, &mut rng.fork(stream::SPLIT))?;
    let mut poisoned = Vec::new();
    if let Scenario::Sample = scenario {
        let b = &cfg.backdoor;
        let (p, idx) = apply_backdoor(&train, b.fraction, b.trigger_value, b.target_label, &mut rng.fork(stream::ATTACK))?;
        train = p;
        poisoned = idx;
    }
    let mut shards = dirichlet_partition(&train, cfg.fed.n_clients, cfg.fed.alpha, &mut rng.fork(stream::PARTITION))?;
    match scenario {
        Scenario::Client { clients } => {
            for &k in clients {
                shards[k] = apply_label_flip(&shards[k])?;
            }
        }
        Scenario::Sample => {
            for s in &mut shards {
                s.attacked_indices = s
                    .source_indices
                    .iter()
                    .enumerate()
                    .filter(|(_, src)| poisoned.binary_search(src).is_ok())
                    .map(|(local, _)| local)
                    .collect();
            }
        }
        Scenario::Class { .. } => {}
    }
    Ok(PreparedData { train, test, shards })
}

/// Shards as they participate in unlearning: forgotten classes are removed
/// from every local loader; client targets and poisoned samples are
/// excluded downstream via their flags.
pub fn unlearning_shards(scenario: &Scenario, shards: &[ClientShard]) -> Vec<ClientShard> {
    match scenario {
        Scenario::Class { classes } => shards
            .iter()
            .map(|s| {
                let keep: Vec<usize> =
                    (0..s.len()).filter(|&i| !classes.contains(&s.data.labels[i])).collect();
                ClientShard {
                    client_id: s.client_id,
                    data: s.data.subset(&keep),
                    is_unlearn_target: keep.is_empty(),
                    attacked_indices: BTreeSet::new(),
                    source_indices: keep.iter().map(|&i| s.source_indices[i]).collect(),
                }
            })
            .collect(),
        _ => shards.to_vec(),
    }
}

fn flip_labels(ds: &Dataset) -> Result<Dataset> {
    let c = ds.class_count;
    ds.with_labels(ds.labels.iter().map(|&y| (y + 1) % c).collect())
}

/// Evaluation sets matching the scenario's notion of remaining and forgotten knowledge.
pub fn eval_sets(scenario: &Scenario, cfg: &ScenarioConfig, data: &PreparedData) -> Result<EvalSets> {
    let test = &data.test;
    match scenario {
        Scenario::Client { .. } => {
            let targets: Vec<&Dataset> =
                data.shards.iter().filter(|s| s.is_unlearn_target).map(|s| &s.data).collect();
            let forgotten = Dataset::concat(&targets)?;
            Ok(EvalSets {
                remaining: test.clone(),
                mia_members: forgotten.clone(),
                mia_nonmembers: flip_labels(test)?,
                forgotten,
                backdoor: None,
            })
        }
        Scenario::Class { classes } => {
            let forgotten = test.filter(|_, y| classes.contains(&y));
            let members = data.train.filter(|_, y| classes.contains(&y));
            Ok(EvalSets {
                remaining: test.filter(|_, y| !classes.contains(&y)),
                mia_nonmembers: forgotten.clone(),
                forgotten,
                mia_members: members,
                backdoor: None,
            })
        }
        Scenario::Sample => {
            let b = &cfg.backdoor;
            let triggered = with_trigger(test, b.trigger_value);
            let victims = triggered.filter(|_, y| y != b.target_label);
            let forgotten = victims.with_labels(vec![b.target_label; victims.len()])?;
            let members: Vec<Dataset> = data.shards.iter().map(|s| s.attacked_part()).collect();
            let members: Vec<&Dataset> = members.iter().filter(|d| !d.is_empty()).collect();
            Ok(EvalSets {
                remaining: test.clone(),
                mia_members: Dataset::concat(&members)?,
                mia_nonmembers: forgotten.clone(),
                forgotten,
                backdoor: Some((test.clone(), triggered)),
            })
        }
    }
}

/// Continue ordinary federated training of `model` on every client's full
/// data (forgotten data included) and return accuracy on `forgotten`.
pub fn run_relearn(
    model: &LayeredModel,
    shards: &[ClientShard],
    rounds: usize,
    fed: &FedConfig,
    forgotten: &Dataset,
    rng: &Rng,
) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::config("relearning needs at least one round"));
    }
    let cfg = FedConfig { rounds, ..fed.clone() };
    let (relearned, _) = run_pretraining(&cfg, shards, model, &rng.fork(stream::RELEARN), None)?;
    accuracy(&relearned, forgotten)
}

fn evaluate<P: Predictor + ?Sized>(model: &P, sets: &EvalSets, target: usize) -> Result<(f64, f64, f64, Option<crate::metrics::ZeroClassMetrics>)> {
    let ra = accuracy(model, &sets.remaining)?;
    let fa = accuracy(model, &sets.forgotten)?;
    let mia = mia_attack(model, &sets.mia_members, &sets.mia_nonmembers)?.accuracy;
    let zero = match &sets.backdoor {
        Some((clean, triggered)) if target == 0 => Some(zero_class_metrics(model, clean, triggered)?),
        _ => None,
    };
    Ok((ra, fa, mia, zero))
}

#[allow(clippy::too_many_arguments)]
fn report_row(
    scenario: &Scenario,
    cfg: &ScenarioConfig,
    method: &str,
    model: &LayeredModel,
    ledger: &CostLedger,
    eval: &EvalSets,
    data: &PreparedData,
    rng: &Rng,
) -> Result<RunReport> {
    let (ra, fa, mia, zero) = evaluate(model, eval, cfg.backdoor.target_label)?;
    let rea = if cfg.relearn_rounds > 0 && method != "original" {
        Some(run_relearn(model, &data.shards, cfg.relearn_rounds, &cfg.fed, &eval.forgotten, rng)?)
    } else {
        None
    };
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: scenario.name().to_string(),
        method: method.to_string(),
        seed: cfg.fed.seed,
        config_digest: cfg.config_digest.clone(),
        ra,
        fa,
        rea,
        mia,
        zero_acc: zero.map(|z| z.zero_acc),
        precision_zero: zero.map(|z| z.precision_zero),
        precision_vacuous: zero.is_some_and(|z| z.precision_vacuous),
        comp_flops: ledger.compute_flops,
        comm_bytes_up: ledger.bytes_up,
        comm_bytes_down: ledger.bytes_down,
        storage_units: ledger.server_storage_units,
        comp_seconds: ledger.compute_seconds,
    };
    report.validate()?;
    Ok(report)
}

/// Pretrain the original model and rank its layers, without unlearning.
pub fn run_identify(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<(LayeredModel, DriftRanking)> {
    validate(scenario, cfg)?;
    let rng = Rng::new(cfg.fed.seed);
    let data = prepare_data(scenario, cfg, &rng)?;
    let initial = LayeredModel::new_mlp(&cfg.layer_sizes(), cfg.init_scale, &mut rng.fork(stream::MODEL_INIT))?;
    let (original, _) = run_pretraining(&cfg.pretrain_fed(), &data.shards, &initial, &rng, None)?;
    let ranking = identify_critical_layers(&original, &data.shards, &cfg.probe_config(), &rng)?;
    Ok((original, ranking))
}

/// Train only the retraining oracle: a fresh model on remaining data.
pub fn run_retrain_oracle(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<(LayeredModel, RunReport)> {
    validate(scenario, cfg)?;
    let rng = Rng::new(cfg.fed.seed);
    let data = prepare_data(scenario, cfg, &rng)?;
    let eval = eval_sets(scenario, cfg, &data)?;
    let initial = LayeredModel::new_mlp(&cfg.layer_sizes(), cfg.init_scale, &mut rng.fork(stream::MODEL_INIT))?;
    let unlearn_shards = unlearning_shards(scenario, &data.shards);
    let (model, ledger) = run_retraining(&cfg.fed, &unlearn_shards, &initial, &rng, None)?;
    let report = report_row(scenario, cfg, "retrain", &model, &ledger, &eval, &data, &rng)?;
    Ok((model, report))
}

/// Run the full pipeline for `scenario`.
pub fn run_scenario(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    validate(scenario, cfg)?;
    let rng = Rng::new(cfg.fed.seed);
    let data = prepare_data(scenario, cfg, &rng)?;
    let eval = eval_sets(scenario, cfg, &data)?;
    let initial = LayeredModel::new_mlp(&cfg.layer_sizes(), cfg.init_scale, &mut rng.fork(stream::MODEL_INIT))?;

    let mut log = RoundLog::with_eval(Some(eval.remaining.clone()), Some(eval.forgotten.clone()));
    let (original, pretrain_ledger) =
        run_pretraining(&cfg.pretrain_fed(), &data.shards, &initial, &rng, Some(&mut log))?;

    let ranking = identify_critical_layers(&original, &data.shards, &cfg.probe_config(), &rng)?;

    let unlearn_shards = unlearning_shards(scenario, &data.shards);
    let fused = run_fused_unlearning(&cfg.fed, &unlearn_shards, &original, &ranking, &rng, Some(&mut log))?;
    let retrained = if cfg.run_oracle {
        Some(run_retraining(&cfg.fed, &unlearn_shards, &initial, &rng, Some(&mut log))?)
    } else {
        None
    };

    let merged = fused.merged();
    let mut rows = vec![
        ("original", &original, &pretrain_ledger),
        ("fused", &merged, &fused.ledger),
    ];
    if let Some((m, l)) = &retrained {
        rows.push(("retrain", m, l));
    }

    let mut reports = Vec::with_capacity(rows.len());
    for (method, model, ledger) in rows {
        reports.push(report_row(scenario, cfg, method, model, ledger, &eval, &data, &rng)?);
    }

    Ok(ScenarioOutcome {
        data,
        original,
        initial,
        ranking,
        fused,
        retrained,
        pretrain_ledger,
        eval,
        reports,
        log,
    })
}

/// Accuracies on the three knowledge partitions of the interference split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceAccuracy {
    /// Knowledge only the forgotten client held.
    pub f_acc: f64,
    /// Knowledge shared between the forgotten client and the rest.
    pub c_acc: f64,
    /// Knowledge only the remaining clients held.
    pub r_acc: f64,
}

#[derive(Debug, Clone)]
pub struct InterferenceOutcome {
    pub original: InterferenceAccuracy,
    pub fused: InterferenceAccuracy,
    pub retrain: InterferenceAccuracy,
    /// Full-parameter fine-tuning of the original on remaining data.
    pub full_finetune: InterferenceAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSpec {
    pub target_client: usize,
    pub overlap_class: usize,
    pub unique_class: usize,
    pub target_share: f64,
}

impl Default for InterferenceSpec {
    fn default() -> Self {
        InterferenceSpec { target_client: 0, overlap_class: 0, unique_class: 1, target_share: 0.9 }
    }
}

/// Knowledge-interference experiment: one client holds most of an overlap
/// class and all of a unique class; after forgetting that client, measure
/// how much of each kind of knowledge survives.
pub fn run_interference_probe(cfg: &ScenarioConfig, spec: &InterferenceSpec) -> Result<InterferenceOutcome> {
    cfg.fed.validate()?;
    let rng = Rng::new(cfg.fed.seed);
    let d = &cfg.data;
    let full = gen_synthetic(d.classes, d.dim, d.per_class, d.spread, &mut rng.fork(stream::DATA))?;
    let (train, test) = train_test_split(&full, d.test_fraction, &mut rng.fork(stream::SPLIT))?;
    let shards = interference_partition(
        &train,
        cfg.fed.n_clients,
        spec.target_client,
        spec.overlap_class,
        spec.unique_class,
        spec.target_share,
        &mut rng.fork(stream::PARTITION),
    )?;
    let initial = LayeredModel::new_mlp(&cfg.layer_sizes(), cfg.init_scale, &mut rng.fork(stream::MODEL_INIT))?;
    let (original, _) = run_pretraining(&cfg.pretrain_fed(), &shards, &initial, &rng, None)?;
    let ranking = identify_critical_layers(&original, &shards, &cfg.probe_config(), &rng)?;
    let fused = run_fused_unlearning(&cfg.fed, &shards, &original, &ranking, &rng, None)?;
    let (retrained, _) = run_retraining(&cfg.fed, &shards, &initial, &rng, None)?;
    let (finetuned, _) = run_retraining(&cfg.fed, &shards, &original, &rng.fork(stream::UNLEARN), None)?;

    let unique = test.filter(|_, y| y == spec.unique_class);
    let overlap = test.filter(|_, y| y == spec.overlap_class);
    let rest = test.filter(|_, y| y != spec.unique_class && y != spec.overlap_class);
    let measure = |m: &LayeredModel| -> Result<InterferenceAccuracy> {
        Ok(InterferenceAccuracy {
            f_acc: accuracy(m, &unique)?,
            c_acc: accuracy(m, &overlap)?,
            r_acc: accuracy(m, &rest)?,
        })
    };
    Ok(InterferenceOutcome {
        original: measure(&original)?,
        fused: measure(&fused.merged())?,
        retrain: measure(&retrained)?,
        full_finetune: measure(&finetuned)?,
    })
}

/// Fixed probe batch drawn from the test set, used to check reversibility.
pub fn probe_batch(test: &Dataset, size: usize, rng: &Rng) -> Tensor {
    let mut r = rng.fork(stream::PROBE ^ 0xff);
    let idx: Vec<usize> = (0..size).map(|_| r.index(test.len())).collect();
    test.features.select_rows(&idx)
}
