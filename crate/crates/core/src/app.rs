//! Commands behind the `fused` binary. Each reads an [`ExperimentConfig`],
//! runs one stage and writes its artifacts into an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adapter::{AdapterSet, UnlearnedModel};
use crate::config::ExperimentConfig;
use crate::critical::DriftRanking;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::federated::{storage_model, StorageMethod};
use crate::metrics::RunReport;
use crate::model::LayeredModel;
use crate::numcore::{stream, Rng, Tensor};
use crate::scenario::{probe_batch, run_identify, run_retrain_oracle, run_scenario};
use crate::theory::{masked_expectation_check, MaskedExpectation, TheoryProbe};

/// File names inside the output directory.
pub mod files {
    pub const RANKING: &str = "ranking.csv";
    pub const REPORT: &str = "report.csv";
    pub const RETRAIN_REPORT: &str = "retrain_report.csv";
    pub const ORIGINAL: &str = "model_original.fsdm";
    pub const ADAPTERS: &str = "adapters.fsda";
    pub const UNLEARNED: &str = "model_unlearned.fsdm";
    pub const RETRAINED: &str = "model_retrained.fsdm";
    pub const PROBE: &str = "probe.csv";
    pub const REFERENCE_LOGITS: &str = "reference_logits.csv";
    pub const ROUND_LOG: &str = "rounds.log";
    pub const THEORY: &str = "theory.csv";
    pub const STORAGE: &str = "storage.csv";

    pub fn sidecar(method: &str) -> String {
        format!("report_{method}.toml")
    }
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_INTEGRITY: i32 = 6;
/// A verification command ran cleanly but the check did not hold.
pub const EXIT_VERIFY_FAILED: i32 = 7;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Dimension(_) | Error::Domain(_) | Error::Index { .. } | Error::Parse(_) => EXIT_DATA,
        Error::Protocol(_) | Error::Degenerate(_) => EXIT_TRAINING,
        Error::Io(_) => EXIT_IO,
        Error::Integrity(_) => EXIT_INTEGRITY,
    }
}

/// Files written by one command. Unless [`Staged::commit`] is called,
/// everything written so far is removed on drop.
struct Staged {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Staged {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Staged { dir: dir.to_path_buf(), written: Vec::new(), committed: false })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        Ok(())
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn report_csv(reports: &[RunReport]) -> String {
    let mut out = RunReport::csv_header();
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Logits as comma-separated rows; `{:?}` prints the shortest string that
/// parses back to the same bits.
fn tensor_csv(t: &Tensor) -> String {
    let mut out = String::new();
    for r in 0..t.rows() {
        let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_tensor_csv(text: &str) -> Result<Tensor> {
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let row = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged logits file".into()));
    }
    Tensor::from_vec(rows.len(), cols, rows.concat())
}

/// Pretrain, rank layers, write `ranking.csv`.
pub fn cmd_identify(cfg: &ExperimentConfig, out: &Path) -> Result<DriftRanking> {
    let (_, ranking) = run_identify(&cfg.scenario(), &cfg.scenario_config())?;
    let mut staged = Staged::new(out)?;
    staged.write(files::RANKING, ranking.to_csv())?;
    staged.commit();
    Ok(ranking)
}

/// Full pipeline. Writes report rows and sidecars, the original model,
/// adapters and merged model, a probe batch with reference logits of the
/// original, and the round log.
pub fn cmd_unlearn(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunReport>> {
    let sc = cfg.scenario_config();
    let outcome = run_scenario(&cfg.scenario(), &sc)?;
    let rng = Rng::new(sc.fed.seed);
    let probe_x = probe_batch(&outcome.data.test, cfg.evaluation.probe_samples, &rng);
    let reference = outcome.original.forward(&probe_x)?;
    let probe = Dataset::new(probe_x.clone(), outcome.original.predict(&probe_x)?, sc.data.classes)?;

    let mut staged = Staged::new(out)?;
    staged.write(files::REPORT, report_csv(&outcome.reports))?;
    for r in &outcome.reports {
        staged.write(&files::sidecar(&r.method), r.to_sidecar())?;
    }
    staged.write(files::RANKING, outcome.ranking.to_csv())?;
    staged.write(files::ORIGINAL, outcome.original.to_bytes())?;
    staged.write(files::ADAPTERS, outcome.fused.adapters().to_bytes())?;
    staged.write(files::UNLEARNED, outcome.fused.merged().to_bytes())?;
    if let Some((m, _)) = &outcome.retrained {
        staged.write(files::RETRAINED, m.to_bytes())?;
    }
    staged.write(files::PROBE, probe.to_csv())?;
    staged.write(files::REFERENCE_LOGITS, tensor_csv(&reference))?;
    staged.write(files::ROUND_LOG, outcome.log.to_text())?;
    staged.commit();
    Ok(outcome.reports)
}

/// Retraining oracle alone.
pub fn cmd_retrain(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let (model, report) = run_retrain_oracle(&cfg.scenario(), &cfg.scenario_config())?;
    let mut staged = Staged::new(out)?;
    staged.write(files::RETRAIN_REPORT, report_csv(std::slice::from_ref(&report)))?;
    staged.write(&files::sidecar("retrain"), report.to_sidecar())?;
    staged.write(files::RETRAINED, model.to_bytes())?;
    staged.commit();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestoreReport {
    pub passed: bool,
    pub samples: usize,
    pub max_abs_diff: f64,
}

/// Load the original model and adapters written by [`cmd_unlearn`], remove
/// the adapters and compare logits on the probe batch with the reference
/// logits bit for bit.
pub fn cmd_restore(out: &Path) -> Result<RestoreReport> {
    let original = LayeredModel::load(&out.join(files::ORIGINAL))?;
    let adapters = AdapterSet::load(&out.join(files::ADAPTERS))?;
    let probe = Dataset::load_csv(&out.join(files::PROBE), Some(original.output_size()))?;
    let reference = parse_tensor_csv(&fs::read_to_string(out.join(files::REFERENCE_LOGITS))?)?;

    let unlearned = UnlearnedModel::new(original, adapters)?;
    let restored = unlearned.remove_adapters();
    let logits = restored.forward(&probe.features)?;
    if logits.shape() != reference.shape() {
        return Err(Error::dim("reference logits do not match the probe batch"));
    }
    Ok(RestoreReport {
        passed: logits.bit_eq(&reference),
        samples: probe.len(),
        max_abs_diff: logits.max_abs_diff(&reference)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRow {
    pub phi: f64,
    pub keep_rate: f64,
    pub check: MaskedExpectation,
}

/// Gradient pair with cosine `phi`: `g1` standard normal, `g2` a unit
/// vector mixing `g1`'s direction with an orthogonal one.
pub fn gradient_pair(dim: usize, phi: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let g1: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let mut u: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n1 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e1: Vec<f64> = g1.iter().map(|v| v / n1).collect();
    let proj: f64 = u.iter().zip(&e1).map(|(a, b)| a * b).sum();
    for (x, e) in u.iter_mut().zip(&e1) {
        *x -= proj * e;
    }
    let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = (1.0 - phi * phi).max(0.0).sqrt();
    let g2 = e1.iter().zip(&u).map(|(e, o)| phi * e + s * o / nu).collect();
    (g1, g2)
}

/// Monte-Carlo masked-degradation check for every (cosine, keep rate) pair.
pub fn cmd_theory_check(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<TheoryRow>> {
    let t = &cfg.theory;
    let root = Rng::new(cfg.seed).fork(stream::THEORY);
    let mut rows = Vec::new();
    for (i, &phi) in t.cosines.iter().enumerate() {
        let (g1, g2) = gradient_pair(t.dim, phi, &mut root.fork(i as u64));
        for (j, &p) in t.keep_rates.iter().enumerate() {
            let probe = TheoryProbe::new(g1.clone(), g2.clone(), t.eta, p)?;
            let mut rng = root.fork(((i as u64) << 16) | (j as u64 + 1));
            let check = masked_expectation_check(&probe, t.trials, &mut rng)?;
            let phi = crate::theory::gradient_cosine(&probe).unwrap_or(0.0);
            rows.push(TheoryRow { phi, keep_rate: p, check });
        }
    }
    let mut csv = String::from("phi,keep_rate,predicted,empirical,std,z_score\n");
    for r in &rows {
        let c = &r.check;
        let _ = writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?},{:?}",
            r.phi, r.keep_rate, c.predicted, c.empirical_mean, c.empirical_std, c.z_score
        );
    }
    let mut staged = Staged::new(out)?;
    staged.write(files::THEORY, csv)?;
    staged.commit();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageRow {
    pub method: StorageMethod,
    pub clients: u64,
    pub rounds: u64,
    pub units: u64,
}

/// Parameter units of the configured model, and the adapter size implied
/// by keeping `keep_rate` of the K largest layers.
pub fn storage_units(cfg: &ExperimentConfig) -> (u64, u64) {
    let sc = cfg.scenario_config();
    let sizes = sc.layer_sizes();
    let mut layers: Vec<u64> = sizes.windows(2).map(|w| (w[0] * w[1] + w[1]) as u64).collect();
    let model: u64 = layers.iter().sum();
    layers.sort_unstable_by(|a, b| b.cmp(a));
    let critical: u64 = layers.iter().take(cfg.unlearning.k).sum();
    let adapter = (cfg.unlearning.keep_rate * critical as f64).round() as u64;
    let s = &cfg.storage;
    (
        if s.model_units > 0 { s.model_units } else { model },
        if s.adapter_units > 0 { s.adapter_units } else { adapter },
    )
}

/// Server storage of both methods over the configured client and round ranges.
pub fn cmd_storage_report(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<StorageRow>> {
    let (model_units, adapter_units) = storage_units(cfg);
    let mut rows = Vec::new();
    for method in [StorageMethod::Fused, StorageMethod::HistoryReplay] {
        for &clients in &cfg.storage.clients {
            for &rounds in &cfg.storage.rounds {
                let units = storage_model(method, clients, rounds, model_units, adapter_units);
                rows.push(StorageRow { method, clients, rounds, units });
            }
        }
    }
    let mut csv = String::from("method,clients,rounds,storage_units\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.method.name(), r.clients, r.rounds, r.units);
    }
    let mut staged = Staged::new(out)?;
    staged.write(files::STORAGE, csv)?;
    staged.commit();
    Ok(rows)
}
