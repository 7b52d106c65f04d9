//! Experiment configuration file.
//!
//! TOML with every block optional; omitted keys take the desk-scale
//! defaults of [`ScenarioConfig::desk`]. Unknown keys are rejected.
//!
//! ```toml
//! seed = 3
//!
//! [scenario]
//! kind = "client"
//! clients = [0]
//!
//! [federated]
//! rounds = 20
//! ```

use serde::{Deserialize, Serialize};

use crate::codec::sha256_hex;
use crate::error::{Error, Result};
use crate::federated::FedConfig;
use crate::scenario::{BackdoorSpec, DataSpec, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub federated: FederatedBlock,
    pub unlearning: UnlearningBlock,
    pub scenario: ScenarioBlock,
    pub evaluation: EvaluationBlock,
    pub theory: TheoryBlock,
    pub storage: StorageBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub hidden: Vec<usize>,
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederatedBlock {
    pub n_clients: usize,
    pub alpha: f64,
    pub pretrain_rounds: usize,
    /// Unlearning and retraining rounds.
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearningBlock {
    pub k: usize,
    pub keep_rate: f64,
    pub probe_epochs: usize,
    pub normalize_by_param_count: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Client,
    Class,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioBlock {
    pub kind: ScenarioKind,
    /// Clients to forget (client scenario).
    pub clients: Vec<usize>,
    /// Classes to forget (class scenario).
    pub classes: Vec<usize>,
    pub backdoor_fraction: f64,
    pub trigger_value: f64,
    pub target_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    pub run_oracle: bool,
    pub relearn_rounds: usize,
    pub probe_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryBlock {
    pub dim: usize,
    pub trials: usize,
    pub eta: f64,
    pub keep_rates: Vec<f64>,
    /// Cosines between the two synthetic task gradients.
    pub cosines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageBlock {
    pub clients: Vec<u64>,
    pub rounds: Vec<u64>,
    /// Zero means "derive from the configured model".
    pub model_units: u64,
    pub adapter_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let desk = ScenarioConfig::desk(0);
        let b = desk.backdoor;
        ExperimentConfig {
            seed: 0,
            data: DataBlock {
                classes: desk.data.classes,
                dim: desk.data.dim,
                per_class: desk.data.per_class,
                spread: desk.data.spread,
                test_fraction: desk.data.test_fraction,
            },
            model: ModelBlock { hidden: desk.hidden, init_scale: desk.init_scale },
            federated: FederatedBlock {
                n_clients: desk.fed.n_clients,
                alpha: desk.fed.alpha,
                pretrain_rounds: desk.pretrain_rounds,
                rounds: desk.fed.rounds,
                local_epochs: desk.fed.local_epochs,
                lr: desk.fed.lr,
                batch_size: desk.fed.batch_size,
            },
            unlearning: UnlearningBlock {
                k: desk.fed.k,
                keep_rate: desk.fed.keep_rate,
                probe_epochs: desk.probe_epochs,
                normalize_by_param_count: desk.normalize_drift,
            },
            scenario: ScenarioBlock {
                kind: ScenarioKind::Client,
                clients: vec![0],
                classes: vec![0],
                backdoor_fraction: b.fraction,
                trigger_value: b.trigger_value,
                target_label: b.target_label,
            },
            evaluation: EvaluationBlock { run_oracle: desk.run_oracle, relearn_rounds: 0, probe_samples: 256 },
            theory: TheoryBlock {
                dim: 200,
                trials: 10_000,
                eta: 0.01,
                keep_rates: vec![0.1, 0.5, 1.0],
                cosines: vec![-0.8, 0.0, 0.6],
            },
            storage: StorageBlock {
                clients: vec![10, 50, 100],
                rounds: vec![10, 20, 50, 100],
                model_units: 0,
                adapter_units: 0,
            },
            output: OutputBlock { dir: "out".into() },
        }
    }
}

impl Default for DataBlock {
    fn default() -> Self {
        ExperimentConfig::default().data
    }
}
impl Default for ModelBlock {
    fn default() -> Self {
        ExperimentConfig::default().model
    }
}
impl Default for FederatedBlock {
    fn default() -> Self {
        ExperimentConfig::default().federated
    }
}
impl Default for UnlearningBlock {
    fn default() -> Self {
        ExperimentConfig::default().unlearning
    }
}
impl Default for ScenarioBlock {
    fn default() -> Self {
        ExperimentConfig::default().scenario
    }
}
impl Default for EvaluationBlock {
    fn default() -> Self {
        ExperimentConfig::default().evaluation
    }
}
impl Default for TheoryBlock {
    fn default() -> Self {
        ExperimentConfig::default().theory
    }
}
impl Default for StorageBlock {
    fn default() -> Self {
        ExperimentConfig::default().storage
    }
}
impl Default for OutputBlock {
    fn default() -> Self {
        ExperimentConfig::default().output
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, so equivalent files share a digest.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit; larger seeds could not round-trip.
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed must fit in a signed 64-bit integer"));
        }
        let d = &self.data;
        if d.classes < 2 || d.dim < 2 || d.per_class == 0 {
            return Err(Error::config("data needs at least 2 classes, 2 features and 1 sample per class"));
        }
        if !(d.spread >= 0.0 && d.spread.is_finite()) {
            return Err(Error::config("spread must be finite and non-negative"));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        if self.federated.pretrain_rounds == 0 {
            return Err(Error::config("pretrain_rounds must be positive"));
        }
        if self.evaluation.probe_samples == 0 {
            return Err(Error::config("probe_samples must be positive"));
        }
        let t = &self.theory;
        if t.dim == 0 || t.keep_rates.is_empty() || t.cosines.is_empty() {
            return Err(Error::config("theory block needs dim > 0, keep rates and cosines"));
        }
        if t.cosines.iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::config("theory cosines must lie in [-1, 1]"));
        }
        let s = &self.storage;
        if s.clients.is_empty() || s.rounds.is_empty() || s.clients.contains(&0) || s.rounds.contains(&0) {
            return Err(Error::config("storage ranges must be non-empty and positive"));
        }
        self.fed_config().validate()
    }

    pub fn fed_config(&self) -> FedConfig {
        let f = &self.federated;
        FedConfig {
            n_clients: f.n_clients,
            rounds: f.rounds,
            local_epochs: f.local_epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            alpha: f.alpha,
            k: self.unlearning.k,
            keep_rate: self.unlearning.keep_rate,
            seed: self.seed,
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self.scenario.kind {
            ScenarioKind::Client => Scenario::Client { clients: self.scenario.clients.clone() },
            ScenarioKind::Class => Scenario::Class { classes: self.scenario.classes.clone() },
            ScenarioKind::Sample => Scenario::Sample,
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let d = &self.data;
        let s = &self.scenario;
        ScenarioConfig {
            data: DataSpec {
                classes: d.classes,
                dim: d.dim,
                per_class: d.per_class,
                spread: d.spread,
                test_fraction: d.test_fraction,
            },
            hidden: self.model.hidden.clone(),
            init_scale: self.model.init_scale,
            fed: self.fed_config(),
            pretrain_rounds: self.federated.pretrain_rounds,
            probe_epochs: self.unlearning.probe_epochs,
            normalize_drift: self.unlearning.normalize_by_param_count,
            backdoor: BackdoorSpec {
                fraction: s.backdoor_fraction,
                trigger_value: s.trigger_value,
                target_label: s.target_label,
            },
            run_oracle: self.evaluation.run_oracle,
            relearn_rounds: self.evaluation.relearn_rounds,
            config_digest: self.digest(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_desk_preset() {
        let cfg = ExperimentConfig::parse("").unwrap();
        let mut desk = ScenarioConfig::desk(0);
        desk.config_digest = cfg.digest();
        assert_eq!(cfg.scenario_config(), desk);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::parse("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("[federated]\nround = 3"), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("[scenario]\nkind = \"cluster\"").is_err());
    }

    #[test]
    fn round_trip_and_digest() {
        let cfg = ExperimentConfig::parse("seed = 9\n[scenario]\nkind = \"class\"\nclasses = [2]").unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest(), again.digest());
        assert_ne!(cfg.digest(), ExperimentConfig::default().digest());
        assert_eq!(cfg.scenario(), Scenario::Class { classes: vec![2] });
    }

    #[test]
    fn invalid_values() {
        assert!(ExperimentConfig::parse("[unlearning]\nkeep_rate = 0.0").is_err());
        assert!(ExperimentConfig::parse("[federated]\nlr = -1.0").is_err());
        assert!(ExperimentConfig::parse("[data]\ntest_fraction = 1.0").is_err());
        assert!(ExperimentConfig::parse("[storage]\nrounds = []").is_err());
    }
}
