//! Evaluation: accuracy, loss-threshold membership inference, class-0
//! metrics for backdoor removal, and the per-run report.

use serde::{Deserialize, Serialize};

use crate::adapter::UnlearnedModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::LayeredModel;
use crate::numcore::{per_sample_nll, Tensor};

/// Anything that maps a feature batch to logits.
pub trait Predictor {
    fn logits(&self, x: &Tensor) -> Result<Tensor>;
}

impl Predictor for LayeredModel {
    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

impl Predictor for UnlearnedModel {
    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.merged().forward(x)
    }
}

/// Fraction of argmax-correct predictions; ties go to the lowest class.
pub fn accuracy<P: Predictor + ?Sized>(model: &P, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::domain("accuracy of an empty dataset"));
    }
    let pred = model.logits(&ds.features)?.argmax_rows();
    let hits = pred.iter().zip(&ds.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Per-sample cross-entropy under `model`.
pub fn sample_losses<P: Predictor + ?Sized>(model: &P, ds: &Dataset) -> Result<Vec<f64>> {
    per_sample_nll(&model.logits(&ds.features)?, &ds.labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiaResult {
    /// Best balanced attack accuracy, `(TPR + TNR) / 2`.
    pub accuracy: f64,
    /// Loss threshold achieving it; samples with loss `<= threshold` are
    /// called members. `-inf` means "nobody is a member".
    pub threshold: f64,
}

/// Best balanced accuracy of the rule "member iff loss <= t" over every
/// threshold in `{-inf} ∪ observed losses`.
pub fn threshold_attack(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<MiaResult> {
    if member_losses.is_empty() || nonmember_losses.is_empty() {
        return Err(Error::domain("membership inference needs members and non-members"));
    }
    let mut all: Vec<(f64, bool)> = member_losses
        .iter()
        .map(|&l| (l, true))
        .chain(nonmember_losses.iter().map(|&l| (l, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nm, nn) = (member_losses.len() as f64, nonmember_losses.len() as f64);
    let mut best = MiaResult { accuracy: 0.5, threshold: f64::NEG_INFINITY };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let acc = 0.5 * (tp as f64 / nm + (nn - fp as f64) / nn);
        if acc > best.accuracy {
            best = MiaResult { accuracy: acc, threshold: t };
        }
    }
    Ok(best)
}

/// Loss-threshold membership inference against `target`.
pub fn mia_attack<P: Predictor + ?Sized>(
    target: &P,
    member_set: &Dataset,
    nonmember_set: &Dataset,
) -> Result<MiaResult> {
    if member_set.is_empty() || nonmember_set.is_empty() {
        return Err(Error::domain("membership inference needs members and non-members"));
    }
    threshold_attack(&sample_losses(target, member_set)?, &sample_losses(target, nonmember_set)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroClassMetrics {
    /// Accuracy on clean samples whose true label is 0.
    pub zero_acc: f64,
    /// Fraction of class-0 predictions (clean and triggered) that are truly 0.
    pub precision_zero: f64,
    /// Set when the model never predicts 0; `precision_zero` is then 1.0.
    pub precision_vacuous: bool,
}

pub fn zero_class_metrics<P: Predictor + ?Sized>(
    model: &P,
    clean_test: &Dataset,
    triggered_test: &Dataset,
) -> Result<ZeroClassMetrics> {
    let zeros = clean_test.filter(|_, y| y == 0);
    if zeros.is_empty() {
        return Err(Error::domain("clean test set has no class-0 samples"));
    }
    let zero_acc = accuracy(model, &zeros)?;
    let mut predicted_zero = 0usize;
    let mut true_zero = 0usize;
    for ds in [clean_test, triggered_test] {
        if ds.is_empty() {
            continue;
        }
        let pred = model.logits(&ds.features)?.argmax_rows();
        for (p, y) in pred.iter().zip(&ds.labels) {
            if *p == 0 {
                predicted_zero += 1;
                if *y == 0 {
                    true_zero += 1;
                }
            }
        }
    }
    let (precision_zero, precision_vacuous) = if predicted_zero == 0 {
        (1.0, true)
    } else {
        (true_zero as f64 / predicted_zero as f64, false)
    };
    Ok(ZeroClassMetrics { zero_acc, precision_zero, precision_vacuous })
}

/// Share of triggered samples with a true label other than `target` that
/// the model sends to `target`.
pub fn backdoor_success<P: Predictor + ?Sized>(
    model: &P,
    triggered_test: &Dataset,
    target: usize,
) -> Result<f64> {
    let victims = triggered_test.filter(|_, y| y != target);
    let relabeled = victims.with_labels(vec![target; victims.len()])?;
    accuracy(model, &relabeled)
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One row of results for one model (original, unlearned, or oracle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub config_digest: String,
    pub ra: f64,
    pub fa: f64,
    pub rea: Option<f64>,
    pub mia: f64,
    pub zero_acc: Option<f64>,
    pub precision_zero: Option<f64>,
    pub precision_vacuous: bool,
    pub comp_flops: u64,
    pub comm_bytes_up: u64,
    pub comm_bytes_down: u64,
    pub storage_units: u64,
    /// Wall-clock seconds; timing is kept out of every serialized form so
    /// report files stay reproducible.
    #[serde(skip)]
    pub comp_seconds: f64,
}

const CSV_COLUMNS: [&str; 16] = [
    "schema_version",
    "scenario",
    "method",
    "seed",
    "config_digest",
    "ra",
    "fa",
    "rea",
    "mia",
    "zero_acc",
    "precision_zero",
    "precision_vacuous",
    "comp_flops",
    "comm_bytes_up",
    "comm_bytes_down",
    "storage_units",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl RunReport {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let fields = [Some(self.ra), Some(self.fa), self.rea, Some(self.mia), self.zero_acc, self.precision_zero];
        if fields.iter().flatten().all(|&v| unit(v)) {
            Ok(())
        } else {
            Err(Error::domain("accuracy-type report field outside [0, 1]"))
        }
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        [
            self.schema_version.to_string(),
            self.scenario.clone(),
            self.method.clone(),
            self.seed.to_string(),
            self.config_digest.clone(),
            format!("{:?}", self.ra),
            format!("{:?}", self.fa),
            opt(self.rea),
            format!("{:?}", self.mia),
            opt(self.zero_acc),
            opt(self.precision_zero),
            self.precision_vacuous.to_string(),
            self.comp_flops.to_string(),
            self.comm_bytes_up.to_string(),
            self.comm_bytes_down.to_string(),
            self.storage_units.to_string(),
        ]
        .join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<RunReport> {
        let f: Vec<&str> = row.trim_end().split(',').collect();
        if f.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse(format!("report row has {} fields", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad report field `{s}`")))
        }
        fn opt_num(s: &str) -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { num(s).map(Some) }
        }
        Ok(RunReport {
            schema_version: num(f[0])?,
            scenario: f[1].to_string(),
            method: f[2].to_string(),
            seed: num(f[3])?,
            config_digest: f[4].to_string(),
            ra: num(f[5])?,
            fa: num(f[6])?,
            rea: opt_num(f[7])?,
            mia: num(f[8])?,
            zero_acc: opt_num(f[9])?,
            precision_zero: opt_num(f[10])?,
            precision_vacuous: num(f[11])?,
            comp_flops: num(f[12])?,
            comm_bytes_up: num(f[13])?,
            comm_bytes_down: num(f[14])?,
            storage_units: num(f[15])?,
            comp_seconds: 0.0,
        })
    }

    /// Key/value sidecar.
    pub fn to_sidecar(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_sidecar(text: &str) -> Result<RunReport> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn toy(rows: &[&[f64]], labels: Vec<usize>, c: usize) -> Dataset {
        Dataset::new(Tensor::from_rows(rows), labels, c).unwrap()
    }

    #[test]
    fn constant_model_is_chance_level() {
        let m = LayeredModel::new_mlp(&[2, 4], 0.0, &mut Rng::new(0)).unwrap();
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let ds = toy(&refs, (0..8).map(|i| i % 4).collect(), 4);
        assert_eq!(accuracy(&m, &ds).unwrap(), 0.25);
    }

    #[test]
    fn single_correct_sample() {
        let layer = crate::model::DenseLayer::new(Tensor::identity(2), Tensor::zeros(1, 2)).unwrap();
        let m = LayeredModel::from_layers(vec![layer]).unwrap();
        assert_eq!(accuracy(&m, &toy(&[&[0.0, 1.0]], vec![1], 2)).unwrap(), 1.0);
        assert!(matches!(accuracy(&m, &Dataset::empty(2, 2)), Err(Error::Domain(_))));
    }

    #[test]
    fn threshold_attack_matches_brute_force() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let m: Vec<f64> = (0..rng.index(12) + 1).map(|_| (rng.uniform(0.0, 3.0) * 4.0).round() / 4.0).collect();
            let n: Vec<f64> = (0..rng.index(12) + 1).map(|_| (rng.uniform(0.5, 4.0) * 4.0).round() / 4.0).collect();
            let got = threshold_attack(&m, &n).unwrap().accuracy;
            let mut best: f64 = 0.5;
            for &t in m.iter().chain(&n) {
                let tpr = m.iter().filter(|&&l| l <= t).count() as f64 / m.len() as f64;
                let tnr = n.iter().filter(|&&l| l > t).count() as f64 / n.len() as f64;
                best = best.max(0.5 * (tpr + tnr));
            }
            assert!((got - best).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_sets_are_indistinguishable() {
        let l = [0.3, 0.1, 0.9, 0.9, 2.0];
        assert_eq!(threshold_attack(&l, &l).unwrap().accuracy, 0.5);
        assert!(threshold_attack(&[], &l).is_err());
    }

    #[test]
    fn vacuous_precision() {
        // always predicts class 1
        let layer = crate::model::DenseLayer::new(Tensor::zeros(2, 2), Tensor::from_rows(&[&[0.0, 1.0]])).unwrap();
        let m = LayeredModel::from_layers(vec![layer]).unwrap();
        let clean = toy(&[&[0.0, 0.0], &[1.0, 1.0]], vec![0, 1], 2);
        let z = zero_class_metrics(&m, &clean, &clean).unwrap();
        assert_eq!(z.zero_acc, 0.0);
        assert!(z.precision_vacuous);
        assert_eq!(z.precision_zero, 1.0);
        let no_zero = toy(&[&[1.0, 1.0]], vec![1], 2);
        assert!(zero_class_metrics(&m, &no_zero, &no_zero).is_err());
    }

    #[test]
    fn report_round_trips() {
        let r = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: "client".into(),
            method: "fused".into(),
            seed: 7,
            config_digest: "abc123".into(),
            ra: 0.91,
            fa: 0.1 + 0.2,
            rea: None,
            mia: 0.5,
            zero_acc: Some(1.0),
            precision_zero: None,
            precision_vacuous: false,
            comp_flops: 12345,
            comm_bytes_up: 10,
            comm_bytes_down: 20,
            storage_units: 30,
            comp_seconds: 0.0,
        };
        assert_eq!(RunReport::from_csv_row(&r.to_csv_row()).unwrap(), r);
        assert_eq!(RunReport::from_sidecar(&r.to_sidecar()).unwrap(), r);
        assert_eq!(RunReport::csv_header().split(',').count(), r.to_csv_row().split(',').count());
    }
}
