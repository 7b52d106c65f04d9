//! First-order probes of knowledge overwriting.
//!
//! With `g1` the old task's gradient at the old optimum and `g2` the new
//! task's gradient there, a step `-η g2` changes the old task's loss by about
//! `g1ᵀ(-η g2) = -η ‖g1‖ ‖g2‖ Φ`, where `Φ` is the cosine between the two
//! gradients. When only a random subset of parameters (each kept with
//! probability `p`) is updated, the expected change scales by `p`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::LayeredModel;
use crate::numcore::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryProbe {
    /// Flattened parameters at the old task's optimum.
    pub theta1: Vec<f64>,
    pub grad_t1: Vec<f64>,
    pub grad_t2: Vec<f64>,
    pub eta: f64,
    pub keep_rate: f64,
}

impl TheoryProbe {
    pub fn new(grad_t1: Vec<f64>, grad_t2: Vec<f64>, eta: f64, keep_rate: f64) -> Result<Self> {
        let probe = TheoryProbe { theta1: Vec::new(), grad_t1, grad_t2, eta, keep_rate };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grad_t1.len() != self.grad_t2.len() {
            return Err(Error::dim("task gradients differ in length"));
        }
        if !self.theta1.is_empty() && self.theta1.len() != self.grad_t1.len() {
            return Err(Error::dim("parameter vector and gradients differ in length"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta must be positive"));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::config("keep_rate must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine(g1: &[f64], g2: &[f64]) -> Result<f64> {
    let (n1, n2) = (norm(g1), norm(g2));
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Degenerate("cosine similarity with a zero gradient".into()));
    }
    Ok((dot(g1, g2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// `-η ‖g1‖ ‖g2‖ Φ`, or 0 when either gradient vanishes.
fn first_order_change(g1: &[f64], g2: &[f64], eta: f64) -> f64 {
    match cosine(g1, g2) {
        Ok(phi) => -eta * norm(g1) * norm(g2) * phi,
        Err(_) => 0.0,
    }
}

/// Task difference `Φ`: cosine similarity of the two task gradients.
pub fn gradient_cosine(probe: &TheoryProbe) -> Result<f64> {
    probe.validate()?;
    cosine(&probe.grad_t1, &probe.grad_t2)
}

/// Predicted change of the old task's loss after one full step on the new
/// task: `-η ‖g1‖ ‖g2‖ Φ`.
pub fn predicted_degradation(probe: &TheoryProbe) -> Result<f64> {
    gradient_cosine(probe)?;
    Ok(first_order_change(&probe.grad_t1, &probe.grad_t2, probe.eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedExpectation {
    pub empirical_mean: f64,
    pub empirical_std: f64,
    /// `-η p ‖g1‖ ‖g2‖ Φ`
    pub predicted: f64,
    /// `|mean - predicted| / standard error`; 0 when both are exactly equal.
    pub z_score: f64,
    pub trials: usize,
}

/// Monte-Carlo check of the masked-update expectation. Each trial samples a
/// Bernoulli(`p`) mask `v` and records the first-order change
/// `g1ᵀ(-η (v ⊙ g2))`.
pub fn masked_expectation_check(probe: &TheoryProbe, trials: usize, rng: &mut Rng) -> Result<MaskedExpectation> {
    probe.validate()?;
    if trials < 1000 {
        return Err(Error::config("masked expectation check needs at least 1000 trials"));
    }
    let (g1, g2, p) = (&probe.grad_t1, &probe.grad_t2, probe.keep_rate);
    let predicted = p * first_order_change(g1, g2, probe.eta);

    // Welford: a run of identical samples reproduces that sample exactly.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut masked = vec![0.0; g2.len()];
    for k in 1..=trials {
        for (m, &g) in masked.iter_mut().zip(g2) {
            *m = if rng.bernoulli(p) { g } else { 0.0 };
        }
        let x = first_order_change(g1, &masked, probe.eta);
        let delta = x - mean;
        mean += delta / k as f64;
        m2 += delta * (x - mean);
    }
    let std = (m2 / (trials - 1) as f64).sqrt();
    let se = std / (trials as f64).sqrt();
    let gap = (mean - predicted).abs();
    let z_score = if gap == 0.0 { 0.0 } else if se == 0.0 { f64::INFINITY } else { gap / se };
    Ok(MaskedExpectation { empirical_mean: mean, empirical_std: std, predicted, z_score, trials })
}

/// Mean-loss gradient of `model` on `data`, flattened like
/// [`LayeredModel::flat_params`].
pub fn flat_gradient(model: &LayeredModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let (loss, grads) = model.backward(&data.features, &data.labels)?;
    Ok((loss, grads.iter().flat_map(|g| g.flat()).collect()))
}

/// Measured change of the old task's loss after one step of size `eta`
/// along the new task's gradient, alongside the first-order prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverwriteMeasurement {
    pub phi: f64,
    pub predicted: f64,
    pub actual: f64,
}

pub fn measure_overwrite(
    model: &LayeredModel,
    old_task: &Dataset,
    new_task: &Dataset,
    eta: f64,
) -> Result<OverwriteMeasurement> {
    let (loss_before, g1) = flat_gradient(model, old_task)?;
    let (_, g2) = flat_gradient(model, new_task)?;
    let probe = TheoryProbe { theta1: model.flat_params(), grad_t1: g1, grad_t2: g2, eta, keep_rate: 1.0 };
    let phi = gradient_cosine(&probe)?;
    let predicted = predicted_degradation(&probe)?;
    let stepped: Vec<f64> = probe.theta1.iter().zip(&probe.grad_t2).map(|(t, g)| t - eta * g).collect();
    let moved = model.with_flat_params(&stepped)?;
    let (loss_after, _) = moved.backward(&old_task.features, &old_task.labels)?;
    Ok(OverwriteMeasurement { phi, predicted, actual: loss_after - loss_before })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    #[test]
    fn cosine_extremes() {
        let g = vec![1.0, -2.0, 0.5];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let same = TheoryProbe::new(g.clone(), g.clone(), 0.1, 1.0).unwrap();
        assert!((gradient_cosine(&same).unwrap() - 1.0).abs() < 1e-15);
        let opp = TheoryProbe::new(g, neg, 0.1, 1.0).unwrap();
        assert!((gradient_cosine(&opp).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_degenerate() {
        let p = TheoryProbe::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.1, 1.0).unwrap();
        assert!(matches!(gradient_cosine(&p), Err(Error::Degenerate(_))));
        assert!(predicted_degradation(&p).is_err());
        let r = masked_expectation_check(&p, 1000, &mut Rng::new(0)).unwrap();
        assert_eq!((r.predicted, r.empirical_mean, r.empirical_std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn orthogonal_and_opposed() {
        let p = TheoryProbe::new(vec![1.0, 0.0], vec![0.0, 3.0], 0.1, 1.0).unwrap();
        assert_eq!(predicted_degradation(&p).unwrap().abs(), 0.0);
        let p = TheoryProbe::new(vec![1.0, 1.0], vec![-1.0, -0.5], 0.1, 1.0).unwrap();
        assert!(predicted_degradation(&p).unwrap() > 0.0);
    }

    #[test]
    fn prediction_is_linear_in_eta() {
        let mut rng = Rng::new(1);
        let (a, b) = (random_vec(&mut rng, 20), random_vec(&mut rng, 20));
        let p1 = TheoryProbe::new(a.clone(), b.clone(), 0.25, 1.0).unwrap();
        let p2 = TheoryProbe::new(a, b, 0.5, 1.0).unwrap();
        assert_eq!(2.0 * predicted_degradation(&p1).unwrap(), predicted_degradation(&p2).unwrap());
    }

    #[test]
    fn full_mask_reproduces_unmasked_prediction_exactly() {
        let mut rng = Rng::new(2);
        let p = TheoryProbe::new(random_vec(&mut rng, 50), random_vec(&mut rng, 50), 0.01, 1.0).unwrap();
        let r = masked_expectation_check(&p, 1000, &mut Rng::new(3)).unwrap();
        let exact = predicted_degradation(&p).unwrap();
        assert_eq!(r.empirical_mean.to_bits(), exact.to_bits());
        assert_eq!(r.predicted.to_bits(), exact.to_bits());
        assert_eq!(r.empirical_std, 0.0);
        assert_eq!(r.z_score, 0.0);
    }

    #[test]
    fn quadratic_first_order_error_is_second_order() {
        // L1(θ) = ½‖θ - c‖², so L1(θ - ηg2) - L1(θ) = -η g1·g2 + ½η²‖g2‖²
        let theta = [0.3, -0.7];
        let c = [1.0, 0.5];
        let g1: Vec<f64> = theta.iter().zip(&c).map(|(t, c)| t - c).collect();
        let g2 = vec![0.4, -1.2];
        let loss = |t: &[f64]| 0.5 * t.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut prev = None;
        for eta in [1e-1, 1e-2, 1e-3] {
            let p = TheoryProbe::new(g1.clone(), g2.clone(), eta, 1.0).unwrap();
            let stepped: Vec<f64> = theta.iter().zip(&g2).map(|(t, g)| t - eta * g).collect();
            let actual = loss(&stepped) - loss(&theta);
            let err = (actual - predicted_degradation(&p).unwrap()).abs();
            let exact_err = 0.5 * eta * eta * norm(&g2).powi(2);
            assert!((err - exact_err).abs() < 1e-12);
            if let Some(e) = prev {
                let ratio: f64 = e / err;
                assert!((ratio - 100.0).abs() < 1e-3);
            }
            prev = Some(err);
        }
    }

    #[test]
    fn rejects_too_few_trials() {
        let p = TheoryProbe::new(vec![1.0], vec![1.0], 0.1, 0.5).unwrap();
        assert!(masked_expectation_check(&p, 999, &mut Rng::new(0)).is_err());
    }
}
