use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient through ReLU given the pre-activation and upstream gradient.
pub fn relu_backward(pre: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    pre.zip_map(upstream, |z, g| if z > 0.0 { g } else { 0.0 })
}

/// Row-wise numerically stable log-softmax.
pub fn log_softmax(logits: &Tensor) -> Tensor {
    let cols = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::domain(format!(
            "label {bad} outside 0..{}",
            logits.cols()
        )));
    }
    Ok(())
}

/// Per-sample negative log-likelihood of the true class.
pub fn per_sample_nll(logits: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    let logp = log_softmax(logits);
    Ok(labels.iter().enumerate().map(|(i, &y)| -logp.get(i, y)).collect())
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    check_labels(logits, labels)?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::domain("empty batch"));
    }
    let logp = log_softmax(logits);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = logp.map(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        loss -= logp.get(i, y);
        grad.set(i, y, grad.get(i, y) - 1.0);
    }
    for g in grad.data_mut() {
        *g *= inv_n;
    }
    Ok((loss * inv_n, grad))
}
