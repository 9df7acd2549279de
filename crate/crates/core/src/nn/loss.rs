use crate::error::{Error, Result};
use crate::nn::attention::softmax_in_place;

/// `-log softmax(logits)[target]` computed through log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Index(format!(
            "target {target} for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}

/// Loss and `softmax(logits) - onehot(target)`.
pub fn cross_entropy_with_grad(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(logits, target)?;
    let mut g = logits.to_vec();
    softmax_in_place(&mut g);
    g[target] -= 1.0;
    Ok((loss, g))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}
