//! Classification head: softmax over complex-logit magnitudes and the
//! batch-mean cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

/// Lower clamp applied to probabilities inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
/// Magnitude floor for the `|z|` derivative.
pub const MAGNITUDE_EPS: f64 = 1e-12;

fn rows(logits: &ComplexTensor) -> Result<(usize, usize)> {
    match logits.shape() {
        [b, l] => Ok((*b, *l)),
        s => Err(Error::Shape(format!("logits must be [B, L], got {s:?}"))),
    }
}

/// Row-wise softmax of `|z|`, stabilized by subtracting each row's maximum.
pub fn magnitude_softmax(logits: &ComplexTensor) -> Result<Vec<f64>> {
    let (batch, classes) = rows(logits)?;
    let mut probs = vec![0.0; batch * classes];
    for b in 0..batch {
        let row = &mut probs[b * classes..(b + 1) * classes];
        for (l, p) in row.iter_mut().enumerate() {
            let i = b * classes + l;
            *p = logits.re()[i].hypot(logits.im()[i]);
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|p| *p = (*p - m).exp());
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    Ok(probs)
}

/// Mean over the batch of `-sum_l y_l ln(max(p_l, 1e-12))`.
pub fn cross_entropy(pred: &[f64], one_hot: &[f64], classes: usize) -> f64 {
    assert_eq!(pred.len(), one_hot.len(), "cross_entropy length");
    let batch = pred.len() / classes;
    let total: f64 = pred
        .iter()
        .zip(one_hot)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(LOG_FLOOR).ln())
        .sum();
    total / batch as f64
}

pub fn one_hot(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; labels.len() * classes];
    for (b, &l) in labels.iter().enumerate() {
        y[b * classes + l] = 1.0;
    }
    y
}

/// Gradient of `d|z| / d(re, im)` scaled by `upstream`:
/// `upstream * (re, im) / max(|z|, 1e-12)`.
pub fn magnitude_backward(re: f64, im: f64, upstream: f64) -> (f64, f64) {
    let mag = re.hypot(im).max(MAGNITUDE_EPS);
    (upstream * re / mag, upstream * im / mag)
}

/// Gradient of `cross_entropy(magnitude_softmax(logits))` with respect to the
/// real and imaginary logit parts.
pub fn head_backward(logits: &ComplexTensor, probs: &[f64], one_hot: &[f64]) -> Result<ComplexTensor> {
    let (batch, classes) = rows(logits)?;
    let mut grad = ComplexTensor::zeros(logits.shape());
    let inv_batch = 1.0 / batch as f64;
    for b in 0..batch {
        let p = &probs[b * classes..(b + 1) * classes];
        let y = &one_hot[b * classes..(b + 1) * classes];
        // dL/dp, honouring the clamp inside the logarithm.
        let dp: Vec<f64> = p
            .iter()
            .zip(y)
            .map(|(&p, &y)| {
                if y != 0.0 && p > LOG_FLOOR {
                    -y * inv_batch / p
                } else {
                    0.0
                }
            })
            .collect();
        let weighted: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
        for l in 0..classes {
            let dm = p[l] * (dp[l] - weighted);
            let i = b * classes + l;
            let (gr, gi) = magnitude_backward(logits.re()[i], logits.im()[i], dm);
            grad.re_mut()[i] = gr;
            grad.im_mut()[i] = gi;
        }
    }
    Ok(grad)
}
