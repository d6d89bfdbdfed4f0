//! Inverted dropout on complex values. One Bernoulli draw per complex element
//! zeroes real and imaginary parts together; survivors scale by `1/(1-rate)`.

use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::ComplexTensor;

/// Per-element multipliers: `0` for dropped elements, `1/(1-rate)` otherwise.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

pub fn apply_mask(x: &ComplexTensor, mask: &[f64]) -> ComplexTensor {
    assert_eq!(x.len(), mask.len(), "dropout mask length");
    let re = x.re().iter().zip(mask).map(|(v, m)| v * m).collect();
    let im = x.im().iter().zip(mask).map(|(v, m)| v * m).collect();
    ComplexTensor::from_parts(x.shape(), re, im).expect("same shape")
}

/// Dropout forward pass. Inference mode and `rate == 0` are the identity.
pub fn dropout(x: &ComplexTensor, rate: f64, seed: u64, training: bool) -> ComplexTensor {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.len(), rate, &mut crate::rng::rng(seed));
    apply_mask(x, &mask)
}
