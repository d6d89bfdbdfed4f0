//! Glorot-uniform initialization for complex and real parameters.

use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::ComplexTensor;

/// Complex weights with real and imaginary parts i.i.d. uniform in
/// `±sqrt(6 / (fan_in + fan_out)) / sqrt(2)`, so the complex variance equals
/// the real Glorot variance.
pub fn glorot_complex(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> ComplexTensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() / std::f64::consts::SQRT_2;
    let n: usize = shape.iter().product();
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for _ in 0..n {
        re.push(rng.random_range(-limit..limit));
        im.push(rng.random_range(-limit..limit));
    }
    ComplexTensor::from_parts(shape, re, im).expect("sized from shape")
}

/// Real Glorot-uniform weights, stored with a zero imaginary plane.
pub fn glorot_real(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> ComplexTensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    ComplexTensor::from_real(shape, re).expect("sized from shape")
}
