//! Fixtures shared by the layer benchmarks.

use polsar_core::model::{ModelConfig, Network};
use polsar_core::ComplexTensor;
use rand::Rng;

/// Tensor with real and imaginary parts uniform in [-1, 1).
pub fn random_tensor(shape: &[usize], seed: u64) -> ComplexTensor {
    let mut rng = polsar_core::rng::rng(seed);
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ComplexTensor::from_parts(shape, re, im).expect("length matches shape")
}

/// Default three-branch network for `classes` classes, with a matching input
/// batch and labels cycling through the classes.
pub fn network_fixture(classes: usize, batch: usize) -> (Network, ComplexTensor, Vec<u16>) {
    let cfg = ModelConfig::new(classes);
    let net = Network::build(&cfg, 7).expect("default config is valid");
    let x = random_tensor(&cfg.input_shape(batch), 8);
    let labels = (0..batch).map(|i| (i % classes) as u16 + 1).collect();
    (net, x, labels)
}
