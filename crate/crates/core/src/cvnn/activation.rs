//! Split complex ReLU: `max(re, 0) + i max(im, 0)`.

use crate::tensor::ComplexTensor;

pub fn crelu(x: &ComplexTensor) -> ComplexTensor {
    let re = x.re().iter().map(|v| v.max(0.0)).collect();
    let im = x.im().iter().map(|v| v.max(0.0)).collect();
    ComplexTensor::from_parts(x.shape(), re, im).expect("same shape")
}

/// Passes each gradient component through where the matching component of
/// the pre-activation was positive.
pub fn crelu_backward(pre: &ComplexTensor, grad_out: &ComplexTensor) -> ComplexTensor {
    assert_eq!(pre.len(), grad_out.len(), "crelu_backward length");
    let gate =
        |p: &[f64], g: &[f64]| -> Vec<f64> { p.iter().zip(g).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect() };
    ComplexTensor::from_parts(
        pre.shape(),
        gate(pre.re(), grad_out.re()),
        gate(pre.im(), grad_out.im()),
    )
    .expect("same shape")
}
