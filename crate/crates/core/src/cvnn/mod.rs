//! Complex-valued layers with forward passes and analytic backward passes.
//!
//! Gradients follow the split convention: for a real loss `L` and a complex
//! value `z = a + ib`, the stored gradient is `dL/da + i dL/db`. Under that
//! convention a complex product `y = w x` back-propagates as
//! `dx = conj(w) dy` and `dw = conj(x) dy`.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gemm;
pub mod head;
pub mod init;
pub mod se;

pub use activation::{crelu, crelu_backward};
pub use conv::{conv3d, conv3d_backward, ConvGrads};
pub use dense::{dense, dense_backward, DenseGrads};
pub use dropout::{apply_mask, dropout, dropout_mask};
pub use head::{cross_entropy, head_backward, magnitude_backward, magnitude_softmax, one_hot};
pub use se::{bottleneck_width, se_block, se_block_backward, SeCache, SeGrads};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

/// Stacks tensors along their last (channel) axis in argument order.
pub fn concat_channels(xs: &[&ComplexTensor]) -> Result<ComplexTensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
    let lead = &first.shape()[..first.shape().len() - 1];
    for x in xs {
        let s = x.shape();
        if s.len() != first.shape().len() || &s[..s.len() - 1] != lead {
            return Err(Error::Shape(format!(
                "concat dimension mismatch: {:?} vs {:?}",
                first.shape(),
                s
            )));
        }
    }
    let widths: Vec<usize> = xs.iter().map(|x| *x.shape().last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut shape = lead.to_vec();
    shape.push(total);
    let mut out = ComplexTensor::zeros(&shape);
    let (yr, yi) = out.parts_mut();
    let mut offset = 0;
    for (x, &w) in xs.iter().zip(&widths) {
        for r in 0..rows {
            let dst = r * total + offset;
            yr[dst..dst + w].copy_from_slice(&x.re()[r * w..(r + 1) * w]);
            yi[dst..dst + w].copy_from_slice(&x.im()[r * w..(r + 1) * w]);
        }
        offset += w;
    }
    Ok(out)
}

/// Inverse of [`concat_channels`]: slices the last axis into blocks of
/// `widths`.
pub fn split_channels(x: &ComplexTensor, widths: &[usize]) -> Result<Vec<ComplexTensor>> {
    let s = x.shape();
    let total = *s.last().ok_or_else(|| Error::Shape("split of a scalar".into()))?;
    if widths.iter().sum::<usize>() != total {
        return Err(Error::Shape(format!("split widths {widths:?} do not sum to {total}")));
    }
    let lead = &s[..s.len() - 1];
    let rows: usize = lead.iter().product();
    let mut offset = 0;
    let mut parts = Vec::with_capacity(widths.len());
    for &w in widths {
        let mut shape = lead.to_vec();
        shape.push(w);
        let mut part = ComplexTensor::zeros(&shape);
        let (pr, pi) = part.parts_mut();
        for r in 0..rows {
            let src = r * total + offset;
            pr[r * w..(r + 1) * w].copy_from_slice(&x.re()[src..src + w]);
            pi[r * w..(r + 1) * w].copy_from_slice(&x.im()[src..src + w]);
        }
        parts.push(part);
        offset += w;
    }
    Ok(parts)
}
