//! Squeeze-and-excitation channel attention for complex feature maps.
//!
//! The squeeze averages channel magnitudes `|u|` over every spatial position,
//! giving a real descriptor `z`. The excitation is the usual bottleneck
//! `s = sigmoid(W2 relu(W1 z))` with real `W1: [C/r, C]`, `W2: [C, C/r]` and no
//! biases. Each complex channel is then scaled by its real gate `s_c`.

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

/// Magnitude floor for the `|u|` derivative.
pub const MAGNITUDE_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SeCache {
    pub squeezed: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub gates: Vec<f64>,
}

pub struct SeGrads {
    pub input: ComplexTensor,
    pub w1: ComplexTensor,
    pub w2: ComplexTensor,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Dims {
    batch: usize,
    spatial: usize,
    channels: usize,
    hidden: usize,
}

fn dims(u: &ComplexTensor, w1: &ComplexTensor, w2: &ComplexTensor) -> Result<Dims> {
    let us = u.shape();
    if us.len() < 2 {
        return Err(Error::Shape(format!(
            "se_block input {us:?} needs batch and channel axes"
        )));
    }
    let channels = us[us.len() - 1];
    let batch = us[0];
    let spatial = us[1..us.len() - 1].iter().product();
    let hidden = w1.shape()[0];
    if w1.shape() != [hidden, channels] || w2.shape() != [channels, hidden] {
        return Err(Error::Shape(format!(
            "se_block weights {:?}/{:?} do not fit {channels} channels",
            w1.shape(),
            w2.shape()
        )));
    }
    Ok(Dims {
        batch,
        spatial,
        channels,
        hidden,
    })
}

/// Checks that `channels / reduction` is a whole, nonzero bottleneck width.
pub fn bottleneck_width(channels: usize, reduction: usize) -> Result<usize> {
    if reduction == 0 || channels % reduction != 0 || channels / reduction == 0 {
        return Err(Error::BadReduction { channels, reduction });
    }
    Ok(channels / reduction)
}

pub fn se_block(u: &ComplexTensor, w1: &ComplexTensor, w2: &ComplexTensor) -> Result<(ComplexTensor, SeCache)> {
    let d = dims(u, w1, w2)?;
    let (c, r) = (d.channels, d.hidden);
    let mut squeezed = vec![0.0; d.batch * c];
    for b in 0..d.batch {
        let z = &mut squeezed[b * c..(b + 1) * c];
        for s in 0..d.spatial {
            let o = (b * d.spatial + s) * c;
            for ch in 0..c {
                z[ch] += u.re()[o + ch].hypot(u.im()[o + ch]);
            }
        }
        let n = d.spatial as f64;
        z.iter_mut().for_each(|v| *v /= n);
    }

    let mut hidden_pre = vec![0.0; d.batch * r];
    let mut gates = vec![0.0; d.batch * c];
    for b in 0..d.batch {
        let z = &squeezed[b * c..(b + 1) * c];
        for j in 0..r {
            hidden_pre[b * r + j] = (0..c).map(|ch| w1.re()[j * c + ch] * z[ch]).sum();
        }
    }
    let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
    for b in 0..d.batch {
        for ch in 0..c {
            let a: f64 = (0..r).map(|j| w2.re()[ch * r + j] * hidden[b * r + j]).sum();
            gates[b * c + ch] = sigmoid(a);
        }
    }

    let mut out = u.clone();
    {
        let (yr, yi) = out.parts_mut();
        for b in 0..d.batch {
            for s in 0..d.spatial {
                let o = (b * d.spatial + s) * c;
                for ch in 0..c {
                    let g = gates[b * c + ch];
                    yr[o + ch] *= g;
                    yi[o + ch] *= g;
                }
            }
        }
    }
    Ok((
        out,
        SeCache {
            squeezed,
            hidden_pre,
            hidden,
            gates,
        },
    ))
}

pub fn se_block_backward(
    u: &ComplexTensor,
    w1: &ComplexTensor,
    w2: &ComplexTensor,
    cache: &SeCache,
    grad_out: &ComplexTensor,
) -> Result<SeGrads> {
    let d = dims(u, w1, w2)?;
    let (c, r) = (d.channels, d.hidden);
    let (ur, ui) = (u.re(), u.im());
    let (gr, gi) = (grad_out.re(), grad_out.im());

    let mut gw1 = vec![0.0; r * c];
    let mut gw2 = vec![0.0; c * r];
    let mut grad_z = vec![0.0; d.batch * c];
    for b in 0..d.batch {
        let mut grad_gate = vec![0.0; c];
        for s in 0..d.spatial {
            let o = (b * d.spatial + s) * c;
            for ch in 0..c {
                grad_gate[ch] += gr[o + ch] * ur[o + ch] + gi[o + ch] * ui[o + ch];
            }
        }
        let grad_a2: Vec<f64> = (0..c)
            .map(|ch| {
                let s = cache.gates[b * c + ch];
                grad_gate[ch] * s * (1.0 - s)
            })
            .collect();
        let mut grad_h = vec![0.0; r];
        for ch in 0..c {
            for j in 0..r {
                gw2[ch * r + j] += grad_a2[ch] * cache.hidden[b * r + j];
                grad_h[j] += w2.re()[ch * r + j] * grad_a2[ch];
            }
        }
        for j in 0..r {
            let ga1 = if cache.hidden_pre[b * r + j] > 0.0 {
                grad_h[j]
            } else {
                0.0
            };
            for ch in 0..c {
                gw1[j * c + ch] += ga1 * cache.squeezed[b * c + ch];
                grad_z[b * c + ch] += w1.re()[j * c + ch] * ga1;
            }
        }
    }

    let mut gu = ComplexTensor::zeros(u.shape());
    {
        let n = d.spatial as f64;
        let (xr, xi) = gu.parts_mut();
        for b in 0..d.batch {
            for s in 0..d.spatial {
                let o = (b * d.spatial + s) * c;
                for ch in 0..c {
                    let gate = cache.gates[b * c + ch];
                    let mag = ur[o + ch].hypot(ui[o + ch]).max(MAGNITUDE_EPS);
                    let k = grad_z[b * c + ch] / n / mag;
                    xr[o + ch] = gate * gr[o + ch] + k * ur[o + ch];
                    xi[o + ch] = gate * gi[o + ch] + k * ui[o + ch];
                }
            }
        }
    }
    Ok(SeGrads {
        input: gu,
        w1: ComplexTensor::from_real(&[r, c], gw1)?,
        w2: ComplexTensor::from_real(&[c, r], gw2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_se, random_tensor};
    use rand::Rng as _;

    fn real_matrix(rows: usize, cols: usize, rng: &mut crate::rng::Rng) -> ComplexTensor {
        let v = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        ComplexTensor::from_real(&[rows, cols], v).unwrap()
    }

    #[test]
    fn zero_weights_halve_input() {
        let mut rng = crate::rng::rng(5);
        let u = random_tensor(&[2, 3, 3, 2, 8], &mut rng);
        let (y, cache) = se_block(&u, &ComplexTensor::zeros(&[2, 8]), &ComplexTensor::zeros(&[8, 2])).unwrap();
        assert!(cache.gates.iter().all(|&g| g == 0.5));
        assert!(y.max_abs_diff(&u.map(|z| z * 0.5)) == 0.0);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = crate::rng::rng(6);
        let u = ComplexTensor::zeros(&[1, 2, 2, 2, 4]);
        let (y, cache) = se_block(&u, &real_matrix(1, 4, &mut rng), &real_matrix(4, 1, &mut rng)).unwrap();
        assert!(cache.squeezed.iter().all(|&z| z == 0.0));
        assert!(cache.gates.iter().all(|&g| g == 0.5));
        assert!(y.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = crate::rng::rng(7);
        let u = random_tensor(&[3, 4, 2, 3, 12], &mut rng);
        let w1 = real_matrix(3, 12, &mut rng);
        let w2 = real_matrix(12, 3, &mut rng);
        let (y, _) = se_block(&u, &w1, &w2).unwrap();
        assert!(y.max_abs_diff(&brute_se(&u, &w1, &w2)) < 1e-10);
    }

    #[test]
    fn squeeze_is_magnitude_homogeneous() {
        let mut rng = crate::rng::rng(8);
        let u = random_tensor(&[2, 3, 3, 1, 4], &mut rng);
        let w1 = real_matrix(2, 4, &mut rng);
        let w2 = real_matrix(4, 2, &mut rng);
        let (_, a) = se_block(&u, &w1, &w2).unwrap();
        let (_, b) = se_block(&u.map(|z| z * 3.5), &w1, &w2).unwrap();
        for (za, zb) in a.squeezed.iter().zip(&b.squeezed) {
            assert!((zb - 3.5 * za).abs() < 1e-12);
        }
        assert!(a.gates.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn reduction_must_divide() {
        assert!(matches!(bottleneck_width(48, 5), Err(Error::BadReduction { .. })));
        assert_eq!(bottleneck_width(48, 4).unwrap(), 12);
        assert_eq!(bottleneck_width(16, 4).unwrap(), 4);
    }
}
