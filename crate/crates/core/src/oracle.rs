//! Reference implementations used by tests. These are direct transcriptions
//! of the layer formulas and never share code with the fast kernels.

use num_complex::Complex64;
use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::ComplexTensor;

pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> ComplexTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ComplexTensor::from_parts(shape, re, im).unwrap()
}

/// Six spatial loops plus the channel loops, zero padding, no shortcuts.
pub fn brute_conv3d(x: &ComplexTensor, w: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    let [bn, h, wd, d, ci] = x.shape().try_into().unwrap();
    let [kh, kw, kd, _, co] = w.shape().try_into().unwrap();
    let mut y = ComplexTensor::zeros(&[bn, h, wd, d, co]);
    for n in 0..bn {
        for oh in 0..h {
            for ow in 0..wd {
                for od in 0..d {
                    for c_out in 0..co {
                        let mut acc = b.get(c_out);
                        for i in 0..kh {
                            for j in 0..kw {
                                for k in 0..kd {
                                    let ih = oh as isize + i as isize - (kh / 2) as isize;
                                    let iw = ow as isize + j as isize - (kw / 2) as isize;
                                    let id = od as isize + k as isize - (kd / 2) as isize;
                                    if ih < 0
                                        || iw < 0
                                        || id < 0
                                        || ih >= h as isize
                                        || iw >= wd as isize
                                        || id >= d as isize
                                    {
                                        continue;
                                    }
                                    for c_in in 0..ci {
                                        let xv = x.at(&[n, ih as usize, iw as usize, id as usize, c_in]);
                                        let kv = w.at(&[i, j, k, c_in, c_out]);
                                        // (Xr*Kr - Xi*Ki) + i(Xr*Ki + Xi*Kr)
                                        acc += Complex64::new(
                                            xv.re * kv.re - xv.im * kv.im,
                                            xv.re * kv.im + xv.im * kv.re,
                                        );
                                    }
                                }
                            }
                        }
                        let off = y.offset(&[n, oh, ow, od, c_out]);
                        y.set(off, acc);
                    }
                }
            }
        }
    }
    y
}

/// Central finite difference of `f` along one real coordinate of a buffer.
pub fn central_difference(mut f: impl FnMut() -> f64, mut perturb: impl FnMut(f64), h: f64) -> f64 {
    perturb(h);
    let plus = f();
    perturb(-2.0 * h);
    let minus = f();
    perturb(h);
    (plus - minus) / (2.0 * h)
}

/// Triple-loop complex matrix product plus bias.
pub fn brute_dense(x: &ComplexTensor, w: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    let [n, fin] = x.shape().try_into().unwrap();
    let fout = w.shape()[1];
    let mut y = ComplexTensor::zeros(&[n, fout]);
    for s in 0..n {
        for j in 0..fout {
            let mut acc = b.get(j);
            for i in 0..fin {
                acc += x.at(&[s, i]) * w.at(&[i, j]);
            }
            y.set(s * fout + j, acc);
        }
    }
    y
}

/// Squeeze-and-excitation written directly from its scalar formulas:
/// `z_c = mean |u_c|`, `s = sigmoid(W2 relu(W1 z))`, `y_c = s_c u_c`.
pub fn brute_se(u: &ComplexTensor, w1: &ComplexTensor, w2: &ComplexTensor) -> ComplexTensor {
    let shape = u.shape();
    let c = shape[shape.len() - 1];
    let batch = shape[0];
    let spatial = u.len() / (batch * c);
    let r = w1.shape()[0];
    let mut y = u.clone();
    for b in 0..batch {
        let mut z = vec![0.0; c];
        for (ch, zc) in z.iter_mut().enumerate() {
            let mut sum = 0.0;
            for s in 0..spatial {
                sum += u.get((b * spatial + s) * c + ch).norm();
            }
            *zc = sum / spatial as f64;
        }
        let hidden: Vec<f64> = (0..r)
            .map(|j| {
                let mut a = 0.0;
                for ch in 0..c {
                    a += w1.re()[j * c + ch] * z[ch];
                }
                if a > 0.0 {
                    a
                } else {
                    0.0
                }
            })
            .collect();
        for ch in 0..c {
            let mut a = 0.0;
            for j in 0..r {
                a += w2.re()[ch * r + j] * hidden[j];
            }
            let gate = 1.0 / (1.0 + (-a).exp());
            for s in 0..spatial {
                let i = (b * spatial + s) * c + ch;
                y.set(i, u.get(i) * gate);
            }
        }
    }
    y
}

/// Unstabilized `exp(|z_l|) / sum_j exp(|z_j|)`.
pub fn softmax_reference(logits: &ComplexTensor) -> Vec<f64> {
    let classes = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in 0..logits.shape()[0] {
        let e: Vec<f64> = (0..classes)
            .map(|l| logits.get(row * classes + l).norm().exp())
            .collect();
        let total: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / total));
    }
    out
}

/// Magnitude below which gradients are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    relative_error_floor(a, b, RELATIVE_FLOOR)
}

/// Floor for whole-network checks. A central difference with `h = 1e-6` on a
/// loss of order one carries about `1e-10` of rounding error, so gradients
/// smaller than this floor are compared on an absolute scale.
pub const NETWORK_FLOOR: f64 = 1e-4;

pub fn relative_error_floor(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// OA, AA (predicted-row accuracies) and kappa straight from the textbook
/// definitions, for a confusion matrix indexed `[predicted][reference]`.
pub fn metrics_reference(confusion: &[Vec<u64>]) -> (f64, f64, f64) {
    let n = confusion.len();
    let mut total = 0.0;
    let mut diag = 0.0;
    for (i, row) in confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            total += v as f64;
            if i == j {
                diag += v as f64;
            }
        }
    }
    let p_o = diag / total;
    let mut p_e = 0.0;
    let mut aa = 0.0;
    for c in 0..n {
        let row: f64 = confusion[c].iter().map(|&v| v as f64).sum();
        let col: f64 = confusion.iter().map(|r| r[c] as f64).sum();
        p_e += row * col / (total * total);
        aa += if row > 0.0 { confusion[c][c] as f64 / row } else { 0.0 };
    }
    (p_o, aa / n as f64, (p_o - p_e) / (1.0 - p_e))
}
