//! Complex 3D convolution with "same" zero padding and stride 1.
//!
//! Layout is channel-last: inputs are `[batch, h, w, d, c_in]`, kernels are
//! `[kh, kw, kd, c_in, c_out]`. Each output is a cross-correlation summed over
//! input channels; with `X = Xr + iXi` and `K = Kr + iKi` the complex product
//! expands to `(Xr*Kr - Xi*Ki) + i(Xr*Ki + Xi*Kr)`.

use rayon::prelude::*;

use super::gemm::{cgemm, conj_transpose, Mat, MatMut, Op};
use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    d: usize,
    ci: usize,
    co: usize,
    kh: usize,
    kw: usize,
    kd: usize,
}

impl Geometry {
    fn new(x: &ComplexTensor, weight: &ComplexTensor) -> Result<(usize, Self)> {
        let xs = x.shape();
        let ws = weight.shape();
        if xs.len() != 5 || ws.len() != 5 {
            return Err(Error::Shape(format!(
                "conv3d expects rank-5 input and kernel, got {xs:?} and {ws:?}"
            )));
        }
        if xs[4] != ws[3] {
            return Err(Error::Shape(format!(
                "conv3d channel mismatch: input has {} channels, kernel expects {}",
                xs[4], ws[3]
            )));
        }
        if ws[..3].iter().any(|k| k % 2 == 0) {
            return Err(Error::Shape(format!("conv3d kernel {ws:?} must be odd")));
        }
        if xs[1..4].contains(&0) {
            return Err(Error::Shape(format!("conv3d input {xs:?} has an empty axis")));
        }
        Ok((
            xs[0],
            Self {
                h: xs[1],
                w: xs[2],
                d: xs[3],
                ci: xs[4],
                co: ws[4],
                kh: ws[0],
                kw: ws[1],
                kd: ws[2],
            },
        ))
    }

    fn in_len(&self) -> usize {
        self.h * self.w * self.d * self.ci
    }

    fn out_len(&self) -> usize {
        self.h * self.w * self.d * self.co
    }
}

fn check_bias(bias: &ComplexTensor, co: usize) -> Result<()> {
    if bias.len() != co {
        return Err(Error::Shape(format!(
            "conv3d bias has {} entries for {co} output channels",
            bias.len()
        )));
    }
    Ok(())
}

impl Geometry {
    /// Columns of the unrolled kernel: `kh * kw * kd * c_in`.
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.kd * self.ci
    }

    fn patch_buffer(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.h * self.w * self.d * self.patch_len();
        (vec![0.0; n], vec![0.0; n])
    }

    /// Visits, for every output position, each run of kernel taps along the
    /// depth axis that lands inside the volume. The callback gets the patch
    /// matrix offset, the input offset and the run length in elements; both
    /// sides are contiguous over the run.
    #[inline(always)]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ph, pw, pd) = (self.kh / 2, self.kw / 2, self.kd / 2);
        let k = self.patch_len();
        for oh in 0..self.h {
            for ow in 0..self.w {
                for od in 0..self.d {
                    let row = ((oh * self.w + ow) * self.d + od) * k;
                    let td_lo = pd.saturating_sub(od);
                    let td_hi = self.kd.min(self.d + pd - od);
                    let len = (td_hi - td_lo) * self.ci;
                    let id = od + td_lo - pd;
                    for th in 0..self.kh {
                        let Some(ih) = (oh + th).checked_sub(ph).filter(|&v| v < self.h) else {
                            continue;
                        };
                        for tw in 0..self.kw {
                            let Some(iw) = (ow + tw).checked_sub(pw).filter(|&v| v < self.w) else {
                                continue;
                            };
                            let src = ((ih * self.w + iw) * self.d + id) * self.ci;
                            let dst = row + ((th * self.kw + tw) * self.kd + td_lo) * self.ci;
                            f(dst, src, len);
                        }
                    }
                }
            }
        }
    }

    /// Unrolls one sample into a `[positions, patch_len]` matrix. Taps in the
    /// padding are never written, so a buffer from [`Self::patch_buffer`]
    /// can be refilled for every sample of the same geometry.
    fn im2col(&self, xr: &[f64], xi: &[f64], pr: &mut [f64], pi: &mut [f64]) {
        self.for_each_run(|dst, src, len| {
            pr[dst..dst + len].copy_from_slice(&xr[src..src + len]);
            pi[dst..dst + len].copy_from_slice(&xi[src..src + len]);
        });
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds patch rows back onto the input.
    fn col2im(&self, pr: &[f64], pi: &[f64], xr: &mut [f64], xi: &mut [f64]) {
        self.for_each_run(|dst, src, len| {
            for (a, v) in xr[src..src + len].iter_mut().zip(&pr[dst..dst + len]) {
                *a += v;
            }
            for (a, v) in xi[src..src + len].iter_mut().zip(&pi[dst..dst + len]) {
                *a += v;
            }
        });
    }
}

pub fn conv3d(x: &ComplexTensor, weight: &ComplexTensor, bias: &ComplexTensor) -> Result<ComplexTensor> {
    let (batch, g) = Geometry::new(x, weight)?;
    check_bias(bias, g.co)?;
    let mut out = ComplexTensor::zeros(&[batch, g.h, g.w, g.d, g.co]);
    let (br, bi) = (bias.re(), bias.im());
    let (ilen, olen, co, k) = (g.in_len(), g.out_len(), g.co, g.patch_len());
    let positions = olen / co;
    let (yr, yi) = out.parts_mut();
    yr.par_chunks_mut(olen)
        .zip(yi.par_chunks_mut(olen))
        .enumerate()
        .for_each_init(
            || g.patch_buffer(),
            |(pr, pi), (b, (yr, yi))| {
                g.im2col(
                    &x.re()[b * ilen..(b + 1) * ilen],
                    &x.im()[b * ilen..(b + 1) * ilen],
                    pr,
                    pi,
                );
                for o in (0..olen).step_by(co) {
                    yr[o..o + co].copy_from_slice(br);
                    yi[o..o + co].copy_from_slice(bi);
                }
                cgemm(
                    Op::N,
                    positions,
                    co,
                    k,
                    Mat { re: pr, im: pi, ld: k },
                    Mat {
                        re: weight.re(),
                        im: weight.im(),
                        ld: co,
                    },
                    MatMut { re: yr, im: yi, ld: co },
                );
            },
        );
    Ok(out)
}

pub struct ConvGrads {
    pub input: Option<ComplexTensor>,
    pub weight: ComplexTensor,
    pub bias: ComplexTensor,
}

/// Gradients of a real loss with respect to the real and imaginary parts of
/// input, kernel and bias, given `grad_out` in the same split convention.
/// In complex notation: `dX = conj(K) * G` (transposed correlation),
/// `dK = sum conj(X) G`, `db = sum G`.
pub fn conv3d_backward(
    x: &ComplexTensor,
    weight: &ComplexTensor,
    grad_out: &ComplexTensor,
    need_input: bool,
) -> Result<ConvGrads> {
    let (batch, g) = Geometry::new(x, weight)?;
    if grad_out.shape() != [batch, g.h, g.w, g.d, g.co] {
        return Err(Error::Shape(format!(
            "conv3d gradient shape {:?} does not match output",
            grad_out.shape()
        )));
    }
    let (ilen, olen, co, k) = (g.in_len(), g.out_len(), g.co, g.patch_len());
    let positions = olen / co;
    let wh = need_input.then(|| conj_transpose(k, co, weight.re(), weight.im()));

    let per_sample: Vec<(Option<(Vec<f64>, Vec<f64>)>, Vec<f64>, Vec<f64>)> = (0..batch)
        .into_par_iter()
        .map_init(
            || (g.patch_buffer(), need_input.then(|| g.patch_buffer())),
            |((pr, pi), dp), b| {
                g.im2col(
                    &x.re()[b * ilen..(b + 1) * ilen],
                    &x.im()[b * ilen..(b + 1) * ilen],
                    pr,
                    pi,
                );
                let gr = &grad_out.re()[b * olen..(b + 1) * olen];
                let gi = &grad_out.im()[b * olen..(b + 1) * olen];
                let gmat = Mat { re: gr, im: gi, ld: co };
                // conj(dK)^T = conj(G)^T P keeps the long patch rows contiguous.
                let mut tr = vec![0.0; weight.len()];
                let mut ti = vec![0.0; weight.len()];
                cgemm(
                    Op::ConjT,
                    co,
                    k,
                    positions,
                    gmat,
                    Mat { re: pr, im: pi, ld: k },
                    MatMut {
                        re: &mut tr,
                        im: &mut ti,
                        ld: k,
                    },
                );
                let (gwr, gwi) = conj_transpose(co, k, &tr, &ti);
                let gx = wh.as_ref().zip(dp.as_mut()).map(|((whr, whi), (dpr, dpi))| {
                    dpr.fill(0.0);
                    dpi.fill(0.0);
                    cgemm(
                        Op::N,
                        positions,
                        k,
                        co,
                        gmat,
                        Mat {
                            re: whr,
                            im: whi,
                            ld: k,
                        },
                        MatMut {
                            re: dpr,
                            im: dpi,
                            ld: k,
                        },
                    );
                    let mut gxr = vec![0.0; ilen];
                    let mut gxi = vec![0.0; ilen];
                    g.col2im(dpr, dpi, &mut gxr, &mut gxi);
                    (gxr, gxi)
                });
                (gx, gwr, gwi)
            },
        )
        .collect();

    let mut gw = ComplexTensor::zeros(weight.shape());
    let mut gb = ComplexTensor::zeros(&[co]);
    let mut gx = need_input.then(|| ComplexTensor::zeros(x.shape()));
    for (b, (sx, swr, swi)) in per_sample.into_iter().enumerate() {
        {
            let (r, i) = gw.parts_mut();
            r.iter_mut().zip(&swr).for_each(|(a, v)| *a += v);
            i.iter_mut().zip(&swi).for_each(|(a, v)| *a += v);
        }
        if let (Some(gx), Some((sxr, sxi))) = (gx.as_mut(), sx) {
            let (r, i) = gx.parts_mut();
            r[b * ilen..(b + 1) * ilen].copy_from_slice(&sxr);
            i[b * ilen..(b + 1) * ilen].copy_from_slice(&sxi);
        }
        let gr = &grad_out.re()[b * olen..(b + 1) * olen];
        let gi = &grad_out.im()[b * olen..(b + 1) * olen];
        let (br, bi) = gb.parts_mut();
        for o in (0..olen).step_by(co) {
            for j in 0..co {
                br[j] += gr[o + j];
                bi[j] += gi[o + j];
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}
