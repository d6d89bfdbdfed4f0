//! Complex fully connected layer `y = xW + b`.
//!
//! `x` is `[batch, fan_in]`, `W` is `[fan_in, fan_out]`.

use super::gemm::{cgemm, Mat, MatMut, Op};
use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

fn dims(x: &ComplexTensor, weight: &ComplexTensor) -> Result<(usize, usize, usize)> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
        return Err(Error::Shape(format!(
            "dense expects [B, F] x [F, F'], got {xs:?} and {ws:?}"
        )));
    }
    Ok((xs[0], ws[0], ws[1]))
}

fn view(t: &ComplexTensor, ld: usize) -> Mat<'_> {
    Mat {
        re: t.re(),
        im: t.im(),
        ld,
    }
}

pub fn dense(x: &ComplexTensor, weight: &ComplexTensor, bias: &ComplexTensor) -> Result<ComplexTensor> {
    let (batch, fin, fout) = dims(x, weight)?;
    if bias.len() != fout {
        return Err(Error::Shape(format!(
            "dense bias has {} entries for {fout} outputs",
            bias.len()
        )));
    }
    let mut out = ComplexTensor::zeros(&[batch, fout]);
    let (yr, yi) = out.parts_mut();
    for s in 0..batch {
        yr[s * fout..(s + 1) * fout].copy_from_slice(bias.re());
        yi[s * fout..(s + 1) * fout].copy_from_slice(bias.im());
    }
    cgemm(
        Op::N,
        batch,
        fout,
        fin,
        view(x, fin),
        view(weight, fout),
        MatMut {
            re: yr,
            im: yi,
            ld: fout,
        },
    );
    Ok(out)
}

pub struct DenseGrads {
    pub input: Option<ComplexTensor>,
    pub weight: ComplexTensor,
    pub bias: ComplexTensor,
}

/// `dX = G conj(W)^T`, `dW = conj(X)^T G`, `db = sum_b G`, each accumulated
/// over samples in ascending batch order.
pub fn dense_backward(
    x: &ComplexTensor,
    weight: &ComplexTensor,
    grad_out: &ComplexTensor,
    need_input: bool,
) -> Result<DenseGrads> {
    let (batch, fin, fout) = dims(x, weight)?;
    if grad_out.shape() != [batch, fout] {
        return Err(Error::Shape(format!(
            "dense gradient shape {:?} does not match [{batch}, {fout}]",
            grad_out.shape()
        )));
    }
    let (gr, gi) = (grad_out.re(), grad_out.im());

    // dX^T = conj(W) G^T, formed in a [fin, batch] buffer.
    let input = need_input.then(|| {
        let mut gtr = vec![0.0; fout * batch];
        let mut gti = vec![0.0; fout * batch];
        for s in 0..batch {
            for j in 0..fout {
                gtr[j * batch + s] = gr[s * fout + j];
                gti[j * batch + s] = gi[s * fout + j];
            }
        }
        let mut tr = vec![0.0; fin * batch];
        let mut ti = vec![0.0; fin * batch];
        cgemm(
            Op::Conj,
            fin,
            batch,
            fout,
            view(weight, fout),
            Mat {
                re: &gtr,
                im: &gti,
                ld: batch,
            },
            MatMut {
                re: &mut tr,
                im: &mut ti,
                ld: batch,
            },
        );
        let mut gx = ComplexTensor::zeros(&[batch, fin]);
        let (xr, xi) = gx.parts_mut();
        for i in 0..fin {
            for s in 0..batch {
                xr[s * fin + i] = tr[i * batch + s];
                xi[s * fin + i] = ti[i * batch + s];
            }
        }
        gx
    });

    let mut gw = ComplexTensor::zeros(&[fin, fout]);
    {
        let (dr, di) = gw.parts_mut();
        cgemm(
            Op::ConjT,
            fin,
            fout,
            batch,
            view(x, fin),
            view(grad_out, fout),
            MatMut {
                re: dr,
                im: di,
                ld: fout,
            },
        );
    }

    let mut gb = ComplexTensor::zeros(&[fout]);
    {
        let (br, bi) = gb.parts_mut();
        for s in 0..batch {
            for j in 0..fout {
                br[j] += gr[s * fout + j];
                bi[j] += gi[s * fout + j];
            }
        }
    }
    Ok(DenseGrads {
        input,
        weight: gw,
        bias: gb,
    })
}
