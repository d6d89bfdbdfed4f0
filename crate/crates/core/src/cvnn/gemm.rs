//! Complex matrix multiply-accumulate on split real/imaginary planes.
//!
//! `C += op(A) B` with `op(A)` either `A` or `conj(A)^T`. The kernel works on
//! 4x8 output tiles with the inner dimension split into panels that stay in
//! L2. Products are formed as separate multiplies and adds (never fused), so
//! every vector width yields bit-identical results.

/// Row-major complex matrix view.
#[derive(Clone, Copy)]
pub struct Mat<'a> {
    pub re: &'a [f64],
    pub im: &'a [f64],
    /// Row stride in elements.
    pub ld: usize,
}

pub struct MatMut<'a> {
    pub re: &'a mut [f64],
    pub im: &'a mut [f64],
    pub ld: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// `A` is `[m, k]`.
    N,
    /// `A` is `[m, k]` and enters conjugated.
    Conj,
    /// `A` is `[k, m]` and enters conjugated and transposed.
    ConjT,
}

const MR: usize = 4;
const NR: usize = 16;
const KC: usize = 256;

/// `C[m, n] += op(A) B[k, n]`.
pub fn cgemm(op: Op, m: usize, n: usize, k: usize, a: Mat, b: Mat, c: MatMut) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the CPU supports the enabled feature set.
            unsafe { cgemm_avx512(op, m, n, k, a, b, c) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { cgemm_avx2(op, m, n, k, a, b, c) };
            return;
        }
    }
    cgemm_portable(op, m, n, k, a, b, c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn cgemm_avx512(op: Op, m: usize, n: usize, k: usize, a: Mat, b: Mat, c: MatMut) {
    cgemm_portable(op, m, n, k, a, b, c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn cgemm_avx2(op: Op, m: usize, n: usize, k: usize, a: Mat, b: Mat, c: MatMut) {
    cgemm_portable(op, m, n, k, a, b, c)
}

#[inline(always)]
fn cgemm_portable(op: Op, m: usize, n: usize, k: usize, a: Mat, b: Mat, c: MatMut) {
    match op {
        Op::N => blocked::<false, false>(m, n, k, a, b, c),
        Op::Conj => blocked::<false, true>(m, n, k, a, b, c),
        Op::ConjT => blocked::<true, true>(m, n, k, a, b, c),
    }
}

/// Copies rows `i0..i0 + mr` and columns `p0..p0 + kc` of `op(A)` into
/// `[p][row]` order, conjugating when `C` and zeroing rows past `mr`.
#[inline(always)]
fn pack<const T: bool, const C: bool>(
    a: &Mat,
    i0: usize,
    mr: usize,
    p0: usize,
    kc: usize,
    pack_r: &mut [f64],
    pack_i: &mut [f64],
) {
    let (pr, pi) = (&mut pack_r[..kc * MR], &mut pack_i[..kc * MR]);
    if mr < MR {
        pr.fill(0.0);
        pi.fill(0.0);
    }
    let sign = if C { -1.0 } else { 1.0 };
    if T {
        for (q, (dr, di)) in pr.chunks_exact_mut(MR).zip(pi.chunks_exact_mut(MR)).enumerate() {
            let o = (p0 + q) * a.ld + i0;
            dr[..mr].copy_from_slice(&a.re[o..o + mr]);
            for (d, &v) in di[..mr].iter_mut().zip(&a.im[o..o + mr]) {
                *d = sign * v;
            }
        }
    } else {
        for r in 0..mr {
            let o = (i0 + r) * a.ld + p0;
            let (sr, si) = (&a.re[o..o + kc], &a.im[o..o + kc]);
            for ((dr, di), (&vr, &vi)) in pr
                .chunks_exact_mut(MR)
                .zip(pi.chunks_exact_mut(MR))
                .zip(sr.iter().zip(si))
            {
                dr[r] = vr;
                di[r] = sign * vi;
            }
        }
    }
}

#[inline(always)]
fn blocked<const T: bool, const C: bool>(m: usize, n: usize, k: usize, a: Mat, b: Mat, c: MatMut) {
    let MatMut {
        re: cr,
        im: ci,
        ld: ldc,
    } = c;
    // Panel of op(A) laid out [p][row], conjugation applied, short rows zeroed.
    let mut pack_r = vec![0.0; KC * MR];
    let mut pack_i = vec![0.0; KC * MR];
    let mut p0 = 0;
    while p0 < k {
        let kc = KC.min(k - p0);
        let mut i0 = 0;
        while i0 < m {
            let mr = MR.min(m - i0);
            pack::<T, C>(&a, i0, mr, p0, kc, &mut pack_r, &mut pack_i);
            let (pr, pi) = (&pack_r[..kc * MR], &pack_i[..kc * MR]);
            let mut j0 = 0;
            while j0 < n {
                let nr = NR.min(n - j0);
                if nr == NR {
                    tile(pr, pi, &b, cr, ci, ldc, i0, mr, j0, p0);
                } else {
                    edge(pr, pi, &b, cr, ci, ldc, i0, mr, j0, p0, nr);
                }
                j0 += NR;
            }
            i0 += MR;
        }
        p0 += KC;
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile(
    pr: &[f64],
    pi: &[f64],
    b: &Mat,
    cr: &mut [f64],
    ci: &mut [f64],
    ldc: usize,
    i0: usize,
    mr: usize,
    j0: usize,
    p0: usize,
) {
    let mut acc_r = [[0.0f64; NR]; MR];
    let mut acc_i = [[0.0f64; NR]; MR];
    let mut o = p0 * b.ld + j0;
    for (xr, xi) in pr.chunks_exact(MR).zip(pi.chunks_exact(MR)) {
        let br: &[f64; NR] = b.re[o..o + NR].try_into().expect("NR columns");
        let bi: &[f64; NR] = b.im[o..o + NR].try_into().expect("NR columns");
        o += b.ld;
        for r in 0..MR {
            let (x, y) = (xr[r], xi[r]);
            for j in 0..NR {
                acc_r[r][j] = (-y).mul_add(bi[j], x.mul_add(br[j], acc_r[r][j]));
                acc_i[r][j] = y.mul_add(br[j], x.mul_add(bi[j], acc_i[r][j]));
            }
        }
    }
    for r in 0..mr {
        let o = (i0 + r) * ldc + j0;
        let yr: &mut [f64; NR] = (&mut cr[o..o + NR]).try_into().expect("NR columns");
        for j in 0..NR {
            yr[j] += acc_r[r][j];
        }
        let yi: &mut [f64; NR] = (&mut ci[o..o + NR]).try_into().expect("NR columns");
        for j in 0..NR {
            yi[j] += acc_i[r][j];
        }
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn edge(
    pr: &[f64],
    pi: &[f64],
    b: &Mat,
    cr: &mut [f64],
    ci: &mut [f64],
    ldc: usize,
    i0: usize,
    mr: usize,
    j0: usize,
    p0: usize,
    nr: usize,
) {
    let mut acc_r = [[0.0f64; NR]; MR];
    let mut acc_i = [[0.0f64; NR]; MR];
    let mut o = p0 * b.ld + j0;
    for (xr, xi) in pr.chunks_exact(MR).zip(pi.chunks_exact(MR)) {
        let br = &b.re[o..o + nr];
        let bi = &b.im[o..o + nr];
        o += b.ld;
        for r in 0..mr {
            let (x, y) = (xr[r], xi[r]);
            for j in 0..nr {
                acc_r[r][j] = (-y).mul_add(bi[j], x.mul_add(br[j], acc_r[r][j]));
                acc_i[r][j] = y.mul_add(br[j], x.mul_add(bi[j], acc_i[r][j]));
            }
        }
    }
    for r in 0..mr {
        let o = (i0 + r) * ldc + j0;
        for j in 0..nr {
            cr[o + j] += acc_r[r][j];
            ci[o + j] += acc_i[r][j];
        }
    }
}

/// `conj(A)^T` of a row-major `[rows, cols]` matrix, as `[cols, rows]`.
pub fn conj_transpose(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    const B: usize = 32;
    let mut tr = vec![0.0; rows * cols];
    let mut ti = vec![0.0; rows * cols];
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    tr[c * rows + r] = re[r * cols + c];
                    ti[c * rows + r] = -im[r * cols + c];
                }
            }
        }
    }
    (tr, ti)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::random_tensor;
    use num_complex::Complex64;

    fn naive(op: Op, m: usize, n: usize, k: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut c = vec![Complex64::new(0.0, 0.0); m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    let x = match op {
                        Op::N => a[i * k + p],
                        Op::Conj => a[i * k + p].conj(),
                        Op::ConjT => a[p * m + i].conj(),
                    };
                    c[i * n + j] += x * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_on_ragged_shapes() {
        let mut rng = crate::rng::rng(21);
        for &(m, n, k) in &[
            (1, 1, 1),
            (4, 8, 3),
            (5, 9, 300),
            (13, 16, 600),
            (7, 3, 2),
            (33, 17, 257),
        ] {
            for op in [Op::N, Op::Conj, Op::ConjT] {
                let a = random_tensor(&[m * k], &mut rng);
                let b = random_tensor(&[k * n], &mut rng);
                let c0 = random_tensor(&[m * n], &mut rng);
                let mut c = c0.clone();
                let lda = if op == Op::ConjT { m } else { k };
                {
                    let (cr, ci) = c.parts_mut();
                    cgemm(
                        op,
                        m,
                        n,
                        k,
                        Mat {
                            re: a.re(),
                            im: a.im(),
                            ld: lda,
                        },
                        Mat {
                            re: b.re(),
                            im: b.im(),
                            ld: n,
                        },
                        MatMut { re: cr, im: ci, ld: n },
                    );
                }
                let av: Vec<Complex64> = a.iter().collect();
                let bv: Vec<Complex64> = b.iter().collect();
                let want = naive(op, m, n, k, &av, &bv);
                for i in 0..m * n {
                    assert!((c.get(i) - c0.get(i) - want[i]).norm() < 1e-10, "{op:?} {m}x{n}x{k}");
                }
            }
        }
    }

    #[test]
    fn dispatch_matches_portable_bitwise() {
        let mut rng = crate::rng::rng(22);
        let (m, n, k) = (9, 19, 530);
        let a = random_tensor(&[m * k], &mut rng);
        let b = random_tensor(&[k * n], &mut rng);
        let run = |fast: bool| {
            let mut c = crate::tensor::ComplexTensor::zeros(&[m * n]);
            let (cr, ci) = c.parts_mut();
            let args = (
                Mat {
                    re: a.re(),
                    im: a.im(),
                    ld: k,
                },
                Mat {
                    re: b.re(),
                    im: b.im(),
                    ld: n,
                },
                MatMut { re: cr, im: ci, ld: n },
            );
            if fast {
                cgemm(Op::N, m, n, k, args.0, args.1, args.2);
            } else {
                cgemm_portable(Op::N, m, n, k, args.0, args.1, args.2);
            }
            c
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn transpose_conjugates() {
        let (re, im) = conj_transpose(2, 3, &[1., 2., 3., 4., 5., 6.], &[1., 1., 1., 2., 2., 2.]);
        assert_eq!(re, vec![1., 4., 2., 5., 3., 6.]);
        assert_eq!(im, vec![-1., -2., -1., -2., -1., -2.]);
    }
}
