//! Dense complex tensors stored as split real/imaginary planes.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major complex array. Real and imaginary parts live in separate
/// buffers so kernels can stream each plane independently.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got re={} im={}",
                shape,
                n,
                re.len(),
                im.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            re,
            im,
        })
    }

    /// Real-valued tensor with a zero imaginary plane.
    pub fn from_real(shape: &[usize], re: Vec<f64>) -> Result<Self> {
        let n = re.len();
        Self::from_parts(shape, re, vec![0.0; n])
    }

    pub fn from_complex(shape: &[usize], values: &[Complex64]) -> Result<Self> {
        let re = values.iter().map(|z| z.re).collect();
        let im = values.iter().map(|z| z.im).collect();
        Self::from_parts(shape, re, im)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        (self.shape, self.re, self.im)
    }

    pub fn get(&self, flat: usize) -> Complex64 {
        Complex64::new(self.re[flat], self.im[flat])
    }

    pub fn set(&mut self, flat: usize, z: Complex64) {
        self.re[flat] = z.re;
        self.im[flat] = z.im;
    }

    /// Flat offset of a multi-index. Panics on rank or bound violations.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {i} out of bounds for dim {d}");
            off = off * d + i;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> Complex64 {
        self.get(self.offset(index))
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut out = Self::zeros(&self.shape);
        for i in 0..self.len() {
            out.set(i, f(self.get(i)));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i))
    }

    pub fn fill_zero(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
    }

    /// `self += other`, elementwise. Shapes must hold the same number of values.
    pub fn add_assign(&mut self, other: &ComplexTensor) {
        assert_eq!(self.len(), other.len(), "add_assign length");
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &ComplexTensor) -> f64 {
        assert_eq!(self.len(), other.len(), "max_abs_diff length");
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
