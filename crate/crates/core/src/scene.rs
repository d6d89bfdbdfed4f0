//! In-memory scene types: coherency images and label maps.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Upper-triangle coherency channels in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    T11,
    T12,
    T13,
    T22,
    T23,
    T33,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::T11,
        Channel::T12,
        Channel::T13,
        Channel::T22,
        Channel::T23,
        Channel::T33,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, Channel::T11 | Channel::T22 | Channel::T33)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::T11 => "T11",
            Channel::T12 => "T12",
            Channel::T13 => "T13",
            Channel::T22 => "T22",
            Channel::T23 => "T23",
            Channel::T33 => "T33",
        }
    }
}

pub const NUM_CHANNELS: usize = 6;

/// Relative slack for the Cauchy-Schwarz checks on off-diagonal channels.
pub const PSD_TOLERANCE: f64 = 1e-4;

/// H x W grid of the six upper-triangle entries of a 3x3 Hermitian coherency
/// matrix. Each channel is a row-major plane of complex values.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherencyImage {
    height: usize,
    width: usize,
    re: [Vec<f64>; NUM_CHANNELS],
    im: [Vec<f64>; NUM_CHANNELS],
}

impl CoherencyImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            re: std::array::from_fn(|_| vec![0.0; n]),
            im: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn from_planes(
        height: usize,
        width: usize,
        re: [Vec<f64>; NUM_CHANNELS],
        im: [Vec<f64>; NUM_CHANNELS],
    ) -> Result<Self> {
        let n = height * width;
        if re.iter().chain(im.iter()).any(|p| p.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "every plane must hold {height}x{width} values"
            )));
        }
        Ok(Self { height, width, re, im })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn re(&self, ch: Channel) -> &[f64] {
        &self.re[ch.index()]
    }

    pub fn im(&self, ch: Channel) -> &[f64] {
        &self.im[ch.index()]
    }

    pub fn re_mut(&mut self, ch: Channel) -> &mut [f64] {
        &mut self.re[ch.index()]
    }

    pub fn im_mut(&mut self, ch: Channel) -> &mut [f64] {
        &mut self.im[ch.index()]
    }

    pub fn get(&self, ch: Channel, row: usize, col: usize) -> Complex64 {
        let i = row * self.width + col;
        Complex64::new(self.re[ch.index()][i], self.im[ch.index()][i])
    }

    pub fn set(&mut self, ch: Channel, row: usize, col: usize, z: Complex64) {
        let i = row * self.width + col;
        self.re[ch.index()][i] = z.re;
        self.im[ch.index()][i] = z.im;
    }

    /// Writes the six channels of one pixel in storage order.
    pub fn set_pixel(&mut self, row: usize, col: usize, values: &[Complex64; NUM_CHANNELS]) {
        for ch in Channel::ALL {
            self.set(ch, row, col, values[ch.index()]);
        }
    }

    /// Checks the Hermitian positive-semidefinite structure at every pixel:
    /// real non-negative diagonals and Cauchy-Schwarz on the off-diagonals.
    pub fn validate(&self) -> Result<()> {
        let max_diag = [Channel::T11, Channel::T22, Channel::T33]
            .iter()
            .flat_map(|&c| self.re(c).iter().copied())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let slack = 1e-12 * max_diag * max_diag;
        for ch in [Channel::T11, Channel::T22, Channel::T33] {
            if let Some(i) = self.im(ch).iter().position(|&v| v != 0.0) {
                return Err(Error::InvalidCoherency(format!(
                    "imaginary part of {} is nonzero at pixel {i}",
                    ch.name()
                )));
            }
            if let Some(i) = self.re(ch).iter().position(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidCoherency(format!(
                    "{} is negative or non-finite at pixel {i}",
                    ch.name()
                )));
            }
        }
        let pairs = [
            (Channel::T12, Channel::T11, Channel::T22),
            (Channel::T13, Channel::T11, Channel::T33),
            (Channel::T23, Channel::T22, Channel::T33),
        ];
        for (off, a, b) in pairs {
            for i in 0..self.pixels() {
                let (re, im) = (self.re(off)[i], self.im(off)[i]);
                let mag2 = re * re + im * im;
                let bound = self.re(a)[i] * self.re(b)[i];
                if !mag2.is_finite() || mag2 > bound * (1.0 + PSD_TOLERANCE) + slack {
                    return Err(Error::InvalidCoherency(format!(
                        "|{}|^2 = {mag2} exceeds {}*{} = {bound} at pixel {i}",
                        off.name(),
                        a.name(),
                        b.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Row-major grid of class labels. 0 marks an unlabeled pixel; classes are
/// `1..=num_classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: u16,
    labels: Vec<u16>,
}

pub const UNLABELED: u16 = 0;

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: u16, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l > num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, num_classes: u16, label: u16) -> Result<Self> {
        Self::new(height, width, num_classes, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Sets one label. Panics if `label > num_classes`.
    pub fn set(&mut self, row: usize, col: usize, label: u16) {
        assert!(label <= self.num_classes, "label {label} out of range");
        self.labels[row * self.width + col] = label;
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    /// Labeled pixel count per class, index 0 holding the unlabeled count.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_psd_pixel() {
        let mut img = CoherencyImage::zeros(1, 1);
        img.set_pixel(
            0,
            0,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.5),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.1, -0.1),
                Complex64::new(1.0, 0.0),
            ],
        );
        img.validate().unwrap();
    }

    #[test]
    fn validate_rejects_cauchy_schwarz_violation() {
        let mut img = CoherencyImage::zeros(1, 1);
        img.set(Channel::T11, 0, 0, Complex64::new(1.0, 0.0));
        img.set(Channel::T22, 0, 0, Complex64::new(1.0, 0.0));
        img.set(Channel::T12, 0, 0, Complex64::new(1.1, 0.0));
        assert!(matches!(img.validate(), Err(Error::InvalidCoherency(_))));
    }

    #[test]
    fn validate_rejects_imaginary_diagonal() {
        let mut img = CoherencyImage::zeros(1, 1);
        img.set(Channel::T33, 0, 0, Complex64::new(1.0, 1e-3));
        assert!(img.validate().is_err());
    }

    #[test]
    fn label_map_range_check() {
        assert!(matches!(
            LabelMap::new(1, 3, 2, vec![0, 1, 7]),
            Err(Error::LabelOutOfRange { label: 7, .. })
        ));
        let m = LabelMap::new(1, 3, 2, vec![0, 1, 2]).unwrap();
        assert_eq!(m.class_counts(), vec![1, 1, 1]);
    }
}
