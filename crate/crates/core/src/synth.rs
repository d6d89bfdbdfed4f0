//! Synthetic multi-look PolSAR scenes.
//!
//! Each pixel's coherency matrix is the average of `n` outer products `k k^H`
//! of circular complex Gaussian scattering vectors with class covariance
//! `sigma`, so the samples follow a complex Wishart law with mean `sigma`.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::scene::{CoherencyImage, LabelMap, NUM_CHANNELS};

pub type Matrix3 = [[Complex64; 3]; 3];

/// Default number of looks.
pub const DEFAULT_LOOKS: usize = 4;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    sigma: Matrix3,
    looks: usize,
    chol: Matrix3,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Lower-triangular `L` with `L L^H = a`.
fn cholesky(a: &Matrix3) -> Result<Matrix3> {
    let mut l = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            if i == j {
                if !(s.re > 0.0) || !s.re.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i][i] = c(s.re.sqrt());
            } else {
                l[i][j] = s / l[j][j].re;
            }
        }
    }
    Ok(l)
}

impl ClassModel {
    pub fn new(sigma: Matrix3, looks: usize) -> Result<Self> {
        if looks < 3 {
            return Err(Error::InvalidConfig(format!("looks must be >= 3, got {looks}")));
        }
        for i in 0..3 {
            for j in 0..3 {
                if (sigma[i][j] - sigma[j][i].conj()).norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidConfig("sigma is not Hermitian".into()));
                }
            }
        }
        let chol = cholesky(&sigma)?;
        Ok(Self { sigma, looks, chol })
    }

    pub fn diagonal(d: [f64; 3], looks: usize) -> Result<Self> {
        let z = Complex64::new(0.0, 0.0);
        Self::new([[c(d[0]), z, z], [z, c(d[1]), z], [z, z, c(d[2])]], looks)
    }

    pub fn sigma(&self) -> &Matrix3 {
        &self.sigma
    }

    pub fn looks(&self) -> usize {
        self.looks
    }
}

/// Upper-triangle entries in channel order T11, T12, T13, T22, T23, T33.
pub fn upper_triangle(t: &Matrix3) -> [Complex64; NUM_CHANNELS] {
    [t[0][0], t[0][1], t[0][2], t[1][1], t[1][2], t[2][2]]
}

pub fn sample_coherency(model: &ClassModel, seed: u64) -> [Complex64; NUM_CHANNELS] {
    let mut rng = rng::rng(seed);
    let mut t = [[Complex64::new(0.0, 0.0); 3]; 3];
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..model.looks {
        let g: [Complex64; 3] = std::array::from_fn(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(a * scale, b * scale)
        });
        let mut k = [Complex64::new(0.0, 0.0); 3];
        for i in 0..3 {
            for j in 0..=i {
                k[i] += model.chol[i][j] * g[j];
            }
        }
        for i in 0..3 {
            for j in i..3 {
                t[i][j] += k[i] * k[j].conj();
            }
        }
    }
    let n = model.looks as f64;
    let mut out = upper_triangle(&t).map(|z| z / n);
    // Diagonal entries are |k|^2 sums; drop rounding residue in the imaginary part.
    for d in [0, 3, 5] {
        out[d].im = 0.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Stripes,
    Checkerboard,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stripes" => Ok(Layout::Stripes),
            "checkerboard" => Ok(Layout::Checkerboard),
            other => Err(Error::InvalidConfig(format!("unknown layout {other:?}"))),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layout::Stripes => "stripes",
            Layout::Checkerboard => "checkerboard",
        })
    }
}

pub fn tile_side(width: usize) -> usize {
    (width / 8).max(8)
}

/// Ground-truth labels for a layout; every pixel is labeled.
pub fn layout_labels(layout: Layout, classes: usize, height: usize, width: usize) -> Vec<u16> {
    let mut labels = Vec::with_capacity(height * width);
    let side = tile_side(width);
    for r in 0..height {
        for col in 0..width {
            let class = match layout {
                Layout::Stripes => col * classes / width,
                Layout::Checkerboard => (r / side + col / side) % classes,
            };
            labels.push(class as u16 + 1);
        }
    }
    labels
}

/// Samples a scene. Pixel values are rounded to `f32` so the image survives a
/// T3 write/read cycle unchanged.
pub fn generate_scene(
    classes: &[ClassModel],
    layout: Layout,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<(CoherencyImage, LabelMap)> {
    let k = classes.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {k}")));
    }
    if height < k || width < k {
        return Err(Error::SceneTooSmall {
            height,
            width,
            classes: k,
        });
    }
    let labels = layout_labels(layout, k, height, width);
    let scene_seed = rng::derive(seed, stream::SCENE);
    let pixels: Vec<[Complex64; NUM_CHANNELS]> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| {
            sample_coherency(&classes[l as usize - 1], rng::derive(scene_seed, i as u64))
                .map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
        })
        .collect();
    let mut image = CoherencyImage::zeros(height, width);
    for (i, values) in pixels.iter().enumerate() {
        image.set_pixel(i / width, i % width, values);
    }
    let map = LabelMap::new(height, width, k as u16, labels)?;
    Ok((image, map))
}

/// Well-separated diagonal covariances: class `c` puts most of its power in
/// Pauli component `c mod 3`, with the power level stepping up every three
/// classes.
pub fn default_class_models(classes: usize, looks: usize) -> Result<Vec<ClassModel>> {
    (0..classes)
        .map(|c| {
            let level = 1.0 + (c / 3) as f64;
            let mut d = [0.1 * level; 3];
            d[c % 3] = 4.0 * level;
            ClassModel::diagonal(d, looks)
        })
        .collect()
}
