//! PNG rendering of Pauli composites and class maps.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scene::{Channel, CoherencyImage, LabelMap};

pub type Color = [u8; 3];

/// Nearest-rank percentile (`sorted[ceil(p*n) - 1]`) of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn scale_channel(values: &[f64]) -> Vec<u8> {
    let p99 = percentile(values, 0.99);
    values
        .iter()
        .map(|&v| {
            if p99 > 0.0 {
                (255.0 * v / p99).clamp(0.0, 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Pauli composite: R = T22 (double bounce), G = T33 (volume), B = T11
/// (surface), each scaled to its own 99th percentile.
pub fn pauli_rgb(image: &CoherencyImage) -> RgbImage {
    let r = scale_channel(image.re(Channel::T22));
    let g = scale_channel(image.re(Channel::T33));
    let b = scale_channel(image.re(Channel::T11));
    let w = image.width();
    RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([r[i], g[i], b[i]])
    })
}

pub fn render_pauli_rgb(image: &CoherencyImage, path: impl AsRef<Path>) -> Result<()> {
    save_png(&pauli_rgb(image), path.as_ref())
}

pub fn class_map_rgb(map: &LabelMap, palette: &[Color]) -> Result<RgbImage> {
    let needed = map.num_classes() as usize + 1;
    if palette.len() < needed {
        return Err(Error::PaletteMismatch {
            palette: palette.len(),
            needed,
        });
    }
    Ok(RgbImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Rgb(palette[map.get(y as usize, x as usize) as usize])
    }))
}

pub fn render_class_map(map: &LabelMap, palette: &[Color], path: impl AsRef<Path>) -> Result<()> {
    save_png(&class_map_rgb(map, palette)?, path.as_ref())
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::other(other)),
        })
}

const BASE_PALETTE: [Color; 16] = [
    [0, 0, 0],
    [255, 0, 0],
    [0, 160, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [128, 0, 255],
    [128, 64, 0],
    [0, 128, 128],
    [255, 160, 200],
    [128, 128, 128],
    [160, 255, 120],
    [0, 64, 128],
    [255, 255, 255],
];

/// Black for unlabeled pixels followed by one distinct color per class.
pub fn default_palette(num_classes: u16) -> Vec<Color> {
    let n = num_classes as usize + 1;
    let mut palette: Vec<Color> = BASE_PALETTE.iter().copied().take(n).collect();
    let mut k = 0u64;
    while palette.len() < n {
        let h = crate::rng::splitmix64(k);
        let c = [(h >> 16) as u8, (h >> 32) as u8, (h >> 48) as u8];
        if !palette.contains(&c) {
            palette.push(c);
        }
        k += 1;
    }
    palette
}
