//! PolSARpro-style T3 directories: `config.txt` plus one little-endian f32
//! plane per real component.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::scene::{Channel, CoherencyImage, NUM_CHANNELS};

/// Diagonal values more negative than this fraction of the largest diagonal
/// magnitude are rejected; anything in between is clamped to zero.
const NEGATIVE_DIAGONAL_TOLERANCE: f64 = 1e-6;

enum Plane {
    Re(Channel),
    Im(Channel),
}

const FILES: [(&str, Plane); 9] = [
    ("T11.bin", Plane::Re(Channel::T11)),
    ("T12_real.bin", Plane::Re(Channel::T12)),
    ("T12_imag.bin", Plane::Im(Channel::T12)),
    ("T13_real.bin", Plane::Re(Channel::T13)),
    ("T13_imag.bin", Plane::Im(Channel::T13)),
    ("T22.bin", Plane::Re(Channel::T22)),
    ("T23_real.bin", Plane::Re(Channel::T23)),
    ("T23_imag.bin", Plane::Im(Channel::T23)),
    ("T33.bin", Plane::Re(Channel::T33)),
];

/// Files of a T3 directory, `config.txt` first.
pub fn file_names() -> impl Iterator<Item = &'static str> {
    std::iter::once("config.txt").chain(FILES.iter().map(|(n, _)| *n))
}

/// Parses `Nrow`/`Ncol` from a PolSARpro `config.txt`. The value may sit on
/// the same line (`Nrow 750`, `Nrow = 750`) or on the next non-empty line.
pub fn parse_config(text: &str) -> Result<(usize, usize)> {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let mut rows = None;
    let mut cols = None;
    for (i, line) in lines.iter().enumerate() {
        let mut parts = line.splitn(2, |c: char| c.is_whitespace() || c == '=' || c == ':');
        let key = parts.next().unwrap_or("");
        let slot = match key {
            "Nrow" => &mut rows,
            "Ncol" => &mut cols,
            _ => continue,
        };
        let inline = parts
            .next()
            .map(|rest| rest.trim_matches(|c: char| c.is_whitespace() || c == '=' || c == ':'))
            .filter(|rest| !rest.is_empty());
        let value = match inline {
            Some(v) => v,
            None => lines[i + 1..]
                .iter()
                .find(|l| !l.is_empty())
                .copied()
                .ok_or_else(|| Error::BadHeader(format!("{key} has no value")))?,
        };
        let n: usize = value
            .parse()
            .map_err(|_| Error::BadHeader(format!("{key} value {value:?} is not a count")))?;
        *slot = Some(n);
    }
    match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => Ok((r, c)),
        (Some(_), Some(_)) => Err(Error::BadHeader("zero-sized image".into())),
        _ => Err(Error::BadHeader("config.txt lacks Nrow/Ncol".into())),
    }
}

fn read_plane(path: &Path, n: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * n {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            4 * n
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| LittleEndian::read_f32(c) as f64)
        .collect())
}

pub fn read_t3_directory(dir: impl AsRef<Path>) -> Result<CoherencyImage> {
    let dir = dir.as_ref();
    for name in file_names() {
        if !dir.join(name).is_file() {
            return Err(Error::IncompleteT3(name.to_string()));
        }
    }
    let config_path = dir.join("config.txt");
    let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let (height, width) = parse_config(&text)?;
    let n = height * width;

    let mut re: [Vec<f64>; NUM_CHANNELS] = std::array::from_fn(|_| vec![0.0; n]);
    let mut im: [Vec<f64>; NUM_CHANNELS] = std::array::from_fn(|_| vec![0.0; n]);
    for (name, plane) in &FILES {
        let values = read_plane(&dir.join(name), n)?;
        match plane {
            Plane::Re(ch) => re[ch.index()] = values,
            Plane::Im(ch) => im[ch.index()] = values,
        }
    }

    let max_diag = [Channel::T11, Channel::T22, Channel::T33]
        .iter()
        .flat_map(|c| re[c.index()].iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    for ch in [Channel::T11, Channel::T22, Channel::T33] {
        for (i, v) in re[ch.index()].iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEGATIVE_DIAGONAL_TOLERANCE * max_diag {
                    return Err(Error::InvalidCoherency(format!("{} = {} at pixel {i}", ch.name(), v)));
                }
                *v = 0.0;
            }
        }
    }

    let image = CoherencyImage::from_planes(height, width, re, im)?;
    image.validate()?;
    Ok(image)
}

fn write_plane(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = vec![0u8; 4 * values.len()];
    for (chunk, &v) in bytes.chunks_exact_mut(4).zip(values) {
        LittleEndian::write_f32(chunk, v as f32);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn config_text(height: usize, width: usize) -> String {
    format!("Nrow\n{height}\n---------\nNcol\n{width}\n---------\nPolarCase\nmonostatic\n---------\nPolarType\nfull\n")
}

/// Writes `image` as a T3 directory, creating `dir` if needed. The image is
/// validated before anything touches the filesystem.
pub fn write_t3_directory(image: &CoherencyImage, dir: impl AsRef<Path>) -> Result<()> {
    image.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join("config.txt");
    fs::write(&config_path, config_text(image.height(), image.width())).map_err(|e| Error::io(&config_path, e))?;
    for (name, plane) in &FILES {
        let values = match plane {
            Plane::Re(ch) => image.re(*ch),
            Plane::Im(ch) => image.im(*ch),
        };
        write_plane(&dir.join(name), values)?;
    }
    Ok(())
}
