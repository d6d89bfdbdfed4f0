//! Channel normalization, mirror-padded patch extraction and stratified
//! train/test splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::scene::{Channel, CoherencyImage, LabelMap, NUM_CHANNELS};
use crate::tensor::ComplexTensor;

/// Planes whose standard deviation falls below this are zeroed.
pub const DEGENERATE_STD: f64 = 1e-12;

fn standardize(plane: &mut [f64]) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        plane.fill(0.0);
    } else {
        plane.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Standardizes every real plane (the real and imaginary parts of each
/// channel independently) to zero mean and unit population standard
/// deviation.
pub fn normalize_channels(image: &CoherencyImage) -> CoherencyImage {
    let mut out = image.clone();
    for ch in Channel::ALL {
        standardize(out.re_mut(ch));
        standardize(out.im_mut(ch));
    }
    out
}

/// Reflects an index into `0..n` without repeating the edge sample:
/// `-d` maps to `d` and `n - 1 + d` maps to `n - 1 - d`.
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// A labeled training or test sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// `[window, window, 6]` complex block.
    pub data: ComplexTensor,
    pub center_row: usize,
    pub center_col: usize,
    pub label: u16,
}

pub fn check_window(window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    Ok(())
}

/// Copies the `window x window x 6` neighborhood centered at `(row, col)`
/// into `re`/`im`, mirror-padding outside the image.
fn fill_patch(image: &CoherencyImage, row: usize, col: usize, window: usize, re: &mut [f64], im: &mut [f64]) {
    let half = (window / 2) as isize;
    let (h, w) = (image.height(), image.width());
    let planes_re: [&[f64]; NUM_CHANNELS] = Channel::ALL.map(|c| image.re(c));
    let planes_im: [&[f64]; NUM_CHANNELS] = Channel::ALL.map(|c| image.im(c));
    for pr in 0..window {
        let r = reflect(row as isize + pr as isize - half, h);
        for pc in 0..window {
            let c = reflect(col as isize + pc as isize - half, w);
            let src = r * w + c;
            let dst = (pr * window + pc) * NUM_CHANNELS;
            for ch in 0..NUM_CHANNELS {
                re[dst + ch] = planes_re[ch][src];
                im[dst + ch] = planes_im[ch][src];
            }
        }
    }
}

pub fn extract_patch(image: &CoherencyImage, row: usize, col: usize, window: usize) -> Result<ComplexTensor> {
    check_window(window)?;
    if row >= image.height() || col >= image.width() {
        return Err(Error::CenterOutOfBounds {
            row,
            col,
            height: image.height(),
            width: image.width(),
        });
    }
    let mut t = ComplexTensor::zeros(&[window, window, NUM_CHANNELS]);
    let (re, im) = t.parts_mut();
    fill_patch(image, row, col, window, re, im);
    Ok(t)
}

/// Stacks patches centered at `pixels` into a network input of shape
/// `[n, window, window, 6, 1]`.
pub fn patch_batch(image: &CoherencyImage, pixels: &[(usize, usize)], window: usize) -> Result<ComplexTensor> {
    check_window(window)?;
    let per = window * window * NUM_CHANNELS;
    let mut t = ComplexTensor::zeros(&[pixels.len(), window, window, NUM_CHANNELS, 1]);
    let (re, im) = t.parts_mut();
    for (i, &(r, c)) in pixels.iter().enumerate() {
        if r >= image.height() || c >= image.width() {
            return Err(Error::CenterOutOfBounds {
                row: r,
                col: c,
                height: image.height(),
                width: image.width(),
            });
        }
        fill_patch(
            image,
            r,
            c,
            window,
            &mut re[i * per..(i + 1) * per],
            &mut im[i * per..(i + 1) * per],
        );
    }
    Ok(t)
}

/// Stacks `[w, w, 6]` patches into a `[n, w, w, 6, 1]` network input.
pub fn stack_patches<'a>(patches: impl ExactSizeIterator<Item = &'a Patch>) -> Result<ComplexTensor> {
    let n = patches.len();
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut shape: Option<Vec<usize>> = None;
    for p in patches {
        match &shape {
            None => shape = Some(p.data.shape().to_vec()),
            Some(s) if s.as_slice() != p.data.shape() => {
                return Err(Error::Shape(format!("patch {:?} in a batch of {s:?}", p.data.shape())))
            }
            _ => {}
        }
        re.extend_from_slice(p.data.re());
        im.extend_from_slice(p.data.im());
    }
    let mut full = vec![n];
    full.extend(shape.unwrap_or_else(|| vec![0, 0, 0]));
    full.push(1);
    ComplexTensor::from_parts(&full, re, im)
}

/// Per-class train/test pixel lists. Index `c - 1` holds class `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub ratio_bits: u64,
    pub seed: u64,
    pub train: Vec<Vec<(usize, usize)>>,
    pub test: Vec<Vec<(usize, usize)>>,
}

impl SplitSpec {
    pub fn ratio(&self) -> f64 {
        f64::from_bits(self.ratio_bits)
    }

    pub fn train_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    /// Test pixels in ascending class order, ascending (row, col) within.
    pub fn test_pixels(&self) -> Vec<(usize, usize)> {
        self.test.iter().flatten().copied().collect()
    }
}

/// Training-set size for a class: `max(1, round(ratio * count))`.
pub fn train_size(count: usize, ratio: f64) -> usize {
    ((ratio * count as f64).round() as usize).max(1)
}

/// Draws `train_size(count, ratio)` pixels per class uniformly at random; the
/// rest of the labeled pixels become the test set.
pub fn stratified_split(map: &LabelMap, ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let k = map.num_classes() as usize;
    let mut per_class: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for r in 0..map.height() {
        for c in 0..map.width() {
            let l = map.get(r, c);
            if l != 0 {
                per_class[l as usize - 1].push((r, c));
            }
        }
    }
    let split_seed = rng::derive(seed, stream::SPLIT);
    let mut train = Vec::with_capacity(k);
    let mut test = Vec::with_capacity(k);
    for (i, pixels) in per_class.into_iter().enumerate() {
        if pixels.is_empty() {
            return Err(Error::EmptyClass(i as u16 + 1));
        }
        let n_train = train_size(pixels.len(), ratio);
        let mut shuffled = pixels;
        shuffled.shuffle(&mut rng::rng(rng::derive(split_seed, i as u64 + 1)));
        let mut tr = shuffled[..n_train].to_vec();
        let mut te = shuffled[n_train..].to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        test.push(te);
    }
    Ok(SplitSpec {
        ratio_bits: ratio.to_bits(),
        seed,
        train,
        test,
    })
}

fn patches_for(
    image: &CoherencyImage,
    map: &LabelMap,
    lists: &[Vec<(usize, usize)>],
    window: usize,
) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    for pixels in lists {
        for &(r, c) in pixels {
            out.push(Patch {
                data: extract_patch(image, r, c, window)?,
                center_row: r,
                center_col: c,
                label: map.get(r, c),
            });
        }
    }
    Ok(out)
}

/// Materializes train and test patches, ordered by class then (row, col).
pub fn build_dataset(
    image: &CoherencyImage,
    map: &LabelMap,
    split: &SplitSpec,
    window: usize,
) -> Result<(Vec<Patch>, Vec<Patch>)> {
    if !map.same_dims(image.height(), image.width()) {
        return Err(Error::DimensionMismatch(format!(
            "label map {}x{} vs image {}x{}",
            map.height(),
            map.width(),
            image.height(),
            image.width()
        )));
    }
    Ok((
        patches_for(image, map, &split.train, window)?,
        patches_for(image, map, &split.test, window)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn ramp_image(h: usize, w: usize) -> CoherencyImage {
        let mut img = CoherencyImage::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                for ch in Channel::ALL {
                    let v = (10 * r + c) as f64 + 100.0 * ch.index() as f64;
                    img.set(ch, r, c, Complex64::new(v, -v));
                }
            }
        }
        img
    }

    #[test]
    fn constant_plane_zeroes() {
        let mut img = CoherencyImage::zeros(2, 3);
        img.re_mut(Channel::T11).fill(5.0);
        let n = normalize_channels(&img);
        assert!(n.re(Channel::T11).iter().all(|&v| v == 0.0));
        assert_eq!(img.re(Channel::T11), &[5.0; 6], "input untouched");
    }

    #[test]
    fn two_values_become_plus_minus_one() {
        let mut img = CoherencyImage::zeros(1, 2);
        img.re_mut(Channel::T22).copy_from_slice(&[1.0, 3.0]);
        assert_eq!(normalize_channels(&img).re(Channel::T22), &[-1.0, 1.0]);
    }

    #[test]
    fn normalized_planes_are_standard_and_idempotent() {
        let mut img = ramp_image(7, 5);
        img.re_mut(Channel::T13)[3] = 1e4;
        let n = normalize_channels(&img);
        let nn = normalize_channels(&n);
        for ch in Channel::ALL {
            for plane in [n.re(ch), n.im(ch)] {
                let m = plane.iter().sum::<f64>() / plane.len() as f64;
                let s = (plane.iter().map(|v| (v - m).powi(2)).sum::<f64>() / plane.len() as f64).sqrt();
                assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
            }
            for (a, b) in n.re(ch).iter().zip(nn.re(ch)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interior_patch_is_plain_copy() {
        let img = ramp_image(6, 6);
        let p = extract_patch(&img, 2, 3, 3).unwrap();
        for dr in 0..3 {
            for dc in 0..3 {
                for ch in Channel::ALL {
                    assert_eq!(p.at(&[dr, dc, ch.index()]), img.get(ch, 1 + dr, 2 + dc));
                }
            }
        }
    }

    #[test]
    fn corner_patch_mirrors_without_edge_repeat() {
        let img = ramp_image(4, 4);
        let p = extract_patch(&img, 0, 0, 3).unwrap();
        let top: Vec<f64> = (0..3).map(|c| p.at(&[0, c, 0]).re).collect();
        assert_eq!(top, vec![11.0, 10.0, 11.0]);
    }

    #[test]
    fn large_window_on_small_image_keeps_shape() {
        let img = ramp_image(5, 5);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(extract_patch(&img, r, c, 13).unwrap().shape(), &[13, 13, 6]);
            }
        }
        assert!(matches!(
            extract_patch(&img, 5, 0, 3),
            Err(Error::CenterOutOfBounds { .. })
        ));
        assert!(extract_patch(&img, 0, 0, 4).is_err());
    }

    /// Materializes the mirror-extended image and slices it directly.
    fn padded_oracle(img: &CoherencyImage, row: usize, col: usize, window: usize) -> ComplexTensor {
        let half = window / 2;
        let (h, w) = (img.height() as isize, img.width() as isize);
        let fold = |mut i: isize, n: isize| loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        };
        let ph = img.height() + 2 * half;
        let pw = img.width() + 2 * half;
        let mut padded = vec![vec![[Complex64::new(0.0, 0.0); 6]; pw]; ph];
        for (pr, line) in padded.iter_mut().enumerate() {
            for (pc, cell) in line.iter_mut().enumerate() {
                let r = fold(pr as isize - half as isize, h);
                let c = fold(pc as isize - half as isize, w);
                for ch in Channel::ALL {
                    cell[ch.index()] = img.get(ch, r, c);
                }
            }
        }
        let mut out = ComplexTensor::zeros(&[window, window, 6]);
        for dr in 0..window {
            for dc in 0..window {
                for ch in 0..6 {
                    let off = out.offset(&[dr, dc, ch]);
                    out.set(off, padded[row + dr][col + dc][ch]);
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn mirror_padding_matches_extended_image(
            h in 2usize..9, w in 2usize..9, half in 1usize..4, r in 0usize..9, c in 0usize..9
        ) {
            let img = ramp_image(h, w);
            let (r, c) = (r % h, c % w);
            let window = 2 * half + 1;
            prop_assume!(half < h && half < w);
            prop_assert_eq!(extract_patch(&img, r, c, window).unwrap(), padded_oracle(&img, r, c, window));
        }

        #[test]
        fn split_is_partition_with_formula_sizes(
            h in 3usize..20, w in 3usize..20, ratio in 0.01f64..0.99, seed in any::<u64>()
        ) {
            let labels: Vec<u16> = (0..h * w).map(|i| (i % 4) as u16).collect();
            let map = LabelMap::new(h, w, 3, labels).unwrap();
            let split = stratified_split(&map, ratio, seed).unwrap();
            let counts = map.class_counts();
            let mut all: Vec<(usize, usize)> = Vec::new();
            for c in 0..3 {
                prop_assert_eq!(split.train[c].len(), train_size(counts[c + 1], ratio));
                prop_assert_eq!(split.train[c].len() + split.test[c].len(), counts[c + 1]);
                all.extend(&split.train[c]);
                all.extend(&split.test[c]);
            }
            all.sort_unstable();
            let expected: Vec<(usize, usize)> = (0..h * w)
                .filter(|i| i % 4 != 0)
                .map(|i| (i / w, i % w))
                .collect();
            prop_assert_eq!(all, expected);
        }
    }

    #[test]
    fn two_pixel_class_at_half_keeps_one() {
        let map = LabelMap::new(1, 2, 1, vec![1, 1]).unwrap();
        let split = stratified_split(&map, 0.5, 3).unwrap();
        assert_eq!(split.train[0].len(), 1);
        assert_eq!(split.test[0].len(), 1);
    }

    #[test]
    fn split_determinism_and_seed_sensitivity() {
        let labels: Vec<u16> = (0..400).map(|i| (i % 2 + 1) as u16).collect();
        let map = LabelMap::new(20, 20, 2, labels).unwrap();
        assert_eq!(
            stratified_split(&map, 0.1, 5).unwrap(),
            stratified_split(&map, 0.1, 5).unwrap()
        );
        assert_ne!(
            stratified_split(&map, 0.1, 5).unwrap().train,
            stratified_split(&map, 0.1, 6).unwrap().train
        );
    }

    #[test]
    fn empty_class_rejected() {
        let map = LabelMap::new(1, 3, 3, vec![1, 1, 2]).unwrap();
        assert!(matches!(stratified_split(&map, 0.5, 1), Err(Error::EmptyClass(3))));
    }

    #[test]
    fn dataset_partition_and_order() {
        let img = ramp_image(4, 5);
        let map = LabelMap::new(4, 5, 2, (0..20).map(|i| [0, 1, 2, 2][i % 4]).collect()).unwrap();
        let split = stratified_split(&map, 0.3, 9).unwrap();
        let (train, test) = build_dataset(&img, &map, &split, 3).unwrap();
        assert_eq!(train.len() + test.len(), 15);
        for set in [&train, &test] {
            for pair in set.windows(2) {
                let a = (pair[0].label, pair[0].center_row, pair[0].center_col);
                let b = (pair[1].label, pair[1].center_row, pair[1].center_col);
                assert!(a < b);
            }
            for p in set.iter() {
                assert_eq!(p.label, map.get(p.center_row, p.center_col));
                assert_eq!(p.data, extract_patch(&img, p.center_row, p.center_col, 3).unwrap());
            }
        }
    }
}
