//! Whole-image classification, accuracy metrics and median-filter
//! post-processing of class maps.

use crate::error::{Error, Result};
use crate::model::Network;
use crate::preprocess::{patch_batch, reflect};
use crate::scene::{CoherencyImage, LabelMap};

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Confusion counts and the accuracy figures derived from them.
///
/// `confusion[p][r]` counts pixels predicted as class `p + 1` whose reference
/// class is `r + 1`. Per-class accuracy is taken along predicted-class rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub confusion: Vec<Vec<u64>>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class_accuracy: Vec<f64>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let n = confusion.len();
        if confusion.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..n).map(|c| confusion[c][c]).sum();
        let rows: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..n).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
        // A class that is never predicted scores zero accuracy.
        let per_class_accuracy: Vec<f64> = (0..n)
            .map(|c| {
                if rows[c] == 0 {
                    0.0
                } else {
                    confusion[c][c] as f64 / rows[c] as f64
                }
            })
            .collect();
        let (oa, kappa) = if total == 0 {
            (0.0, 0.0)
        } else {
            let t = total as f64;
            let po = trace as f64 / t;
            let pe: f64 = (0..n).map(|c| rows[c] as f64 * cols[c] as f64).sum::<f64>() / (t * t);
            let kappa = if pe >= 1.0 {
                if po >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (po - pe) / (1.0 - pe)
            };
            (po, kappa)
        };
        let aa = if n == 0 {
            0.0
        } else {
            per_class_accuracy.iter().sum::<f64>() / n as f64
        };
        Ok(Self {
            confusion,
            oa,
            aa,
            kappa,
            per_class_accuracy,
        })
    }

    /// Builds the confusion matrix from `(predicted, reference)` class pairs,
    /// both in `1..=classes`.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u16, u16)>, classes: usize) -> Result<Self> {
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (p, r) in pairs {
            for l in [p, r] {
                if l == 0 || l as usize > classes {
                    return Err(Error::LabelOutOfRange {
                        label: l,
                        num_classes: classes as u16,
                    });
                }
            }
            confusion[p as usize - 1][r as usize - 1] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Plain-text table: confusion counts, then OA, AA and kappa as
    /// percentages with two decimals.
    pub fn to_text(&self) -> String {
        let n = self.confusion.len();
        let width = self
            .confusion
            .iter()
            .flatten()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(5);
        let mut s = String::from("Confusion matrix (rows: predicted class, columns: reference class)\n");
        s.push_str(&format!("{:>6}", ""));
        for c in 1..=n {
            s.push_str(&format!(" {c:>width$}"));
        }
        s.push('\n');
        for (p, row) in self.confusion.iter().enumerate() {
            s.push_str(&format!("{:>6}", p + 1));
            for v in row {
                s.push_str(&format!(" {v:>width$}"));
            }
            s.push('\n');
        }
        s.push('\n');
        s.push_str(&format!("OA = {:.2}\n", 100.0 * self.oa));
        s.push_str(&format!("AA = {:.2}\n", 100.0 * self.aa));
        s.push_str(&format!("Kappa = {:.2}\n", 100.0 * self.kappa));
        s.push_str("\nPer-class accuracy\n");
        for (c, a) in self.per_class_accuracy.iter().enumerate() {
            s.push_str(&format!("{:>6} = {:.2}\n", c + 1, 100.0 * a));
        }
        s
    }
}

/// Compares a predicted map with a reference map. Unlabeled reference pixels
/// are skipped; a labeled reference pixel must carry a prediction.
pub fn compute_metrics(pred: &LabelMap, reference: &LabelMap) -> Result<EvalReport> {
    if pred.height() != reference.height() || pred.width() != reference.width() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs reference {}x{}",
            pred.height(),
            pred.width(),
            reference.height(),
            reference.width()
        )));
    }
    let n = pred.num_classes().max(reference.num_classes()) as usize;
    let mut confusion = vec![vec![0u64; n]; n];
    for (i, (&p, &r)) in pred.labels().iter().zip(reference.labels()).enumerate() {
        if r == 0 {
            continue;
        }
        if p == 0 {
            return Err(Error::Unclassified {
                row: i / pred.width(),
                col: i % pred.width(),
            });
        }
        confusion[p as usize - 1][r as usize - 1] += 1;
    }
    EvalReport::from_confusion(confusion)
}

/// Classifies every pixel of a normalized image, `batch_size` patches at a
/// time, in row-major order.
pub fn classify_image(net: &Network, image: &CoherencyImage, window: usize, batch_size: usize) -> Result<LabelMap> {
    let cfg = net.config();
    if window != cfg.window {
        return Err(Error::InvalidConfig(format!(
            "window {window} does not match the model's window {}",
            cfg.window
        )));
    }
    let (h, w) = (image.height(), image.width());
    let pixels: Vec<(usize, usize)> = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect();
    let labels = predict_pixels(net, image, &pixels, batch_size)?;
    LabelMap::new(h, w, cfg.num_classes as u16, labels)
}

/// Predicted class id for each listed pixel, in list order.
pub fn predict_pixels(
    net: &Network,
    image: &CoherencyImage,
    pixels: &[(usize, usize)],
    batch_size: usize,
) -> Result<Vec<u16>> {
    let cfg = net.config();
    let mut labels = Vec::with_capacity(pixels.len());
    for chunk in pixels.chunks(batch_size.max(1)) {
        let x = patch_batch(image, chunk, cfg.window)?;
        let probs = net.forward(&x, None)?;
        labels.extend(probs.chunks(cfg.num_classes).map(|row| argmax(row) as u16 + 1));
    }
    Ok(labels)
}

/// 3x3 median (fifth order statistic) of the label values around each pixel,
/// mirror-padded at the borders. Unlabeled pixels take part as value 0.
pub fn median_filter_classmap(map: &LabelMap) -> LabelMap {
    let (h, w) = (map.height(), map.width());
    let mut out = Vec::with_capacity(h * w);
    let mut window = [0u16; 9];
    for r in 0..h {
        for c in 0..w {
            let mut k = 0;
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let rr = reflect(r as isize + dr, h);
                    let cc = reflect(c as isize + dc, w);
                    window[k] = map.get(rr, cc);
                    k += 1;
                }
            }
            window.sort_unstable();
            out.push(window[4]);
        }
    }
    LabelMap::new(h, w, map.num_classes(), out).expect("median of valid labels is a valid label")
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
