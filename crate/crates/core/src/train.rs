//! Adam training with a held-out validation subset, early stopping on
//! validation loss and restoration of the best weights.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::cvnn::cross_entropy;
use crate::error::{Error, Result};
use crate::model::{Network, Param};
use crate::preprocess::{stack_patches, Patch};
use crate::rng::{self, stream};
use crate::tensor::ComplexTensor;

/// Minimum decrease of validation loss that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;
/// Samples per inference chunk when scoring the validation set.
const EVAL_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 250,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must be in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch limit must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam betas must be in [0, 1) and epsilon positive");
        }
        Ok(())
    }
}

/// First and second moments per real coordinate, plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<ComplexTensor>,
    pub v: Vec<ComplexTensor>,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| ComplexTensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| ComplexTensor::zeros(p.value.shape())).collect(),
        }
    }
}

fn adam_update(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    for i in 0..theta.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One bias-corrected Adam step. Real and imaginary parts are independent
/// coordinates; real-only parameters leave their imaginary plane untouched.
pub fn adam_step(params: &mut [Param], grads: &[ComplexTensor], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let (mr, mi) = m.parts_mut();
        let (vr, vi) = v.parts_mut();
        let (pr, pi) = p.value.parts_mut();
        adam_update(pr, g.re(), mr, vr, cfg, c1, c2);
        if p.complex {
            adam_update(pi, g.im(), mi, vi, cfg, c1, c2);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_oa: f64,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Positions in the training list held out for validation, ascending.
    pub validation: Vec<usize>,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// Per-epoch losses and accuracy. Wall-clock times are left out so that
    /// identical runs produce identical files; see [`TrainLog::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_oa\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_oa));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,elapsed_ms\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{}\n", r.epoch, r.elapsed_ms));
        }
        s
    }
}

/// Canonical ordering key so results do not depend on input list order.
fn key(p: &Patch, index: usize) -> (u16, usize, usize, usize) {
    (p.label, p.center_row, p.center_col, index)
}

/// Per class, `min(max(1, round(f * n)), n - 1)` patches go to validation.
/// Returns (fit positions, validation positions), each ascending.
pub fn validation_split(patches: &[Patch], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut classes: std::collections::BTreeMap<u16, Vec<usize>> = Default::default();
    for (i, p) in patches.iter().enumerate() {
        classes.entry(p.label).or_default().push(i);
    }
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for (label, mut members) in classes {
        members.sort_by_key(|&i| key(&patches[i], i));
        let n = members.len();
        let n_val = ((fraction * n as f64).round() as usize).max(1).min(n - 1);
        members.shuffle(&mut rng::rng(rng::derive(seed, label as u64)));
        val.extend_from_slice(&members[..n_val]);
        fit.extend_from_slice(&members[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Mean inference loss and accuracy over `indices`.
pub fn evaluate(net: &Network, patches: &[Patch], indices: &[usize]) -> Result<(f64, f64)> {
    let classes = net.config().num_classes;
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = stack_patches(chunk.iter().map(|&i| &patches[i]))?;
        let probs = net.forward(&x, None)?;
        let mut targets = vec![0.0; chunk.len() * classes];
        for (row, &i) in chunk.iter().enumerate() {
            let label = patches[i].label as usize;
            targets[row * classes + label - 1] = 1.0;
            if crate::eval::argmax(&probs[row * classes..(row + 1) * classes]) + 1 == label {
                correct += 1;
            }
        }
        total_loss += cross_entropy(&probs, &targets, classes) * chunk.len() as f64;
    }
    let n = indices.len() as f64;
    Ok((total_loss / n, correct as f64 / n))
}

/// Trains with early stopping. Returns the network carrying the weights of
/// the best validation epoch.
pub fn fit(net: Network, train: &[Patch], cfg: &TrainConfig) -> Result<(Network, TrainLog)> {
    fit_with_progress(net, train, cfg, |_| {})
}

pub fn fit_with_progress(
    mut net: Network,
    train: &[Patch],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::NoTrainingData);
    }
    for p in train {
        if p.label == 0 || p.label as usize > net.config().num_classes {
            return Err(Error::LabelOutOfRange {
                label: p.label,
                num_classes: net.config().num_classes as u16,
            });
        }
    }
    let seed = rng::derive(cfg.seed, stream::FIT);
    let (mut fit_idx, mut val_idx) =
        validation_split(train, cfg.validation_fraction, rng::derive(seed, stream::VALIDATION));
    if val_idx.is_empty() {
        // Every class has a single sample: monitor the training set itself.
        val_idx = fit_idx.clone();
    }
    fit_idx.sort_by_key(|&i| key(&train[i], i));
    let mut shuffle_rng = rng::rng(rng::derive(seed, stream::SHUFFLE));
    let dropout_seed = rng::derive(seed, stream::DROPOUT);

    let start = Instant::now();
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, Vec<Param>, AdamState)> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let mut order = fit_idx.clone();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch = batch.to_vec();
            batch.sort_by_key(|&i| key(&train[i], i));
            let x = stack_patches(batch.iter().map(|&i| &train[i]))?;
            let labels: Vec<u16> = batch.iter().map(|&i| train[i].label).collect();
            let step_seed = rng::derive(dropout_seed, net.optimizer.step);
            let (loss, grads) = net.loss_and_grads(&x, &labels, Some(step_seed))?;
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut net.params, &grads, &mut net.optimizer, cfg);
        }
        let (val_loss, val_oa) = evaluate(&net, train, &val_idx)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / fit_idx.len() as f64,
            val_loss,
            val_oa,
            elapsed_ms: start.elapsed().as_millis(),
        };
        on_epoch(&record);
        records.push(record);
        let improved = match &best {
            None => val_loss.is_finite(),
            Some((_, b, _, _)) => val_loss <= b - MIN_IMPROVEMENT,
        };
        if improved {
            best = Some((epoch, val_loss, net.params.clone(), net.optimizer.clone()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    let (best_epoch, best_loss, params, optimizer) =
        best.ok_or_else(|| Error::InvalidConfig("validation loss was never finite".into()))?;
    net.params = params;
    net.optimizer = optimizer;
    net.best_val_loss = best_loss;
    Ok((
        net,
        TrainLog {
            epochs: records,
            best_epoch,
            stopped_early,
            validation: val_idx,
        },
    ))
}
