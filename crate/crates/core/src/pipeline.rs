//! End-to-end experiments: normalize, split, train, score the held-out
//! pixels; and sweeps repeating that over a list of settings.

use crate::error::{Error, Result};
use crate::eval::{mean_std, predict_pixels, EvalReport};
use crate::model::{ModelConfig, Network};
use crate::preprocess::{build_dataset, normalize_channels, stratified_split, SplitSpec};
use crate::rng::{self, stream};
use crate::scene::{CoherencyImage, LabelMap};
use crate::train::{fit_with_progress, EpochRecord, TrainConfig, TrainLog};

/// Patches per inference batch when scoring test pixels.
pub const EVAL_BATCH: usize = 256;

/// Everything an experiment depends on. `seed` feeds the split, the weight
/// initialization and training through separate derived streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ratio: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Seeds of the three independent streams: (split, init, fit).
    pub fn seeds(&self) -> (u64, u64, u64) {
        (
            rng::derive(self.seed, stream::SPLIT),
            rng::derive(self.seed, stream::INIT),
            rng::derive(self.seed, stream::FIT),
        )
    }
}

pub struct Experiment {
    pub network: Network,
    pub log: TrainLog,
    pub split: SplitSpec,
    /// Scores on the test pixels of the split.
    pub report: EvalReport,
}

pub fn run_experiment(image: &CoherencyImage, labels: &LabelMap, cfg: &ExperimentConfig) -> Result<Experiment> {
    run_experiment_with_progress(image, labels, cfg, |_| {})
}

/// Normalizes, splits and trains, without scoring the test pixels.
pub fn train_network(
    image: &CoherencyImage,
    labels: &LabelMap,
    cfg: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, TrainLog, SplitSpec)> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    if cfg.model.num_classes != labels.num_classes() as usize {
        return Err(Error::InvalidConfig(format!(
            "model has {} classes, label map has {}",
            cfg.model.num_classes,
            labels.num_classes()
        )));
    }
    let (split_seed, init_seed, fit_seed) = cfg.seeds();
    let normalized = normalize_channels(image);
    let split = stratified_split(labels, cfg.ratio, split_seed)?;
    let mut only_train = split.clone();
    only_train.test.iter_mut().for_each(Vec::clear);
    let (train, _) = build_dataset(&normalized, labels, &only_train, cfg.model.window)?;
    let net = Network::build(&cfg.model, init_seed)?;
    let train_cfg = TrainConfig {
        seed: fit_seed,
        ..cfg.train.clone()
    };
    let (network, log) = fit_with_progress(net, &train, &train_cfg, on_epoch)?;
    Ok((network, log, split))
}

pub fn run_experiment_with_progress(
    image: &CoherencyImage,
    labels: &LabelMap,
    cfg: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Experiment> {
    let (network, log, split) = train_network(image, labels, cfg, on_epoch)?;
    let normalized = normalize_channels(image);
    let test = split.test_pixels();
    let predicted = predict_pixels(&network, &normalized, &test, EVAL_BATCH)?;
    let reference = test.iter().map(|&(r, c)| labels.get(r, c));
    let report = EvalReport::from_pairs(predicted.into_iter().zip(reference), cfg.model.num_classes)?;
    Ok(Experiment {
        network,
        log,
        split,
        report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Window,
    Ratio,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(SweepMode::Window),
            "ratio" => Ok(SweepMode::Ratio),
            other => Err(Error::InvalidConfig(format!("unknown sweep mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_oa: f64,
    pub std_oa: f64,
    pub trial_oa: Vec<f64>,
}

/// Applies one sweep value to a base configuration.
pub fn apply_sweep_value(base: &ExperimentConfig, mode: SweepMode, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match mode {
        SweepMode::Window => {
            if value.fract() != 0.0 || value < 3.0 || value as usize % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "window must be an odd integer >= 3, got {value}"
                )));
            }
            cfg.model.window = value as usize;
        }
        SweepMode::Ratio => {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidConfig(format!("ratio must be in (0, 1), got {value}")));
            }
            cfg.ratio = value;
        }
    }
    cfg.model.validate()?;
    Ok(cfg)
}

/// Seed of trial `t`; shared across sweep values so trials are paired.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    rng::derive(rng::derive(seed, stream::TRIAL), t as u64)
}

/// Trains and scores `trials` independent runs per value; OA spread is the
/// population standard deviation over trials.
pub fn sweep(
    image: &CoherencyImage,
    labels: &LabelMap,
    base: &ExperimentConfig,
    mode: SweepMode,
    values: &[f64],
    trials: usize,
) -> Result<Vec<SweepRow>> {
    sweep_with_progress(image, labels, base, mode, values, trials, |_, _, _| {})
}

/// [`sweep`] reporting `(value, trial, oa)` after every run.
pub fn sweep_with_progress(
    image: &CoherencyImage,
    labels: &LabelMap,
    base: &ExperimentConfig,
    mode: SweepMode,
    values: &[f64],
    trials: usize,
    mut on_trial: impl FnMut(f64, usize, f64),
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply_sweep_value(base, mode, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (&value, cfg) in values.iter().zip(configs) {
        let mut oas = Vec::with_capacity(trials);
        for t in 0..trials {
            let trial = ExperimentConfig {
                seed: trial_seed(base.seed, t),
                ..cfg.clone()
            };
            let oa = run_experiment(image, labels, &trial)?.report.oa;
            on_trial(value, t, oa);
            oas.push(oa);
        }
        let (mean_oa, std_oa) = mean_std(&oas);
        rows.push(SweepRow {
            value,
            mean_oa,
            std_oa,
            trial_oa: oas,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("value,mean_oa,std_oa\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.value, r.mean_oa, r.std_oa));
    }
    s
}
