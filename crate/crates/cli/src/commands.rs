//! Subcommand implementations. Each one checks its flags before reading or
//! writing anything; flag problems are usage errors (exit 2), everything
//! after that is a runtime error (exit 1).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use polsar_core::eval::{classify_image, compute_metrics, median_filter_classmap};
use polsar_core::io::{
    default_palette, load_checkpoint, read_label_map, read_t3_directory, render_class_map, render_pauli_rgb,
    save_checkpoint, write_label_map, write_t3_directory,
};
use polsar_core::model::{parse_branches, Attention, ModelConfig};
use polsar_core::pipeline::{
    apply_sweep_value, sweep_csv, sweep_with_progress, train_network, ExperimentConfig, SweepMode,
};
use polsar_core::preprocess::normalize_channels;
use polsar_core::synth::{default_class_models, generate_scene, Layout};
use polsar_core::train::TrainConfig;

use crate::args::{ClassifyArgs, Command, EvalArgs, ReplayArgs, SweepArgs, SynthArgs, TrainArgs, TrainOpts};
use crate::manifest::{anchor, manifest_path, portable, RunManifest};

pub const CHECKPOINT_NAME: &str = "model.cvps";
pub const LABELS_NAME: &str = "labels.plbl";
pub const CLASSMAP_NAME: &str = "classmap.plbl";
pub const CLASSMAP_PNG: &str = "classmap.png";
pub const FILTERED_NAME: &str = "classmap_median.plbl";
pub const FILTERED_PNG: &str = "classmap_median.png";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn run(cmd: Command) -> Outcome {
    match absolutize(cmd)? {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Classify(a) => classify(&a),
        Command::Eval(a) => eval(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Replay(a) => replay(&a),
    }
}

/// Makes every path absolute so recorded invocations do not depend on the
/// working directory.
fn absolutize(mut cmd: Command) -> std::result::Result<Command, Failure> {
    let abs = |p: &mut PathBuf| -> std::result::Result<(), Failure> {
        *p = std::path::absolute(&*p).map_err(|e| usage(format!("bad path {}: {e}", p.display())))?;
        Ok(())
    };
    match &mut cmd {
        Command::Synth(a) => abs(&mut a.out)?,
        Command::Train(a) => {
            abs(&mut a.t3)?;
            abs(&mut a.labels)?;
            abs(&mut a.out)?;
        }
        Command::Classify(a) => {
            abs(&mut a.checkpoint)?;
            abs(&mut a.t3)?;
            abs(&mut a.out)?;
        }
        Command::Eval(a) => {
            abs(&mut a.pred)?;
            abs(&mut a.reference)?;
            abs(&mut a.out)?;
        }
        Command::Sweep(a) => {
            abs(&mut a.t3)?;
            abs(&mut a.labels)?;
            abs(&mut a.out)?;
        }
        Command::Replay(a) => {
            abs(&mut a.manifest)?;
            if let Some(o) = a.out.as_mut() {
                abs(o)?;
            }
        }
    }
    Ok(cmd)
}

pub fn parse_size(s: &str) -> std::result::Result<(usize, usize), Failure> {
    let bad = || usage(format!("size must look like HxW, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

pub fn parse_values(s: &str) -> std::result::Result<Vec<f64>, Failure> {
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad value {v:?} in {s:?}")))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(usage(format!("values must be finite: {s:?}")));
    }
    Ok(values)
}

/// Resolves the shared training flags. Without a class count the model is
/// checked with a two-class placeholder so bad flags fail before any I/O.
fn experiment_config(opts: &TrainOpts, classes: Option<u16>) -> polsar_core::Result<ExperimentConfig> {
    let mut model = ModelConfig::new(classes.unwrap_or(2) as usize);
    model.window = opts.window;
    model.branches = parse_branches(&opts.branches)?;
    model.attention = opts.attention.parse::<Attention>()?;
    model.validate()?;
    let train = TrainConfig {
        learning_rate: opts.lr,
        batch_size: opts.batch,
        max_epochs: opts.epochs,
        patience: opts.patience,
        ..TrainConfig::default()
    };
    train.validate()?;
    if !(opts.ratio > 0.0 && opts.ratio < 1.0) {
        return Err(polsar_core::Error::InvalidConfig(format!(
            "ratio must be in (0, 1), got {}",
            opts.ratio
        )));
    }
    Ok(ExperimentConfig {
        model,
        train,
        ratio: opts.ratio,
        seed: opts.seed,
    })
}

fn resolved_entries(cfg: &ExperimentConfig, manifest: &mut RunManifest) {
    manifest.resolved.insert("model".into(), cfg.model.to_text());
    let t = &cfg.train;
    manifest.resolved.insert(
        "train".into(),
        format!(
            "learning_rate = {}\nbatch_size = {}\nmax_epochs = {}\npatience = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\nvalidation_fraction = {}\n",
            t.learning_rate, t.batch_size, t.max_epochs, t.patience, t.beta1, t.beta2, t.epsilon, t.validation_fraction
        ),
    );
    let (split, init, fit) = cfg.seeds();
    manifest
        .resolved
        .insert("seeds".into(), format!("split = {split}\ninit = {init}\nfit = {fit}\n"));
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn finish(cmd: Command, mut manifest: RunManifest, outputs: &[&str]) -> Outcome {
    let path = manifest_path(&cmd);
    manifest.invocation = portable(&cmd);
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    manifest.write(&path)?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Outcome {
    let (h, w) = parse_size(&a.size)?;
    let layout: Layout = a.layout.parse().map_err(usage)?;
    let models = default_class_models(a.classes, a.looks).map_err(usage)?;
    let (image, labels) = generate_scene(&models, layout, h, w, a.seed).map_err(usage)?;

    write_t3_directory(&image, &a.out)?;
    write_label_map(&labels, a.out.join(LABELS_NAME))?;
    render_pauli_rgb(&image, a.out.join("pauli.png"))?;

    let cmd = Command::Synth(a.clone());
    let mut manifest = RunManifest::new(cmd.clone());
    manifest.seed = Some(a.seed);
    let covariances: Vec<String> = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let d: Vec<String> = (0..3).map(|k| m.sigma()[k][k].re.to_string()).collect();
            format!("class {} diag = {}", i + 1, d.join(", "))
        })
        .collect();
    manifest
        .resolved
        .insert("class_covariances".into(), covariances.join("\n") + "\n");
    eprintln!("wrote {h}x{w} scene with {} classes to {}", a.classes, a.out.display());
    let outputs: Vec<&str> = polsar_core::io::t3::file_names()
        .chain([LABELS_NAME, "pauli.png"])
        .collect();
    finish(cmd, manifest, &outputs)
}

fn train(a: &TrainArgs) -> Outcome {
    experiment_config(&a.opts, None).map_err(usage)?;
    let image = read_t3_directory(&a.t3)?;
    let labels = read_label_map(&a.labels)?;
    let cfg = experiment_config(&a.opts, Some(labels.num_classes()))?;

    create_dir(&a.out)?;
    let (network, log, split) = train_network(&image, &labels, &cfg, |r| {
        eprintln!(
            "epoch {:>4}  train_loss {:.6}  val_loss {:.6}  val_oa {:.4}",
            r.epoch, r.train_loss, r.val_loss, r.val_oa
        )
    })?;
    save_checkpoint(&network, a.out.join(CHECKPOINT_NAME))?;
    write_file(&a.out.join("train_log.csv"), log.to_csv())?;
    write_file(&a.out.join("train_timing.csv"), log.timing_csv())?;
    let mut counts = String::from("class,train,test\n");
    for (c, (tr, te)) in split.train.iter().zip(&split.test).enumerate() {
        counts.push_str(&format!("{},{},{}\n", c + 1, tr.len(), te.len()));
    }
    write_file(&a.out.join("split.csv"), counts)?;
    if let Some(best) = log.best() {
        eprintln!("best epoch {} val_loss {:.6}", best.epoch, best.val_loss);
    }

    let cmd = Command::Train(a.clone());
    let mut manifest = RunManifest::new(cmd.clone());
    manifest.seed = Some(a.opts.seed);
    manifest.inputs.insert("t3".into(), a.t3.clone());
    manifest.inputs.insert("labels".into(), a.labels.clone());
    resolved_entries(&cfg, &mut manifest);
    // train_timing.csv holds wall-clock times and is the one output a replay
    // does not reproduce.
    finish(
        cmd,
        manifest,
        &[CHECKPOINT_NAME, "train_log.csv", "train_timing.csv", "split.csv"],
    )
}

fn classify(a: &ClassifyArgs) -> Outcome {
    if a.batch == 0 {
        return Err(usage("batch must be >= 1"));
    }
    let network = load_checkpoint(&a.checkpoint)?;
    let image = read_t3_directory(&a.t3)?;
    let normalized = normalize_channels(&image);
    let window = network.config().window;
    let map = classify_image(&network, &normalized, window, a.batch)?;
    let palette = default_palette(map.num_classes());

    create_dir(&a.out)?;
    write_label_map(&map, a.out.join(CLASSMAP_NAME))?;
    render_class_map(&map, &palette, a.out.join(CLASSMAP_PNG))?;
    let mut outputs = vec![CLASSMAP_NAME, CLASSMAP_PNG];
    if a.median_filter {
        let filtered = median_filter_classmap(&map);
        write_label_map(&filtered, a.out.join(FILTERED_NAME))?;
        render_class_map(&filtered, &palette, a.out.join(FILTERED_PNG))?;
        outputs.extend([FILTERED_NAME, FILTERED_PNG]);
    }

    let cmd = Command::Classify(a.clone());
    let mut manifest = RunManifest::new(cmd.clone());
    manifest.inputs.insert("checkpoint".into(), a.checkpoint.clone());
    manifest.inputs.insert("t3".into(), a.t3.clone());
    manifest.resolved.insert("model".into(), network.config().to_text());
    finish(cmd, manifest, &outputs)
}

fn eval(a: &EvalArgs) -> Outcome {
    let pred = read_label_map(&a.pred)?;
    let reference = read_label_map(&a.reference)?;
    let report = compute_metrics(&pred, &reference)?;
    let text = report.to_text();
    if let Some(dir) = a.out.parent() {
        create_dir(dir)?;
    }
    write_file(&a.out, &text)?;
    print!("{text}");

    let cmd = Command::Eval(a.clone());
    let mut manifest = RunManifest::new(cmd.clone());
    manifest.inputs.insert("pred".into(), a.pred.clone());
    manifest.inputs.insert("ref".into(), a.reference.clone());
    let name = a.out.file_name().unwrap_or_default().to_string_lossy().into_owned();
    finish(cmd, manifest, &[&name])
}

fn sweep(a: &SweepArgs) -> Outcome {
    let mode: SweepMode = a.mode.parse().map_err(usage)?;
    let values = parse_values(&a.values)?;
    if a.trials == 0 {
        return Err(usage("trials must be >= 1"));
    }
    let base = experiment_config(&a.opts, None).map_err(usage)?;
    for &v in &values {
        apply_sweep_value(&base, mode, v).map_err(usage)?;
    }
    let image = read_t3_directory(&a.t3)?;
    let labels = read_label_map(&a.labels)?;
    let base = experiment_config(&a.opts, Some(labels.num_classes()))?;

    create_dir(&a.out)?;
    let rows = sweep_with_progress(&image, &labels, &base, mode, &values, a.trials, |v, t, oa| {
        eprintln!("{} = {v}  trial {t}  OA {:.4}", a.mode, oa)
    })?;
    write_file(&a.out.join("sweep.csv"), sweep_csv(&rows))?;
    let mut trials = String::from("value,trial,oa\n");
    for r in &rows {
        for (t, oa) in r.trial_oa.iter().enumerate() {
            trials.push_str(&format!("{},{t},{oa}\n", r.value));
        }
    }
    write_file(&a.out.join("sweep_trials.csv"), trials)?;

    let cmd = Command::Sweep(a.clone());
    let mut manifest = RunManifest::new(cmd.clone());
    manifest.seed = Some(a.opts.seed);
    manifest.inputs.insert("t3".into(), a.t3.clone());
    manifest.inputs.insert("labels".into(), a.labels.clone());
    resolved_entries(&base, &mut manifest);
    finish(cmd, manifest, &["sweep.csv", "sweep_trials.csv"])
}

fn replay(a: &ReplayArgs) -> Outcome {
    let manifest = RunManifest::read(&a.manifest)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, running {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    run(anchor(manifest.invocation, &a.manifest, a.out.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64x32").unwrap(), (64, 32));
        assert_eq!(parse_size("7X9").unwrap(), (7, 9));
        for bad in ["64", "0x4", "ax3", "3x", ""] {
            assert!(matches!(parse_size(bad), Err(Failure::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("0.01, 0.02,0.05").unwrap(), vec![0.01, 0.02, 0.05]);
        assert!(parse_values("0.1,,0.2").is_err());
        assert!(parse_values("nan").is_err());
    }

    fn opts() -> TrainOpts {
        TrainOpts {
            ratio: 0.01,
            window: 13,
            branches: "S,M,D".into(),
            attention: "after".into(),
            seed: 0,
            lr: 1e-3,
            batch: 64,
            epochs: 250,
            patience: 10,
        }
    }

    #[test]
    fn defaults_resolve_to_library_defaults() {
        let cfg = experiment_config(&opts(), Some(15)).unwrap();
        assert_eq!(cfg.model, ModelConfig::new(15));
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn bad_flags_are_rejected_without_classes() {
        for f in [
            |o: &mut TrainOpts| o.window = 4,
            |o: &mut TrainOpts| o.branches = "S,X".into(),
            |o: &mut TrainOpts| o.ratio = 1.5,
            |o: &mut TrainOpts| o.batch = 0,
            |o: &mut TrainOpts| o.lr = f64::NAN,
        ] {
            let mut o = opts();
            f(&mut o);
            assert!(experiment_config(&o, None).is_err());
        }
    }
}
