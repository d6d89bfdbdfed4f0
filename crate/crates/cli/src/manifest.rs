//! Run manifests: the fully resolved invocation of a subcommand, written next
//! to its outputs.
//!
//! Output paths are stored relative to the manifest itself (`"."` for
//! directories, the bare file name for single-file outputs), so two runs with
//! the same inputs and flags leave byte-identical output directories and a
//! manifest can be replayed after the directory moves. Input paths are
//! absolute.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TOOL: &str = "polsar";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    /// Derived settings not visible in the flags, e.g. the model config.
    pub resolved: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub invocation: Command,
}

impl RunManifest {
    pub fn new(invocation: Command) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            inputs: BTreeMap::new(),
            resolved: BTreeMap::new(),
            outputs: Vec::new(),
            invocation,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if manifest.tool != TOOL {
            bail!("{} was written by {:?}, not {TOOL}", path.display(), manifest.tool);
        }
        if matches!(manifest.invocation, Command::Replay(_)) {
            bail!("{} records a replay, which cannot be replayed", path.display());
        }
        Ok(manifest)
    }
}

/// Where a command's manifest goes: inside an output directory, or next to a
/// single output file as `<file>.manifest.json`.
pub fn manifest_path(cmd: &Command) -> PathBuf {
    match cmd {
        Command::Eval(a) => {
            let mut name = a.out.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            a.out.with_file_name(name)
        }
        Command::Synth(a) => a.out.join(MANIFEST_NAME),
        Command::Train(a) => a.out.join(MANIFEST_NAME),
        Command::Classify(a) => a.out.join(MANIFEST_NAME),
        Command::Sweep(a) => a.out.join(MANIFEST_NAME),
        Command::Replay(a) => a.manifest.clone(),
    }
}

/// The invocation with its output path made relative to the manifest.
pub fn portable(cmd: &Command) -> Command {
    let mut cmd = cmd.clone();
    match &mut cmd {
        Command::Eval(a) => a.out = PathBuf::from(a.out.file_name().unwrap_or_default()),
        Command::Synth(a) => a.out = ".".into(),
        Command::Train(a) => a.out = ".".into(),
        Command::Classify(a) => a.out = ".".into(),
        Command::Sweep(a) => a.out = ".".into(),
        Command::Replay(_) => {}
    }
    cmd
}

/// Inverse of [`portable`]: re-anchors the output of a recorded invocation,
/// either at `out` or relative to the manifest's directory.
pub fn anchor(mut cmd: Command, manifest: &Path, out: Option<PathBuf>) -> Command {
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let place = |recorded: &mut PathBuf| {
        *recorded = match &out {
            Some(o) => o.clone(),
            None => base.join(&*recorded),
        }
    };
    match &mut cmd {
        Command::Eval(a) => place(&mut a.out),
        Command::Synth(a) => place(&mut a.out),
        Command::Train(a) => place(&mut a.out),
        Command::Classify(a) => place(&mut a.out),
        Command::Sweep(a) => place(&mut a.out),
        Command::Replay(_) => {}
    }
    cmd
}
