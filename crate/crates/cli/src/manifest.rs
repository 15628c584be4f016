//! Run manifests: a JSON record written next to every output file, sufficient
//! to reproduce that file with `vgstein replay`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser};
use serde::{Deserialize, Serialize};

use crate::{usage, Cli, Command, Ctx};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub argv: Vec<String>,
    /// The parsed parameter set, defaults included.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    /// Worker cap in effect (`VGSTEIN_THREADS`); results do not depend on it.
    pub threads: Option<usize>,
    /// Version of the `vgstein` binary that wrote the manifest.
    pub artifact_version: String,
    /// Unix time in seconds; not part of the reproducible output.
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
    /// Full text of the sweep config, for commands that read one.
    pub config_text: Option<String>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(
        command: &Command,
        argv: Vec<String>,
        seed: Option<u64>,
        threads: Option<usize>,
        started_unix: f64,
        finished_unix: f64,
        output: &Path,
    ) -> anyhow::Result<Self> {
        let config_text = match command {
            Command::Sweep(a) => Some(std::fs::read_to_string(&a.config)?),
            _ => None,
        };
        Ok(RunManifest {
            manifest_version: MANIFEST_VERSION,
            command: command.name().to_string(),
            argv,
            params: serde_json::to_value(command)?["args"].clone(),
            seed,
            threads,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix,
            finished_unix,
            outputs: vec![output.to_path_buf()],
            config_text,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: not a run manifest: {e}", path.display())))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this file instead of the recorded output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Re-runs the recorded command with the recorded worker cap.
pub fn replay(a: &ReplayArgs, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    let m = RunManifest::read(&a.manifest)?;
    if m.manifest_version != MANIFEST_VERSION {
        return Err(usage(format!("unsupported manifest version {}", m.manifest_version)));
    }
    let mut argv = vec!["vgstein".to_string()];
    argv.extend(m.argv.iter().cloned());
    let mut cli = Cli::try_parse_from(&argv).map_err(|e| usage(format!("recorded arguments no longer parse: {e}")))?;
    if cli.command.name() != m.command {
        return Err(usage(format!("manifest command {} does not match its arguments", m.command)));
    }
    if let (Command::Sweep(s), Some(text)) = (&cli.command, &m.config_text) {
        let current = std::fs::read_to_string(&s.config).with_context(|| format!("reading {}", s.config.display()))?;
        if &current != text {
            return Err(usage(format!("{} changed since the manifest was written", s.config.display())));
        }
    }
    let mut args = m.argv.clone();
    if let Some(out) = &a.out {
        let slot = cli.command.output_mut().ok_or_else(|| usage("recorded command has no output"))?;
        slot.out = Some(out.clone());
        args = replace_out(&args, out);
    }
    crate::run(cli.command, args, &Ctx { threads: m.threads }, stdout)
}

fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut res = Vec::with_capacity(args.len() + 2);
    let mut i = 0;
    let mut replaced = false;
    while i < args.len() {
        if args[i] == "--out" {
            res.push("--out".to_string());
            res.push(out.clone());
            i += 2;
            replaced = true;
        } else if args[i].starts_with("--out=") {
            res.push(format!("--out={out}"));
            i += 1;
            replaced = true;
        } else {
            res.push(args[i].clone());
            i += 1;
        }
    }
    if !replaced {
        res.push("--out".to_string());
        res.push(out);
    }
    res
}
