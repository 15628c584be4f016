//! Command-line frontend for the `vgstein` library.
//!
//! [`dispatch`] parses an argument vector, runs one subcommand and returns the
//! process exit code:
//!
//! * `0` — success;
//! * `2` — bad arguments or parameters outside a routine's domain;
//! * `3` — a numerical routine missed its tolerance, or a check command found
//!   a violated identity;
//! * `1` — anything else (I/O failures).
//!
//! Results go to stdout as JSON, or to `--out FILE` as CSV or JSON depending on
//! the extension. Every written file gets a `FILE.manifest.json` next to it.

pub mod commands;
pub mod manifest;
pub mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use vgstein::Error as CoreError;

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "vgstein", version, about = "Variance-Gamma distributions, Stein solutions and error bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// `(r, θ, σ, μ)` flags shared by the distribution commands.
#[derive(Args, Debug, Clone, Serialize)]
pub struct VgArgs {
    /// Shape r > 0 (twice the Bessel order plus one).
    #[arg(long, allow_hyphen_values = true)]
    pub r: f64,
    /// Skewness θ.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    /// Scale σ > 0.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub sigma: f64,
    /// Location μ.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct OutputArgs {
    /// Write the result to this file (`.csv` or `.json`) instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command", content = "args")]
pub enum Command {
    /// Probability density at one or more points.
    Density(commands::PointArgs),
    /// Cumulative distribution function at one or more points.
    Cdf(commands::PointArgs),
    /// Raw moments M_0..M_k (requires μ = 0).
    Moments(commands::MomentsArgs),
    /// Moment generating function at one or more t.
    Mgf(commands::MgfArgs),
    /// Seeded random variates.
    Sample(commands::SampleArgs),
    /// Convert between parametrisations and named special cases.
    Convert(commands::ConvertArgs),
    /// Solve the Stein equation for a built-in test function.
    SteinSolve(commands::SteinSolveArgs),
    /// Residual checks of the Stein solver and the characterising operator.
    SteinCheck(commands::SteinCheckArgs),
    /// Explicit error bound for the bilinear sum W_r.
    Bound(commands::BoundArgs),
    /// The binary-sequence D2 bound min{A, B}.
    D2Bound(commands::D2BoundArgs),
    /// Monte Carlo estimate of |E h(W_r) - E h(Z)| for one cell.
    Simulate(commands::SimulateArgs),
    /// Monte Carlo experiment for the standardised D2 statistic.
    D2Run(commands::D2RunArgs),
    /// Exact point mass P(W = 0) for the Rademacher non-smooth example.
    Nonsmooth(commands::NonsmoothArgs),
    /// Wronskian and kernel-inequality checks for the Bessel routines.
    BesselCheck(commands::BesselCheckArgs),
    /// Run a grid of simulation cells from a config file.
    Sweep(sweep::SweepArgs),
    /// Re-run the command recorded in a manifest.
    Replay(manifest::ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Density(_) => "density",
            Command::Cdf(_) => "cdf",
            Command::Moments(_) => "moments",
            Command::Mgf(_) => "mgf",
            Command::Sample(_) => "sample",
            Command::Convert(_) => "convert",
            Command::SteinSolve(_) => "stein-solve",
            Command::SteinCheck(_) => "stein-check",
            Command::Bound(_) => "bound",
            Command::D2Bound(_) => "d2-bound",
            Command::Simulate(_) => "simulate",
            Command::D2Run(_) => "d2-run",
            Command::Nonsmooth(_) => "nonsmooth",
            Command::BesselCheck(_) => "bessel-check",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }

    fn output(&self) -> Option<&OutputArgs> {
        match self {
            Command::Density(a) | Command::Cdf(a) => Some(&a.output),
            Command::Moments(a) => Some(&a.output),
            Command::Mgf(a) => Some(&a.output),
            Command::Sample(a) => Some(&a.output),
            Command::Convert(a) => Some(&a.output),
            Command::SteinSolve(a) => Some(&a.output),
            Command::SteinCheck(a) => Some(&a.output),
            Command::Bound(a) => Some(&a.output),
            Command::D2Bound(a) => Some(&a.output),
            Command::Simulate(a) => Some(&a.output),
            Command::D2Run(a) => Some(&a.output),
            Command::Nonsmooth(a) => Some(&a.output),
            Command::BesselCheck(a) => Some(&a.output),
            Command::Sweep(a) => Some(&a.output),
            Command::Replay(_) => None,
        }
    }

    fn output_mut(&mut self) -> Option<&mut OutputArgs> {
        match self {
            Command::Density(a) | Command::Cdf(a) => Some(&mut a.output),
            Command::Moments(a) => Some(&mut a.output),
            Command::Mgf(a) => Some(&mut a.output),
            Command::Sample(a) => Some(&mut a.output),
            Command::Convert(a) => Some(&mut a.output),
            Command::SteinSolve(a) => Some(&mut a.output),
            Command::SteinCheck(a) => Some(&mut a.output),
            Command::Bound(a) => Some(&mut a.output),
            Command::D2Bound(a) => Some(&mut a.output),
            Command::Simulate(a) => Some(&mut a.output),
            Command::D2Run(a) => Some(&mut a.output),
            Command::Nonsmooth(a) => Some(&mut a.output),
            Command::BesselCheck(a) => Some(&mut a.output),
            Command::Sweep(a) => Some(&mut a.output),
            Command::Replay(_) => None,
        }
    }
}

/// Process-level settings that are not part of the argument vector.
#[derive(Debug, Clone, Default)]
pub struct Ctx {
    /// Worker cap from `VGSTEIN_THREADS` (or a replayed manifest).
    pub threads: Option<usize>,
}

impl Ctx {
    pub fn from_env() -> Self {
        Ctx { threads: vgstein::harness::threads_from_env() }
    }

    /// The effective worker count: the smaller of an explicit flag and the cap.
    pub fn threads(&self, flag: Option<usize>) -> Option<usize> {
        match (flag, self.threads) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    /// CSV rendering; commands without a natural table fall back to `key,value` rows.
    pub csv: Option<String>,
    pub seed: Option<u64>,
    /// Set by check commands when the computation ran but a tolerance was missed.
    pub failure: Option<String>,
}

impl Report {
    pub fn json(value: impl Serialize) -> anyhow::Result<Self> {
        Ok(Report { json: serde_json::to_value(value)?, csv: None, seed: None, failure: None })
    }

    pub fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn csv_text(&self) -> String {
        match &self.csv {
            Some(c) => c.clone(),
            None => {
                let mut out = String::from("key,value\n");
                flatten("", &self.json, &mut out);
                out
            }
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::Number(n) => {
            let s = match (n.as_u64(), n.as_i64(), n.as_f64()) {
                (Some(u), _, _) => u.to_string(),
                (_, Some(i), _) => i.to_string(),
                (_, _, Some(f)) => fmt_f64(f),
                _ => n.to_string(),
            };
            out.push_str(&format!("{prefix},{s}\n"));
        }
        Value::Null => out.push_str(&format!("{prefix},NaN\n")),
        Value::Bool(b) => out.push_str(&format!("{prefix},{b}\n")),
        Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
    }
}

/// Usage/domain error raised by the frontend itself.
pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    CoreError::Domain(msg.into()).into()
}

/// Maps an error chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Domain(_) | CoreError::Range(_) => EXIT_USAGE,
                CoreError::Accuracy { .. } | CoreError::InsufficientSignal(_) | CoreError::Partial { .. } => {
                    EXIT_ACCURACY
                }
            };
        }
    }
    EXIT_OTHER
}

enum Format {
    Csv,
    Json,
}

fn format_of(path: &Path) -> anyhow::Result<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        _ => Err(usage(format!("--out {}: extension must be .csv or .json", path.display()))),
    }
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn pretty(v: &Value) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Parses and runs one command line (including the program name).
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let stdout = std::io::stdout();
    match run(cli.command, args, &Ctx::from_env(), &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command; `args` is the argument vector recorded in manifests.
pub fn run(command: Command, args: Vec<String>, ctx: &Ctx, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    if let Command::Replay(r) = &command {
        return manifest::replay(r, stdout);
    }
    let out = command.output().and_then(|o| o.out.clone());
    let format = out.as_deref().map(format_of).transpose()?;
    let started = manifest::now();
    let report = execute(&command, ctx)?;
    let finished = manifest::now();

    match (&out, format) {
        (Some(path), Some(fmt)) => {
            let body = match fmt {
                Format::Csv => report.csv_text(),
                Format::Json => pretty(&report.json)?,
            };
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            let m = RunManifest::new(&command, args, report.seed, ctx.threads(None), started, finished, path)?;
            m.write(&manifest_path(path))?;
        }
        _ => stdout.write_all(pretty(&report.json)?.as_bytes())?,
    }
    if let Some(f) = report.failure {
        eprintln!("check failed: {f}");
        return Ok(EXIT_ACCURACY);
    }
    Ok(EXIT_OK)
}

fn execute(command: &Command, ctx: &Ctx) -> anyhow::Result<Report> {
    use commands as c;
    match command {
        Command::Density(a) => c::density(a),
        Command::Cdf(a) => c::cdf(a),
        Command::Moments(a) => c::moments(a),
        Command::Mgf(a) => c::mgf(a),
        Command::Sample(a) => c::sample(a),
        Command::Convert(a) => c::convert(a),
        Command::SteinSolve(a) => c::stein_solve(a),
        Command::SteinCheck(a) => c::stein_check(a),
        Command::Bound(a) => c::bound(a),
        Command::D2Bound(a) => c::d2_bound(a),
        Command::Simulate(a) => c::simulate(a, ctx),
        Command::D2Run(a) => c::d2_run(a, ctx),
        Command::Nonsmooth(a) => c::nonsmooth(a),
        Command::BesselCheck(a) => c::bessel_check(a),
        Command::Sweep(a) => sweep::run_sweep(a, ctx),
        Command::Replay(_) => bail!("replay cannot be nested"),
    }
}
