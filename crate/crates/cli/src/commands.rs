//! Implementations of the single-shot subcommands.

use std::time::Duration;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use vgstein::bessel::{bessel_i, bessel_k, check_kernel_inequalities};
use vgstein::bounds::{d2_bound as core_d2_bound, vg_bound, BoundReport};
use vgstein::harness::{
    d2_experiment, linear_fit, nonsmooth_exact, nonsmooth_stirling_variant, simulate_w, vg_target, write_csv, Law,
    SimConfig, SimResult, MIN_SAMPLES,
};
use vgstein::stein::{
    bound_constants_for, builtin_suite, characterization_residual, stein_solve as core_stein_solve, DampedPolynomial,
    HNorms, ResidualMethod, TestFunction,
};
use vgstein::vgdist::{self, mean_variance, VGParams};

use crate::{fmt_f64, usage, Ctx, OutputArgs, Report, VgArgs};

/// Largest sample count accepted by `sample` (values are held in memory).
const MAX_DRAWS: u64 = 100_000_000;
/// Largest Monte Carlo sample count for `simulate` and `d2-run`.
const MAX_SIM_SAMPLES: u64 = 10_000_000_000;
/// Largest `m`, `n` for simulations.
const MAX_LEN: u64 = 1 << 26;
const MAX_R: u32 = 64;
const RESIDUAL_TOL: f64 = 1e-6;
const WRONSKIAN_TOL: f64 = 1e-10;

#[derive(Args, Debug, Clone, Serialize)]
pub struct PointArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Evaluation point(s), comma separated.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Highest moment order.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MgfArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Argument(s) of the MGF, comma separated.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Number of variates.
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// `(r, θ, σ, μ)`.
    First,
    /// `(ν, α, β, μ)`.
    Second,
    /// Laplace law with scale `σ` and location `μ`.
    Laplace,
    /// Product of two centred correlated normals.
    ProductNormal,
    /// Difference of correlated gamma variables.
    GammaDifference,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvertArgs {
    #[arg(long, value_enum, default_value_t = Source::First)]
    pub from: Source,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SteinSolveArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Built-in test function (cos, sin, tanh, bump, one, x, x2).
    #[arg(long, default_value = "cos")]
    pub h: String,
    /// Evaluation point(s), comma separated.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
    /// Report derivatives f', ..., f^(k) as well (k <= 4).
    #[arg(long, default_value_t = 2)]
    pub derivatives: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SteinCheckArgs {
    #[command(flatten)]
    pub vg: VgArgs,
    /// Test functions to round-trip (default: cos, sin, tanh, bump).
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<String>,
    /// Grid points spanning μ ± 10σ√r.
    #[arg(long, default_value_t = 21)]
    pub grid: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// How the test-function norms entering a bound are specified.
#[derive(Args, Debug, Clone, Serialize)]
pub struct NormArgs {
    /// Built-in test function whose declared norms are used.
    #[arg(long, conflicts_with_all = ["norms", "center_norm"])]
    pub h: Option<String>,
    /// ‖h'‖, ‖h''‖, ‖h'''‖, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "center_norm")]
    pub norms: Option<Vec<f64>>,
    /// ‖h - E h(Z)‖.
    #[arg(long, requires = "norms")]
    pub center_norm: Option<f64>,
}

impl NormArgs {
    fn resolve(&self, r: u32) -> anyhow::Result<HNorms> {
        match (&self.h, &self.norms, self.center_norm) {
            (Some(name), _, _) => {
                let h = TestFunction::by_name(name)?;
                let norms = h.norms_with_target(vg_target(&h, r)?);
                norms
                    .validate()
                    .with_context(|| format!("test function '{name}' has no finite derivative norms"))?;
                Ok(norms)
            }
            (None, Some(d), Some(c)) => {
                if d.len() != 3 {
                    return Err(usage(format!("--norms needs exactly 3 values, got {}", d.len())));
                }
                let norms = HNorms { centered: c, d1: d[0], d2: d[1], d3: d[2] };
                if [c, d[0], d[1], d[2]].iter().any(|v| *v < 0.0) {
                    return Err(usage("norms must be non-negative"));
                }
                norms.validate()?;
                Ok(norms)
            }
            _ => Err(usage("give either --h NAME or --norms D1,D2,D3 with --center-norm C")),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LawArgs {
    /// Law of the X summands (rademacher, gaussian, uniform_pm).
    #[arg(long, default_value = "rademacher")]
    pub law_x: String,
    /// Law of the Y summands.
    #[arg(long, default_value = "rademacher")]
    pub law_y: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[command(flatten)]
    pub laws: LawArgs,
    #[command(flatten)]
    pub norms: NormArgs,
    /// Report only the (X, Y, m, n) assignment, without the role-swapped minimum.
    #[arg(long)]
    pub as_stated: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct D2BoundArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub norms: NormArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[command(flatten)]
    pub laws: LawArgs,
    /// Test functions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "cos")]
    pub h: Vec<String>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (capped by VGSTEIN_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Wall-clock budget in seconds; exceeding it is an error.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct D2RunArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_delimiter = ',', default_value = "cos")]
    pub h: Vec<String>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NonsmoothArgs {
    /// Half-lengths k (m = 2k), comma separated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub k: Vec<u64>,
    /// Half-lengths l (n = 2l); defaults to k.
    #[arg(long, value_delimiter = ',')]
    pub l: Vec<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BesselCheckArgs {
    /// Order ν > -1/2.
    #[arg(long, allow_hyphen_values = true)]
    pub nu: f64,
    /// Exponential tilt β in (-1, 1).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    /// Grid of x >= 0 (default: 0.1, 0.5, 1, 2, 5, 10, 20).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    /// Derivative order n in the right-kernel inequalities (0, 1, 2).
    #[arg(long, default_value_t = 0)]
    pub order: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn params(vg: &VgArgs) -> anyhow::Result<VGParams> {
    Ok(VGParams::new(vg.r, vg.theta, vg.sigma, vg.mu)?)
}

fn check_finite(name: &str, xs: &[f64]) -> anyhow::Result<()> {
    if let Some(x) = xs.iter().find(|x| x.is_nan()) {
        return Err(usage(format!("--{name} values must not be NaN, got {x}")));
    }
    Ok(())
}

/// `{"x": .., key: ..}` with scalars for a single point and arrays otherwise.
fn pointwise(arg: &str, key: &str, xs: &[f64], ys: &[f64]) -> anyhow::Result<Report> {
    let mut csv = format!("{arg},{key}\n");
    for (x, y) in xs.iter().zip(ys) {
        csv.push_str(&format!("{},{}\n", fmt_f64(*x), fmt_f64(*y)));
    }
    let json = if xs.len() == 1 { json!({ arg: xs[0], key: ys[0] }) } else { json!({ arg: xs, key: ys }) };
    Ok(Report::json(json)?.with_csv(csv))
}

pub fn density(a: &PointArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    check_finite("x", &a.x)?;
    let ys: Vec<f64> = a.x.iter().map(|&x| vgdist::density(&p, x)).collect();
    pointwise("x", "density", &a.x, &ys)
}

pub fn cdf(a: &PointArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    check_finite("x", &a.x)?;
    let ys = a.x.iter().map(|&x| vgdist::cdf(&p, x)).collect::<vgstein::Result<Vec<_>>>()?;
    pointwise("x", "cdf", &a.x, &ys)
}

pub fn moments(a: &MomentsArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    if a.k < 1 || a.k > 200 {
        return Err(usage(format!("--k must lie in 1..=200, got {}", a.k)));
    }
    let m = vgdist::moments(&p, a.k)?;
    if let Some(k) = m.iter().position(|v| !v.is_finite()) {
        return Err(vgstein::Error::Range(format!("moment M_{k} overflows f64")).into());
    }
    let mut csv = String::from("k,M\n");
    for (k, v) in m.iter().enumerate() {
        csv.push_str(&format!("{k},{}\n", fmt_f64(*v)));
    }
    Ok(Report::json(json!({ "M": m }))?.with_csv(csv))
}

pub fn mgf(a: &MgfArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    check_finite("t", &a.t)?;
    let ys = a.t.iter().map(|&t| vgdist::mgf(&p, t)).collect::<vgstein::Result<Vec<_>>>()?;
    pointwise("t", "mgf", &a.t, &ys)
}

pub fn sample(a: &SampleArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    if a.n < 1 || a.n > MAX_DRAWS {
        return Err(usage(format!("--n must lie in 1..={MAX_DRAWS}, got {}", a.n)));
    }
    let xs = vgdist::sample(&p, a.seed, a.n as usize)?;
    let mut csv = String::with_capacity(26 * xs.len() + 2);
    csv.push_str("x\n");
    for x in &xs {
        csv.push_str(&fmt_f64(*x));
        csv.push('\n');
    }
    Ok(Report::json(json!({ "seed": a.seed, "samples": xs }))?.with_csv(csv).with_seed(a.seed))
}

fn need(v: Option<f64>, flag: &str, source: &str) -> anyhow::Result<f64> {
    v.ok_or_else(|| usage(format!("--from {source} requires --{flag}")))
}

pub fn convert(a: &ConvertArgs) -> anyhow::Result<Report> {
    let p = match a.from {
        Source::First => VGParams::new(
            need(a.r, "r", "first")?,
            a.theta.unwrap_or(0.0),
            a.sigma.unwrap_or(1.0),
            a.mu.unwrap_or(0.0),
        )?,
        Source::Second => VGParams::from_second(
            need(a.nu, "nu", "second")?,
            need(a.alpha, "alpha", "second")?,
            a.beta.unwrap_or(0.0),
            a.mu.unwrap_or(0.0),
        )?,
        Source::Laplace => VGParams::laplace(a.mu.unwrap_or(0.0), need(a.sigma, "sigma", "laplace")?)?,
        Source::ProductNormal => VGParams::product_normal(
            need(a.sigma_x, "sigma-x", "product-normal")?,
            need(a.sigma_y, "sigma-y", "product-normal")?,
            a.rho.unwrap_or(0.0),
        )?,
        Source::GammaDifference => VGParams::gamma_difference(
            need(a.r, "r", "gamma-difference")?,
            need(a.lambda1, "lambda1", "gamma-difference")?,
            need(a.lambda2, "lambda2", "gamma-difference")?,
            a.rho.unwrap_or(0.0),
        )?,
    };
    let (mean, variance) = mean_variance(&p);
    Report::json(json!({
        "first": p,
        "second": p.second(),
        "mean": mean,
        "variance": variance,
        "right_rate": p.right_rate(),
        "left_rate": p.left_rate(),
    }))
}

pub fn stein_solve(a: &SteinSolveArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    check_finite("x", &a.x)?;
    if a.x.iter().any(|x| x.is_infinite()) {
        return Err(usage("--x values must be finite"));
    }
    if a.derivatives > 4 {
        return Err(usage(format!("--derivatives must be <= 4, got {}", a.derivatives)));
    }
    let h = TestFunction::by_name(&a.h)?;
    let sol = core_stein_solve(&p, &h)?;

    #[derive(Serialize)]
    struct Point {
        x: f64,
        /// `f, f', ...` up to the requested order.
        f: Vec<f64>,
        residual: f64,
    }
    let mut points = Vec::with_capacity(a.x.len());
    for &x in &a.x {
        let f = (0..=a.derivatives).map(|k| sol.derivative(k, x)).collect::<vgstein::Result<Vec<_>>>()?;
        points.push(Point { x, f, residual: sol.residual(x)? });
    }
    let mut csv = String::from("x");
    for k in 0..=a.derivatives {
        csv.push_str(&format!(",f{k}"));
    }
    csv.push_str(",residual\n");
    for pt in &points {
        csv.push_str(&fmt_f64(pt.x));
        for v in &pt.f {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push_str(&format!(",{}\n", fmt_f64(pt.residual)));
    }
    Ok(Report::json(json!({
        "h": a.h,
        "target_expectation": sol.target_expectation,
        "non_unique": sol.non_unique,
        "points": points,
    }))?
    .with_csv(csv))
}

pub fn stein_check(a: &SteinCheckArgs) -> anyhow::Result<Report> {
    let p = params(&a.vg)?;
    if a.grid < 2 || a.grid > 10_001 {
        return Err(usage(format!("--grid must lie in 2..=10001, got {}", a.grid)));
    }
    let suite = if a.h.is_empty() {
        builtin_suite()
    } else {
        a.h.iter().map(|n| TestFunction::by_name(n)).collect::<vgstein::Result<Vec<_>>>()?
    };
    let half = 10.0 * p.sigma * p.r.sqrt();
    let grid: Vec<f64> =
        (0..a.grid).map(|i| p.mu - half + 2.0 * half * i as f64 / (a.grid - 1) as f64).collect();
    let derivative_bounds = p.theta == 0.0 && p.r.fract() == 0.0;

    let mut failures = Vec::new();
    let mut round_trip = Vec::new();
    for h in &suite {
        let sol = core_stein_solve(&p, h)?;
        let mut worst = 0.0f64;
        let mut sup_df = 0.0f64;
        for &x in &grid {
            worst = worst.max(sol.residual(x)?.abs());
            sup_df = sup_df.max(sol.df(x)?.abs());
        }
        let m1 = if derivative_bounds && h.is_bounded() {
            Some(bound_constants_for(&p, &h.norms_with_target(sol.target_expectation))?[1])
        } else {
            None
        };
        if worst > RESIDUAL_TOL {
            failures.push(format!("round-trip residual {worst:e} for {}", h.name));
        }
        if let Some(m1) = m1 {
            if sup_df > m1 {
                failures.push(format!("sup|f'| = {sup_df} exceeds M1 = {m1} for {}", h.name));
            }
        }
        round_trip.push(json!({
            "h": h.name,
            "max_residual": worst,
            "sup_df": sup_df,
            "M1": m1,
            "non_unique": sol.non_unique,
        }));
    }

    let mut characterization = 0.0f64;
    for poly in DampedPolynomial::suite(p.mu) {
        let f = |x: f64| poly.eval(x);
        let res = characterization_residual(&p, &f, ResidualMethod::Quadrature)?;
        characterization = characterization.max(res.value.abs());
    }
    if characterization > RESIDUAL_TOL {
        failures.push(format!("characterization residual {characterization:e}"));
    }

    let pass = failures.is_empty();
    let mut report = Report::json(json!({
        "tolerance": RESIDUAL_TOL,
        "grid_points": a.grid,
        "round_trip": round_trip,
        "characterization_max_residual": characterization,
        "pass": pass,
    }))?;
    report.failure = (!pass).then(|| failures.join("; "));
    Ok(report)
}

fn check_lengths(m: u64, n: u64) -> anyhow::Result<()> {
    if m < 1 || n < 1 || m > MAX_LEN || n > MAX_LEN {
        return Err(usage(format!("--m and --n must lie in 1..={MAX_LEN}, got m = {m}, n = {n}")));
    }
    Ok(())
}

fn check_r(r: u32) -> anyhow::Result<()> {
    if !(1..=MAX_R).contains(&r) {
        return Err(usage(format!("--r must lie in 1..={MAX_R}, got {r}")));
    }
    Ok(())
}

fn laws(a: &LawArgs) -> anyhow::Result<(Law, Law)> {
    Ok((Law::parse(&a.law_x)?, Law::parse(&a.law_y)?))
}

pub fn bound(a: &BoundArgs) -> anyhow::Result<Report> {
    check_lengths(a.m, a.n)?;
    check_r(a.r)?;
    let (lx, ly) = laws(&a.laws)?;
    let norms = a.norms.resolve(a.r)?;
    let rep: BoundReport = vg_bound(&lx.moments(), &ly.moments(), a.m, a.n, a.r, &norms, !a.as_stated)?;
    Report::json(json!({ "norms": norm_json(&norms), "report": rep }))
}

fn norm_json(n: &HNorms) -> serde_json::Value {
    json!({ "centered": n.centered, "d1": n.d1, "d2": n.d2, "d3": n.d3 })
}

pub fn d2_bound(a: &D2BoundArgs) -> anyhow::Result<Report> {
    check_lengths(a.m, a.n)?;
    let norms = a.norms.resolve(1)?;
    let d = core_d2_bound(a.m, a.n, &norms)?;
    Report::json(json!({ "A": d.a, "B": d.b, "min": d.min, "norms": norm_json(&norms), "report": d.report }))
}

fn h_suite(names: &[String]) -> anyhow::Result<Vec<TestFunction>> {
    if names.is_empty() {
        return Err(usage("--h must name at least one test function"));
    }
    Ok(names.iter().map(|n| TestFunction::by_name(n)).collect::<vgstein::Result<Vec<_>>>()?)
}

fn check_samples(samples: u64) -> anyhow::Result<()> {
    if !(MIN_SAMPLES..=MAX_SIM_SAMPLES).contains(&samples) {
        return Err(usage(format!("--samples must lie in {MIN_SAMPLES}..={MAX_SIM_SAMPLES}, got {samples}")));
    }
    Ok(())
}

fn check_threads(t: Option<usize>) -> anyhow::Result<()> {
    if t == Some(0) {
        return Err(usage("--threads must be >= 1"));
    }
    Ok(())
}

/// JSON and CSV renderings of simulation results.
pub fn sim_report(results: &[SimResult], extra_rows: &[String], extra_json: serde_json::Value) -> anyhow::Result<Report> {
    let mut csv = Vec::new();
    write_csv(&mut csv, results, extra_rows)?;
    let json = if results.len() == 1 && extra_json.is_null() {
        serde_json::to_value(&results[0])?
    } else {
        json!({ "cells": results, "fits": extra_json })
    };
    Ok(Report::json(json)?.with_csv(String::from_utf8(csv)?))
}

pub fn simulate(a: &SimulateArgs, ctx: &Ctx) -> anyhow::Result<Report> {
    check_lengths(a.m, a.n)?;
    check_r(a.r)?;
    check_samples(a.samples)?;
    check_threads(a.threads)?;
    let budget = match a.time_budget {
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            return Err(usage(format!("--time-budget must be a positive number of seconds, got {s}")))
        }
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let (lx, ly) = laws(&a.laws)?;
    let mut cfg = SimConfig::new(a.m, a.n, a.r, lx, ly, a.samples, a.seed);
    cfg.h_suite = h_suite(&a.h)?;
    cfg.threads = ctx.threads(a.threads);
    cfg.time_budget = budget;
    cfg.validate()?;
    let res = simulate_w(&cfg)?;
    Ok(sim_report(&[res], &[], serde_json::Value::Null)?.with_seed(a.seed))
}

pub fn d2_run(a: &D2RunArgs, ctx: &Ctx) -> anyhow::Result<Report> {
    check_lengths(a.m, a.n)?;
    check_samples(a.samples)?;
    check_threads(a.threads)?;
    let suite = h_suite(&a.h)?;
    let res = d2_experiment(a.m, a.n, a.samples, &suite, a.seed, ctx.threads(a.threads))?;
    Ok(sim_report(&[res], &[], serde_json::Value::Null)?.with_seed(a.seed))
}

pub fn nonsmooth(a: &NonsmoothArgs) -> anyhow::Result<Report> {
    let ls = if a.l.is_empty() { a.k.clone() } else { a.l.clone() };
    if ls.len() != a.k.len() {
        return Err(usage(format!("--l has {} values but --k has {}", ls.len(), a.k.len())));
    }
    if let Some(v) = a.k.iter().chain(&ls).find(|&&v| !(1..=1_000_000).contains(&v)) {
        return Err(usage(format!("--k and --l values must lie in 1..=1000000, got {v}")));
    }

    #[derive(Serialize)]
    struct Row {
        k: u64,
        l: u64,
        exact: f64,
        stirling: f64,
        stirling_rel_error: f64,
        /// The approximation with cross term 4/(πmn).
        stirling_variant: f64,
    }
    let mut rows = Vec::new();
    let mut csv = String::from("k,l,exact,stirling,stirling_rel_error,stirling_variant\n");
    for (&k, &l) in a.k.iter().zip(&ls) {
        let (exact, stirling) = nonsmooth_exact(k, l)?;
        let row = Row {
            k,
            l,
            exact,
            stirling,
            stirling_rel_error: (stirling - exact).abs() / exact,
            stirling_variant: nonsmooth_stirling_variant(k, l),
        };
        csv.push_str(&format!(
            "{k},{l},{},{},{},{}\n",
            fmt_f64(row.exact),
            fmt_f64(row.stirling),
            fmt_f64(row.stirling_rel_error),
            fmt_f64(row.stirling_variant)
        ));
        rows.push(row);
    }
    // decay exponent of the point mass on the diagonal k = l
    let diag: Vec<&Row> = rows.iter().filter(|r| r.k == r.l).collect();
    let mut distinct: Vec<u64> = diag.iter().map(|r| r.k).collect();
    distinct.dedup();
    let decay = (distinct.len() >= 2).then(|| {
        let xs: Vec<f64> = diag.iter().map(|r| (2.0 * r.k as f64).ln()).collect();
        let ys: Vec<f64> = diag.iter().map(|r| r.exact.ln()).collect();
        linear_fit(&xs, &ys).0
    });
    Report::json(json!({ "rows": rows, "decay_slope": decay })).map(|r| r.with_csv(csv))
}

pub fn bessel_check(a: &BesselCheckArgs) -> anyhow::Result<Report> {
    if !(a.nu > -0.5) || !a.nu.is_finite() {
        return Err(usage(format!("--nu must be finite and > -1/2, got {}", a.nu)));
    }
    if !(a.beta > -1.0 && a.beta < 1.0) {
        return Err(usage(format!("--beta must lie in (-1, 1), got {}", a.beta)));
    }
    if a.order > 2 {
        return Err(usage(format!("--order must be 0, 1 or 2, got {}", a.order)));
    }
    let grid = if a.x.is_empty() { vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] } else { a.x.clone() };
    if grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(usage("--x values must be finite and >= 0"));
    }
    let ineq = check_kernel_inequalities(a.nu, a.beta, &grid, a.order)?;

    // I_ν K_{ν+1} + I_{ν+1} K_ν = 1/x (exponential scalings cancel)
    let mut wronskian = Vec::new();
    if a.nu >= 0.0 {
        for &x in grid.iter().filter(|x| **x > 0.0) {
            let w = bessel_i(a.nu, x, true)? * bessel_k(a.nu + 1.0, x, true)?
                + bessel_i(a.nu + 1.0, x, true)? * bessel_k(a.nu, x, true)?;
            wronskian.push(json!({ "x": x, "rel_error": (w * x - 1.0).abs() }));
        }
    }
    let worst = wronskian.iter().filter_map(|w| w["rel_error"].as_f64()).fold(0.0f64, f64::max);

    let mut failures = Vec::new();
    if !ineq.all_pass() {
        let bad = ineq.points.iter().filter(|p| !p.pass).count();
        failures.push(format!("{bad} inequality points violated"));
    }
    if worst > WRONSKIAN_TOL {
        failures.push(format!("Wronskian relative error {worst:e}"));
    }
    let pass = failures.is_empty();
    let mut report = Report::json(json!({
        "inequalities": ineq,
        "wronskian": wronskian,
        "wronskian_max_rel_error": worst,
        "pass": pass,
    }))?;
    report.failure = (!pass).then(|| failures.join("; "));
    Ok(report)
}
