//! Monte Carlo experiments for `W_r = (mn)^{-1/2} Σ_{i,j,k} X_{ik} Y_{jk}`:
//! smooth-function distances to `VG(r, 0, 1, 0)`, bound checks, convergence
//! rate fits, the binary `D₂` statistic and the exact point mass at zero.
//!
//! Samples are generated in fixed-size blocks. Block `b` draws from a
//! ChaCha8 generator seeded with the run seed and switched to stream `b`, and
//! block results are reduced in block order, so output depends only on the
//! configuration and seed — not on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{d2_bound, vg_bound, BoundReport};
use crate::error::{Error, Result};
use crate::quad::QuadConfig;
use crate::stein::TestFunction;
use crate::vgdist::{expect, MomentBundle, VGParams};

/// Samples per block; part of the reproducibility contract.
pub const BLOCK_SIZE: u64 = 1 << 16;

/// Smallest allowed Monte Carlo sample count.
pub const MIN_SAMPLES: u64 = 10_000;

/// Range a fitted log-log slope must fall in to be consistent with a
/// `1/m` rate.
pub const RATE_WINDOW: (f64, f64) = (-1.4, -0.6);

pub const CSV_HEADER: &str =
    "m,n,r,law_x,law_y,h,n_samples,estimate,se,target,distance,gamma1,gamma2,gamma3,M2,M3,M4,bound,pass";

type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;

/// A user-supplied driving law. Draws are standardised with `mean` and `sd`;
/// `moments` must describe the standardised variable.
#[derive(Clone)]
pub struct CustomLaw {
    pub name: String,
    pub moments: MomentBundle,
    pub mean: f64,
    pub sd: f64,
    pub sampler: Sampler,
}

/// Law of the summands `X_{ik}` or `Y_{jk}`.
#[derive(Clone)]
pub enum Law {
    Rademacher,
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    UniformPm,
    Custom(CustomLaw),
}

impl fmt::Debug for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Law {
    pub fn parse(s: &str) -> Result<Law> {
        match s {
            "rademacher" => Ok(Law::Rademacher),
            "gaussian" => Ok(Law::Gaussian),
            "uniform_pm" => Ok(Law::UniformPm),
            other => Err(Error::domain(format!(
                "unknown law '{other}' (expected rademacher, gaussian, uniform_pm)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Law::Rademacher => "rademacher".into(),
            Law::Gaussian => "gaussian".into(),
            Law::UniformPm => "uniform_pm".into(),
            Law::Custom(c) => c.name.clone(),
        }
    }

    /// Moments of the standardised summand.
    pub fn moments(&self) -> MomentBundle {
        match self {
            Law::Rademacher => MomentBundle::rademacher(),
            Law::Gaussian => MomentBundle::gaussian(),
            Law::UniformPm => MomentBundle::uniform_pm(),
            Law::Custom(c) => c.moments,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Law::Custom(c) = self {
            if !(c.sd > 0.0) || !c.sd.is_finite() || !c.mean.is_finite() {
                return Err(Error::domain(format!("law '{}' needs finite mean and sd > 0", c.name)));
            }
            if c.name.contains(',') {
                return Err(Error::domain("law names may not contain commas"));
            }
        }
        self.moments().require_standardized()
    }

    /// `m^{-1/2} Σ_{i≤m} X_i`.
    fn draw_standardized_sum(&self, m: u64, rng: &mut ChaCha8Rng) -> f64 {
        let scale = 1.0 / (m as f64).sqrt();
        match self {
            Law::Rademacher => {
                let mut ones = 0u64;
                let mut left = m;
                while left >= 64 {
                    ones += rng.next_u64().count_ones() as u64;
                    left -= 64;
                }
                if left > 0 {
                    ones += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as u64;
                }
                (2 * ones) as f64 * scale - m as f64 * scale
            }
            // a sum of m standard normals over √m is exactly standard normal
            Law::Gaussian => rng.sample(StandardNormal),
            Law::UniformPm => {
                let a = 3f64.sqrt();
                (0..m).map(|_| rng.random_range(-a..a)).sum::<f64>() * scale
            }
            Law::Custom(c) => (0..m).map(|_| ((c.sampler)(rng) - c.mean) / c.sd).sum::<f64>() * scale,
        }
    }
}

/// One simulation cell.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub m: u64,
    pub n: u64,
    pub r: u32,
    pub law_x: Law,
    pub law_y: Law,
    pub n_samples: u64,
    pub seed: u64,
    pub h_suite: Vec<TestFunction>,
    /// Worker threads (`None`: the global rayon pool).
    pub threads: Option<usize>,
    /// Wall-clock budget; exceeding it yields [`Error::Partial`].
    pub time_budget: Option<Duration>,
}

impl SimConfig {
    pub fn new(m: u64, n: u64, r: u32, law_x: Law, law_y: Law, n_samples: u64, seed: u64) -> Self {
        SimConfig {
            m,
            n,
            r,
            law_x,
            law_y,
            n_samples,
            seed,
            h_suite: vec![TestFunction::cos()],
            threads: None,
            time_budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::domain("m and n must be >= 1"));
        }
        if self.r == 0 {
            return Err(Error::domain("r must be >= 1"));
        }
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::domain(format!("n_samples must be >= {MIN_SAMPLES}")));
        }
        if self.h_suite.is_empty() {
            return Err(Error::domain("h suite is empty"));
        }
        if self.h_suite.iter().any(|h| h.name.contains(',')) {
            return Err(Error::domain("test function names may not contain commas"));
        }
        if self.threads == Some(0) {
            return Err(Error::domain("threads must be >= 1"));
        }
        self.law_x.validate()?;
        self.law_y.validate()
    }
}

/// Result for one test function in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HEstimate {
    pub h: String,
    /// Empirical `E h(W)`.
    pub estimate: f64,
    pub se: f64,
    /// `E h(Z)` for `Z ~ VG(r, 0, 1, 0)`.
    pub target: f64,
    pub distance: f64,
    pub bound: BoundReport,
    /// `distance <= bound.total + 3 se`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub m: u64,
    pub n: u64,
    pub r: u32,
    pub law_x: String,
    pub law_y: String,
    pub n_samples: u64,
    pub seed: u64,
    pub per_h: Vec<HEstimate>,
}

/// `E h(Z)` for `Z ~ VG(r, 0, 1, 0)`: closed form where one exists,
/// quadrature otherwise.
pub fn vg_target(h: &TestFunction, r: u32) -> Result<f64> {
    let p = VGParams::new(r as f64, 0.0, 1.0, 0.0)?;
    match h.known_expectation(&p) {
        Some(v) => Ok(v),
        None => expect(&p, |x| h.eval(x), &QuadConfig::with_tolerances(1e-12, 1e-10)),
    }
}

/// `VGSTEIN_THREADS` as a worker count, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("VGSTEIN_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Per-block sums of `h(w) - target` and its square.
struct BlockSums {
    count: u64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

fn run_blocks<D>(
    n_samples: u64,
    seed: u64,
    threads: Option<usize>,
    budget: Option<Duration>,
    suite: &[TestFunction],
    targets: &[f64],
    draw: D,
) -> Result<BlockSums>
where
    D: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let n_blocks = n_samples.div_ceil(BLOCK_SIZE);
    let start = Instant::now();
    let work = || -> Vec<Option<BlockSums>> {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                if budget.is_some_and(|lim| start.elapsed() > lim) {
                    return None;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b);
                let count = BLOCK_SIZE.min(n_samples - b * BLOCK_SIZE);
                let mut sum = vec![0.0; suite.len()];
                let mut sumsq = vec![0.0; suite.len()];
                for _ in 0..count {
                    let w = draw(&mut rng);
                    for (i, h) in suite.iter().enumerate() {
                        let d = h.eval(w) - targets[i];
                        sum[i] += d;
                        sumsq[i] += d * d;
                    }
                }
                Some(BlockSums { count, sum, sumsq })
            })
            .collect()
    };
    let blocks = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut total = BlockSums { count: 0, sum: vec![0.0; suite.len()], sumsq: vec![0.0; suite.len()] };
    let mut missing = false;
    for block in blocks {
        match block {
            Some(b) => {
                total.count += b.count;
                for i in 0..suite.len() {
                    total.sum[i] += b.sum[i];
                    total.sumsq[i] += b.sumsq[i];
                }
            }
            None => missing = true,
        }
    }
    if missing {
        return Err(Error::Partial { completed: total.count, requested: n_samples });
    }
    Ok(total)
}

fn estimates(sums: &BlockSums, suite: &[TestFunction], targets: &[f64], bounds: Vec<BoundReport>) -> Vec<HEstimate> {
    let n = sums.count as f64;
    suite
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(i, (h, bound))| {
            let mean_dev = sums.sum[i] / n;
            let var = ((sums.sumsq[i] - sums.sum[i] * mean_dev) / (n - 1.0)).max(0.0);
            let se = (var / n).sqrt();
            let distance = mean_dev.abs();
            HEstimate {
                h: h.name.clone(),
                estimate: targets[i] + mean_dev,
                se,
                target: targets[i],
                distance,
                pass: distance <= bound.total + 3.0 * se,
                bound,
            }
        })
        .collect()
}

/// Simulates `W_r` and compares `E h(W_r)` with `VG(r, 0, 1, 0)` for each `h`.
pub fn simulate_w(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let (mx, my) = (cfg.law_x.moments(), cfg.law_y.moments());
    let mut targets = Vec::with_capacity(cfg.h_suite.len());
    let mut bounds = Vec::with_capacity(cfg.h_suite.len());
    for h in &cfg.h_suite {
        let t = vg_target(h, cfg.r)?;
        let norms = h.norms_with_target(t);
        bounds.push(if norms.validate().is_ok() {
            vg_bound(&mx, &my, cfg.m, cfg.n, cfg.r, &norms, true)?
        } else {
            BoundReport::unbounded(cfg.m, cfg.n, cfg.r)
        });
        targets.push(t);
    }
    let draw = |rng: &mut ChaCha8Rng| {
        (0..cfg.r)
            .map(|_| {
                let s = cfg.law_x.draw_standardized_sum(cfg.m, rng);
                let t = cfg.law_y.draw_standardized_sum(cfg.n, rng);
                s * t
            })
            .sum::<f64>()
    };
    let sums = run_blocks(cfg.n_samples, cfg.seed, cfg.threads, cfg.time_budget, &cfg.h_suite, &targets, draw)?;
    Ok(SimResult {
        m: cfg.m,
        n: cfg.n,
        r: cfg.r,
        law_x: cfg.law_x.name(),
        law_y: cfg.law_y.name(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        per_h: estimates(&sums, &cfg.h_suite, &targets, bounds),
    })
}

/// Binomial(m, 1/2) probabilities, built row by row without overflow.
fn half_binomial_row(m: u64) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..m {
        let mut next = vec![0.0; row.len() + 1];
        for (i, &p) in row.iter().enumerate() {
            next[i] += 0.5 * p;
            next[i + 1] += 0.5 * p;
        }
        row = next;
    }
    row
}

/// Exact law of `√(mn) W_r` (an integer) for Rademacher summands.
pub fn rademacher_lattice_law(m: u64, n: u64, r: u32) -> Result<BTreeMap<i64, f64>> {
    if m == 0 || n == 0 || r == 0 {
        return Err(Error::domain("m, n and r must be >= 1"));
    }
    if m > 1000 || n > 1000 || r > 8 {
        return Err(Error::domain("exact enumeration is limited to m, n <= 1000 and r <= 8"));
    }
    let (px, py) = (half_binomial_row(m), half_binomial_row(n));
    let mut single: BTreeMap<i64, f64> = BTreeMap::new();
    for (i, &p) in px.iter().enumerate() {
        let a = 2 * i as i64 - m as i64;
        for (j, &q) in py.iter().enumerate() {
            let b = 2 * j as i64 - n as i64;
            *single.entry(a * b).or_insert(0.0) += p * q;
        }
    }
    let mut law = single.clone();
    for _ in 1..r {
        let mut next = BTreeMap::new();
        for (&k1, &p1) in &law {
            for (&k2, &p2) in &single {
                *next.entry(k1 + k2).or_insert(0.0) += p1 * p2;
            }
        }
        law = next;
    }
    Ok(law)
}

/// `E h(W_r)` for Rademacher summands by exact enumeration.
pub fn enumerate_rademacher(m: u64, n: u64, r: u32, h: &dyn Fn(f64) -> f64) -> Result<f64> {
    let scale = 1.0 / ((m * n) as f64).sqrt();
    Ok(rademacher_lattice_law(m, n, r)?.iter().map(|(&k, &p)| p * h(k as f64 * scale)).sum())
}

/// `C(2k, k) 2^{-2k}` as the product `Π_{j≤k} (2j-1)/(2j)`.
fn central_binomial_mass(k: u64) -> f64 {
    (1..=k).map(|j| (2 * j - 1) as f64 / (2 * j) as f64).product()
}

/// `P(W = 0)` for Rademacher sums of lengths `m = 2k`, `n = 2l`, and its
/// Stirling approximation `√(2/πm) + √(2/πn) - 2/(π√(mn))` (the square
/// of the leading term of each central binomial mass gives the cross term).
pub fn nonsmooth_exact(k: u64, l: u64) -> Result<(f64, f64)> {
    if k == 0 || l == 0 {
        return Err(Error::domain("k and l must be >= 1"));
    }
    if k > 1_000_000 || l > 1_000_000 {
        return Err(Error::domain("k and l must be <= 10^6"));
    }
    let (pk, pl) = (central_binomial_mass(k), central_binomial_mass(l));
    let exact = pk + pl - pk * pl;
    let (m, n) = (2.0 * k as f64, 2.0 * l as f64);
    let pi = std::f64::consts::PI;
    let stirling = (2.0 / (pi * m)).sqrt() + (2.0 / (pi * n)).sqrt() - 2.0 / (pi * (m * n).sqrt());
    Ok((exact, stirling))
}

/// The approximation with cross term `4/(πmn)`, kept for comparison: that
/// term is not the product of the two leading terms and leaves an `O(1/√m)`
/// relative error (4.3% at `k = l = 50`).
pub fn nonsmooth_stirling_variant(k: u64, l: u64) -> f64 {
    let (m, n) = (2.0 * k as f64, 2.0 * l as f64);
    let pi = std::f64::consts::PI;
    (2.0 / (pi * m)).sqrt() + (2.0 / (pi * n)).sqrt() - 4.0 / (pi * m * n)
}

/// `(D₂, W)` for two binary sequences, `X`, `Y` counting zeros:
/// `D₂ = XY + (m-X)(n-Y)`, `W = (D₂ - mn/2) / √(mn/4)`.
pub fn d2_statistic(seq1: &[u8], seq2: &[u8]) -> Result<(u64, f64)> {
    if seq1.is_empty() || seq2.is_empty() {
        return Err(Error::domain("sequences must be non-empty"));
    }
    if seq1.iter().chain(seq2).any(|&b| b > 1) {
        return Err(Error::domain("sequences must contain only 0 and 1"));
    }
    let (m, n) = (seq1.len() as u64, seq2.len() as u64);
    let x = seq1.iter().filter(|&&b| b == 0).count() as u64;
    let y = seq2.iter().filter(|&&b| b == 0).count() as u64;
    Ok(d2_from_counts(m, n, x, y))
}

fn d2_from_counts(m: u64, n: u64, x: u64, y: u64) -> (u64, f64) {
    let d2 = x * y + (m - x) * (n - y);
    let mn = (m * n) as f64;
    (d2, (d2 as f64 - 0.5 * mn) / (0.25 * mn).sqrt())
}

/// Number of zeros among `len` uniform random bits.
fn count_zero_bits(len: u64, rng: &mut ChaCha8Rng) -> u64 {
    let mut ones = 0u64;
    let mut left = len;
    while left >= 64 {
        ones += rng.next_u64().count_ones() as u64;
        left -= 64;
    }
    if left > 0 {
        ones += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as u64;
    }
    len - ones
}

/// Simulates the standardised `D₂` statistic of two uniform binary sequences
/// and compares it with `VG(1, 0, 1, 0)` against the `min{A, B}` bound.
pub fn d2_experiment(
    m: u64,
    n: u64,
    n_sequences: u64,
    h_suite: &[TestFunction],
    seed: u64,
    threads: Option<usize>,
) -> Result<SimResult> {
    if m == 0 || n == 0 {
        return Err(Error::domain("m and n must be >= 1"));
    }
    if m.checked_mul(n).is_none_or(|mn| mn > 1 << 52) {
        return Err(Error::domain("m n too large"));
    }
    if n_sequences < MIN_SAMPLES {
        return Err(Error::domain(format!("n_sequences must be >= {MIN_SAMPLES}")));
    }
    if h_suite.is_empty() {
        return Err(Error::domain("h suite is empty"));
    }
    let mut targets = Vec::new();
    let mut bounds = Vec::new();
    for h in h_suite {
        let t = vg_target(h, 1)?;
        let norms = h.norms_with_target(t);
        bounds.push(if norms.validate().is_ok() {
            d2_bound(m, n, &norms)?.report
        } else {
            BoundReport::unbounded(m, n, 1)
        });
        targets.push(t);
    }
    let draw = |rng: &mut ChaCha8Rng| {
        let x = count_zero_bits(m, rng);
        let y = count_zero_bits(n, rng);
        d2_from_counts(m, n, x, y).1
    };
    let sums = run_blocks(n_sequences, seed, threads, None, h_suite, &targets, draw)?;
    Ok(SimResult {
        m,
        n,
        r: 1,
        law_x: "binary".into(),
        law_y: "binary".into(),
        n_samples: n_sequences,
        seed,
        per_h: estimates(&sums, h_suite, &targets, bounds),
    })
}

/// One point of a convergence-rate sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub m: f64,
    pub distance: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with only two points).
    pub slope_se: f64,
    /// The `m` values that passed the signal cut.
    pub used: Vec<f64>,
}

/// Least-squares line through `(xs, ys)`: `(slope, intercept, slope_se)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_se = if xs.len() > 2 { (rss / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, intercept, slope_se)
}

/// Slope of `log distance` against `log m`, using only points whose distance
/// exceeds five standard errors.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::domain("rate fit needs at least 4 grid points"));
    }
    let usable: Vec<&RatePoint> =
        points.iter().filter(|p| p.m > 0.0 && p.distance > 0.0 && p.distance > 5.0 * p.se).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientSignal(format!(
            "only {} of {} points have distance > 5 SE",
            usable.len(),
            points.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.m.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.distance.ln()).collect();
    let (slope, intercept, slope_se) = linear_fit(&xs, &ys);
    Ok(RateFit { slope, intercept, slope_se, used: usable.iter().map(|p| p.m).collect() })
}

/// Rate points for test function `h` across a sweep (`m` as the abscissa).
pub fn rate_points(results: &[SimResult], h: &str) -> Vec<RatePoint> {
    results
        .iter()
        .filter_map(|r| {
            r.per_h
                .iter()
                .find(|e| e.h == h)
                .map(|e| RatePoint { m: r.m as f64, distance: e.distance, se: e.se })
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV line per test function of `result` (no trailing newline).
pub fn csv_rows(result: &SimResult) -> Vec<String> {
    result
        .per_h
        .iter()
        .map(|e| {
            let b = &e.bound;
            [
                result.m.to_string(),
                result.n.to_string(),
                result.r.to_string(),
                result.law_x.clone(),
                result.law_y.clone(),
                e.h.clone(),
                result.n_samples.to_string(),
                num(e.estimate),
                num(e.se),
                num(e.target),
                num(e.distance),
                num(b.gamma1),
                num(b.gamma2),
                num(b.gamma3),
                num(b.m2),
                num(b.m3),
                num(b.m4),
                num(b.total),
                e.pass.to_string(),
            ]
            .join(",")
        })
        .collect()
}

/// Summary line for a rate fit: `m` is `slope`, `n_samples` the number of
/// points used, `estimate` the slope, `se` its standard error, `pass` whether
/// the slope lies in [`RATE_WINDOW`].
pub fn csv_slope_row(r: u32, law_x: &str, law_y: &str, h: &str, fit: &Result<RateFit>) -> String {
    let empty = String::new();
    let (used, slope, se, pass) = match fit {
        Ok(f) => (
            f.used.len().to_string(),
            num(f.slope),
            num(f.slope_se),
            (RATE_WINDOW.0..=RATE_WINDOW.1).contains(&f.slope).to_string(),
        ),
        Err(_) => ("0".to_string(), "NaN".to_string(), "NaN".to_string(), "false".to_string()),
    };
    let mut cols = vec![
        "slope".to_string(),
        empty.clone(),
        r.to_string(),
        law_x.to_string(),
        law_y.to_string(),
        h.to_string(),
        used,
        slope,
        se,
    ];
    cols.extend(std::iter::repeat_n(empty, 9));
    cols.push(pass);
    cols.join(",")
}

/// Writes the header and the rows of `results`.
pub fn write_csv<W: Write>(out: &mut W, results: &[SimResult], extra_rows: &[String]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in results {
        for line in csv_rows(r) {
            writeln!(out, "{line}")?;
        }
    }
    for line in extra_rows {
        writeln!(out, "{line}")?;
    }
    Ok(())
}
