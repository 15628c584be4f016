//! Globally adaptive Gauss–Kronrod integration.
//!
//! Every integral in the crate goes through [`integrate`]. The range is cut
//! at the caller's split points into pieces; infinite pieces are mapped onto
//! `[0, 1)` with `x = a ± t/(1 - t)`, which keeps full resolution next to
//! the finite end. A single priority queue holds the
//! subintervals of all pieces and the one with the largest error estimate is
//! bisected until the total error meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Subintervals whose error estimate falls below this fraction of the
    /// running estimate are retired and never bisected again.
    pub tail_cut_epsilon: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
            tail_cut_epsilon: 1e-16,
        }
    }
}

impl QuadConfig {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        QuadConfig {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.abs_tol) || !positive(self.rel_tol) || !positive(self.tail_cut_epsilon) {
            return Err(Error::domain("quadrature tolerances must be finite and > 0"));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::domain("max_subdivisions must be >= 1"));
        }
        Ok(())
    }
}

/// Value and error estimate of a definite integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub err_estimate: f64,
    pub evaluations: usize,
    pub subdivisions: usize,
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_349_376,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
enum Piece {
    Finite,
    /// `[origin, +inf)` mapped by `x = origin + t/(1 - t)`.
    RightInfinite(f64),
    /// `(-inf, origin]` mapped by `x = origin - t/(1 - t)`.
    LeftInfinite(f64),
}

impl Piece {
    #[inline]
    fn eval<F: Fn(f64) -> f64>(&self, f: &F, t: f64, lo: f64, hi: f64) -> f64 {
        // Nodes of very narrow intervals can round onto an endpoint, where a
        // declared singularity may sit; keep them strictly inside.
        let t = if t <= lo {
            lo.next_up()
        } else if t >= hi {
            hi.next_down()
        } else {
            t
        };
        match *self {
            Piece::Finite => f(t),
            Piece::RightInfinite(o) | Piece::LeftInfinite(o) => {
                let s = 1.0 - t;
                if s <= 0.0 {
                    return 0.0;
                }
                let u = t / s;
                let x = match self {
                    Piece::RightInfinite(_) => {
                        let x = o + u;
                        if x <= o { o.next_up() } else { x }
                    }
                    _ => {
                        let x = o - u;
                        if x >= o { o.next_down() } else { x }
                    }
                };
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v / (s * s)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    piece: usize,
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, piece: Piece, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let abs_half = half.abs();

    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    let fc = piece.eval(f, center, lo, hi);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = piece.eval(f, center - dx, lo, hi);
        let f2 = piece.eval(f, center + dx, lo, hi);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    if !res_k.is_finite() {
        return Err(Error::domain(format!(
            "integrand is not finite on the subinterval [{lo}, {hi}]"
        )));
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    res_abs *= abs_half;
    res_asc *= abs_half;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((result, err))
}

/// Integrates `f` over `(a, b)`, either end possibly infinite.
///
/// `split_points` inside `(a, b)` are always subinterval boundaries, so
/// integrable singularities and kinks may sit there. On success
/// `err_estimate <= max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F>(f: F, a: f64, b: f64, split_points: &[f64], cfg: &QuadConfig) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if a.is_nan() || b.is_nan() || !(a < b) {
        return Err(Error::domain(format!("integration limits must satisfy a < b (got {a}, {b})")));
    }

    let mut cuts: Vec<f64> = split_points
        .iter()
        .copied()
        .filter(|s| s.is_finite() && *s > a && *s < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if a == f64::NEG_INFINITY && b == f64::INFINITY && cuts.is_empty() {
        cuts.push(0.0);
    }

    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(a);
    bounds.extend(cuts);
    bounds.push(b);

    let mut pieces = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut retired: Vec<Segment> = Vec::new();
    let mut evaluations = 0usize;
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (piece, tlo, thi) = if lo == f64::NEG_INFINITY {
            (Piece::LeftInfinite(hi), 0.0, 1.0)
        } else if hi == f64::INFINITY {
            (Piece::RightInfinite(lo), 0.0, 1.0)
        } else {
            (Piece::Finite, lo, hi)
        };
        let idx = pieces.len();
        pieces.push(piece);
        let (value, err) = kronrod21(&f, piece, tlo, thi)?;
        evaluations += 21;
        heap.push(Segment { piece: idx, lo: tlo, hi: thi, value, err });
    }

    let totals = |heap: &BinaryHeap<Segment>, retired: &[Segment]| {
        heap.iter()
            .chain(retired.iter())
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err))
    };

    let mut subdivisions = 0usize;
    loop {
        let (value, err) = totals(&heap, &retired);
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if err <= tol {
            return Ok(Integral { value, err_estimate: err, evaluations, subdivisions });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => {
                return Err(Error::Accuracy {
                    message: "no subinterval can be refined further".into(),
                    estimate: value,
                    err_estimate: err,
                })
            }
        };
        if subdivisions >= cfg.max_subdivisions {
            heap.push(worst);
            return Err(Error::Accuracy {
                message: format!("not converged after {} subdivisions", cfg.max_subdivisions),
                estimate: value,
                err_estimate: err,
            });
        }
        let mid = 0.5 * (worst.lo + worst.hi);
        let too_narrow = !(mid > worst.lo && mid < worst.hi)
            || (worst.hi - worst.lo) <= 4.0 * f64::EPSILON * worst.lo.abs().max(worst.hi.abs());
        if too_narrow || worst.err <= cfg.tail_cut_epsilon * value.abs() {
            retired.push(worst);
            continue;
        }
        let piece = pieces[worst.piece];
        let (v1, e1) = kronrod21(&f, piece, worst.lo, mid)?;
        let (v2, e2) = kronrod21(&f, piece, mid, worst.hi)?;
        evaluations += 42;
        subdivisions += 1;
        heap.push(Segment { piece: worst.piece, lo: worst.lo, hi: mid, value: v1, err: e1 });
        heap.push(Segment { piece: worst.piece, lo: mid, hi: worst.hi, value: v2, err: e2 });
    }
}

/// `∫ h(x) density(x) dx` over `support`, split at the density's kink.
pub fn expectation<H, D>(h: H, density: D, support: (f64, f64), kink: f64, cfg: &QuadConfig) -> Result<f64>
where
    H: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let integrand = |x: f64| {
        let p = density(x);
        if p == 0.0 {
            0.0
        } else {
            h(x) * p
        }
    };
    let splits = [kink];
    integrate(integrand, support.0, support.1, &splits, cfg).map(|r| r.value)
}
