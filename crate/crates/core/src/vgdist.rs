//! The Variance-Gamma family: parametrisations, density, distribution
//! function, moments, sampling and special cases.
//!
//! Two parametrisations are used throughout. The first, `(r, θ, σ, μ)`, is
//! the shape / skew / scale / location form stored in [`VGParams`]; the
//! second, `(ν, α, β, μ)` with `ν = (r-1)/2`, `α = √(θ²+σ²)/σ²`,
//! `β = θ/σ²`, is convenient for the Stein solution and is available via
//! [`VGParams::second`].

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::bessel::{bessel_k, bessel_k_pow_scaled};
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};

/// One Variance-Gamma law in the `(r, θ, σ, μ)` parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VGParams {
    pub r: f64,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
}

/// The same law in the `(ν, α, β, μ)` parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondParams {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

/// Named members and limits of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecialCase {
    Laplace { mu: f64, sigma: f64 },
    /// Product of two centred jointly normal variables with correlation `rho`.
    ProductNormal { sigma_x: f64, sigma_y: f64, rho: f64 },
    /// Difference `X - Y` of correlated gamma variables with rates `lambda1`, `lambda2`.
    GammaDifference { r: f64, lambda1: f64, lambda2: f64, rho: f64 },
    /// Only reached as `r → ∞`; not a finite parameter set.
    Normal { mu: f64, sigma: f64 },
    /// Only reached as `σ → 0`; not a finite parameter set.
    Gamma { shape: f64, rate: f64 },
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

impl VGParams {
    pub fn new(r: f64, theta: f64, sigma: f64, mu: f64) -> Result<Self> {
        finite("r", r)?;
        finite("theta", theta)?;
        finite("sigma", sigma)?;
        finite("mu", mu)?;
        if !(r > 0.0) {
            return Err(Error::domain(format!("r must be > 0, got {r}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(VGParams { r, theta, sigma, mu })
    }

    /// Builds the law from `(ν, α, β, μ)`; requires `ν > -1/2` and `α > |β|`.
    pub fn from_second(nu: f64, alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        finite("nu", nu)?;
        finite("alpha", alpha)?;
        finite("beta", beta)?;
        if !(nu > -0.5) {
            return Err(Error::domain(format!("nu must be > -1/2, got {nu}")));
        }
        if !(alpha > beta.abs()) {
            return Err(Error::domain(format!("need alpha > |beta|, got alpha={alpha}, beta={beta}")));
        }
        let sigma2 = 1.0 / ((alpha - beta) * (alpha + beta));
        VGParams::new(2.0 * nu + 1.0, beta * sigma2, sigma2.sqrt(), mu)
    }

    pub fn validate(&self) -> Result<()> {
        VGParams::new(self.r, self.theta, self.sigma, self.mu).map(|_| ())
    }

    pub fn nu(&self) -> f64 {
        0.5 * (self.r - 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.theta.hypot(self.sigma) / (self.sigma * self.sigma)
    }

    pub fn beta(&self) -> f64 {
        self.theta / (self.sigma * self.sigma)
    }

    pub fn second(&self) -> SecondParams {
        SecondParams {
            nu: self.nu(),
            alpha: self.alpha(),
            beta: self.beta(),
            mu: self.mu,
        }
    }

    /// `α - β`, the right-tail decay rate, computed without cancellation.
    pub fn right_rate(&self) -> f64 {
        let s = self.theta.hypot(self.sigma);
        if self.theta > 0.0 {
            1.0 / (s + self.theta)
        } else {
            (s - self.theta) / (self.sigma * self.sigma)
        }
    }

    /// `α + β`, the left-tail decay rate.
    pub fn left_rate(&self) -> f64 {
        let s = self.theta.hypot(self.sigma);
        if self.theta < 0.0 {
            1.0 / (s - self.theta)
        } else {
            (s + self.theta) / (self.sigma * self.sigma)
        }
    }

    pub fn laplace(mu: f64, sigma: f64) -> Result<Self> {
        VGParams::new(2.0, 0.0, sigma, mu)
    }

    pub fn product_normal(sigma_x: f64, sigma_y: f64, rho: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) {
            return Err(Error::domain("product_normal needs sigma_x, sigma_y > 0"));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::domain(format!("product_normal needs |rho| < 1, got {rho}")));
        }
        let s = sigma_x * sigma_y;
        VGParams::new(1.0, rho * s, s * (1.0 - rho * rho).sqrt(), 0.0)
    }

    pub fn gamma_difference(r: f64, lambda1: f64, lambda2: f64, rho: f64) -> Result<Self> {
        if !(r > 0.0 && lambda1 > 0.0 && lambda2 > 0.0) {
            return Err(Error::domain("gamma_difference needs r, lambda1, lambda2 > 0"));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::domain(format!("gamma_difference needs |rho| < 1, got {rho}")));
        }
        let theta = 0.5 / lambda1 - 0.5 / lambda2;
        let sigma = (1.0 - rho).sqrt() / (lambda1 * lambda2).sqrt();
        VGParams::new(2.0 * r, theta, sigma, 0.0)
    }

    pub fn from_special_case(case: SpecialCase) -> Result<Self> {
        match case {
            SpecialCase::Laplace { mu, sigma } => VGParams::laplace(mu, sigma),
            SpecialCase::ProductNormal { sigma_x, sigma_y, rho } => {
                VGParams::product_normal(sigma_x, sigma_y, rho)
            }
            SpecialCase::GammaDifference { r, lambda1, lambda2, rho } => {
                VGParams::gamma_difference(r, lambda1, lambda2, rho)
            }
            SpecialCase::Normal { .. } => Err(Error::domain(
                "the normal law is the r → ∞ limit of VG(r, 0, σ/√r, μ), not a finite parameter set; \
                 see the normal-limit checks instead",
            )),
            SpecialCase::Gamma { .. } => Err(Error::domain(
                "the gamma law is the σ → 0 limit of VG(2r, 1/(2λ), σ, 0), not a finite parameter set; \
                 see the gamma-limit checks instead",
            )),
        }
    }
}

/// `ln` of the normalising constant `(α²-β²)^{ν+1/2} / (√π Γ(ν+1/2))`.
fn log_norm_second(p: &VGParams) -> f64 {
    let nu = p.nu();
    -(nu + 0.5) * (p.sigma * p.sigma).ln() - 0.5 * PI.ln() - ln_gamma(nu + 0.5)
}

/// Density in the `(ν, α, β, μ)` form, evaluated through `x^ν e^x K_ν(x)`.
///
/// At `x = μ` the density is finite for `ν > 0` and `+∞` for `ν <= 0`.
pub fn density(p: &VGParams, x: f64) -> f64 {
    density_offset(p, x - p.mu)
}

/// Density at `μ + z`, taking the offset `z` directly so that points
/// closer to `μ` than its float spacing stay distinguishable.
pub fn density_offset(p: &VGParams, z: f64) -> f64 {
    let nu = p.nu();
    let alpha = p.alpha();
    let u = alpha * z.abs();
    // exponent β z - α |z| is -(α-β) z on the right and (α+β) z on the left
    let decay = if z >= 0.0 { -p.right_rate() * z } else { p.left_rate() * z };
    let core = bessel_k_pow_scaled(nu, u).unwrap_or(f64::NAN);
    if core.is_infinite() {
        return f64::INFINITY;
    }
    let log_pre = log_norm_second(p) - nu * (2.0 * alpha * alpha).ln() + decay;
    log_pre.exp() * core
}

/// Density in the `(r, θ, σ, μ)` form, evaluated through `e^x K_ν(x)`.
pub fn density_first_form(p: &VGParams, x: f64) -> f64 {
    let nu = p.nu();
    let s = p.theta.hypot(p.sigma);
    let s2 = p.sigma * p.sigma;
    let z = x - p.mu;
    if z == 0.0 {
        return density(p, x);
    }
    let arg = s * z.abs() / s2;
    let k = match bessel_k(nu, arg, true) {
        Ok(v) => v,
        Err(_) => return density(p, x),
    };
    let log_pre = -p.sigma.ln() - 0.5 * PI.ln() - ln_gamma(0.5 * p.r)
        + nu * (z.abs() / (2.0 * s)).ln()
        + p.theta * z / s2
        - arg;
    log_pre.exp() * k
}

/// Leading-order tail density
/// `((α²-β²)/(2α))^{ν+1/2} / Γ(ν+1/2) · |x-μ|^{ν-1/2} · e^{-(α∓β)|x-μ|}`.
pub fn tail_asymptote(p: &VGParams, x: f64) -> f64 {
    let nu = p.nu();
    let alpha = p.alpha();
    let z = x - p.mu;
    let rate = if z >= 0.0 { p.right_rate() } else { p.left_rate() };
    let c = (nu + 0.5) * (1.0 / (p.sigma * p.sigma * 2.0 * alpha)).ln() - ln_gamma(nu + 0.5);
    (c + (nu - 0.5) * z.abs().ln() - rate * z.abs()).exp()
}

fn cdf_config() -> QuadConfig {
    QuadConfig::with_tolerances(1e-13, 1e-10)
}

/// `P(X <= x)` by quadrature of the density from the nearer tail.
pub fn cdf(p: &VGParams, x: f64) -> Result<f64> {
    p.validate()?;
    if x.is_nan() {
        return Err(Error::domain("cdf argument is NaN"));
    }
    if x == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let cfg = cdf_config();
    let f = |z: f64| density_offset(p, z);
    let z = x - p.mu;
    let v = if z <= 0.0 {
        integrate(f, f64::NEG_INFINITY, z, &[], &cfg)?.value
    } else {
        1.0 - integrate(f, z, f64::INFINITY, &[], &cfg)?.value
    };
    Ok(v.clamp(0.0, 1.0))
}

/// `∫_a^b density`, split at `μ` when it lies inside.
pub fn probability_between(p: &VGParams, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Ok(0.0);
    }
    let r = integrate(|z| density_offset(p, z), a - p.mu, b - p.mu, &[0.0], &cdf_config())?;
    Ok(r.value)
}

/// `E h(X)` by quadrature over the real line.
pub fn expect<H: Fn(f64) -> f64>(p: &VGParams, h: H, cfg: &QuadConfig) -> Result<f64> {
    p.validate()?;
    let (mean, var) = mean_variance(p);
    let sd = var.sqrt();
    // integrate in the offset z = x - μ, splitting at the kink z = 0
    let splits = [0.0, mean - p.mu - 8.0 * sd, mean - p.mu + 8.0 * sd];
    let integrand = |z: f64| {
        let d = density_offset(p, z);
        if d == 0.0 {
            0.0
        } else {
            h(p.mu + z) * d
        }
    };
    Ok(integrate(integrand, f64::NEG_INFINITY, f64::INFINITY, &splits, cfg)?.value)
}

/// `(E X, Var X) = (μ + rθ, r(σ² + 2θ²))`.
pub fn mean_variance(p: &VGParams) -> (f64, f64) {
    (p.mu + p.r * p.theta, p.r * (p.sigma * p.sigma + 2.0 * p.theta * p.theta))
}

/// Raw moments `M_0..=M_{k_max}` of a law with `μ = 0`, from the recurrence
/// `M_{k+1} = θ(2k+r) M_k + σ² k (r+k-1) M_{k-1}`.
pub fn moments(p: &VGParams, k_max: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if p.mu != 0.0 {
        return Err(Error::domain("moment recurrence requires mu = 0; shift the variable first"));
    }
    if k_max < 1 {
        return Err(Error::domain("k_max must be >= 1"));
    }
    let s2 = p.sigma * p.sigma;
    let mut m = Vec::with_capacity(k_max + 1);
    m.push(1.0);
    m.push(p.r * p.theta);
    for k in 1..k_max {
        let kf = k as f64;
        let next = p.theta * (2.0 * kf + p.r) * m[k] + s2 * kf * (p.r + kf - 1.0) * m[k - 1];
        m.push(next);
    }
    Ok(m)
}

/// Moment generating function `E e^{tX} = e^{μt} (1 - 2θt - σ²t²)^{-r/2}`,
/// defined for `|t + β| < α`.
pub fn mgf(p: &VGParams, t: f64) -> Result<f64> {
    p.validate()?;
    let q = 1.0 - 2.0 * p.theta * t - p.sigma * p.sigma * t * t;
    if !t.is_finite() || !(q > 0.0) {
        return Err(Error::domain(format!(
            "t = {t} lies outside the strip |t + beta| < alpha where the MGF exists"
        )));
    }
    Ok((p.mu * t - 0.5 * p.r * q.ln()).exp())
}

/// Draws one variate via `μ + θV + σ√V·U`, `V ~ Γ(r/2, rate 1/2)`, `U ~ N(0,1)`.
pub struct VGSampler {
    params: VGParams,
    mixing: Gamma<f64>,
}

impl VGSampler {
    pub fn new(p: &VGParams) -> Result<Self> {
        p.validate()?;
        let mixing = Gamma::new(0.5 * p.r, 2.0)
            .map_err(|e| Error::domain(format!("invalid gamma mixing law: {e}")))?;
        Ok(VGSampler { params: *p, mixing })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = self.mixing.sample(rng);
        let u: f64 = rng.sample(StandardNormal);
        let p = &self.params;
        p.mu + p.theta * v + p.sigma * v.sqrt() * u
    }
}

/// `n` variates from a ChaCha stream seeded with `seed`.
pub fn sample(p: &VGParams, seed: u64, n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::domain("sample size must be >= 1"));
    }
    let sampler = VGSampler::new(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Sum of independent laws sharing `θ` and `σ`.
pub fn convolve(p1: &VGParams, p2: &VGParams) -> Result<VGParams> {
    p1.validate()?;
    p2.validate()?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
    if !close(p1.theta, p2.theta) || !close(p1.sigma, p2.sigma) {
        return Err(Error::domain(format!(
            "convolution needs equal theta and sigma, got ({}, {}) and ({}, {})",
            p1.theta, p1.sigma, p2.theta, p2.sigma
        )));
    }
    VGParams::new(p1.r + p2.r, p1.theta, p1.sigma, p1.mu + p2.mu)
}

/// Upper bound on the Kolmogorov distance between the empirical law of
/// `samples` and `p`.
///
/// The exact distribution function is evaluated at every `stride`-th order
/// statistic (cumulatively, so each step is one short integral) and
/// monotonicity bounds the gap in between; the result exceeds the true
/// statistic by at most `stride / n`.
pub fn ks_distance_bound(p: &VGParams, samples: &[f64], stride: usize) -> Result<f64> {
    if samples.is_empty() || stride == 0 {
        return Err(Error::domain("need a non-empty sample and stride >= 1"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let mut f_prev = cdf(p, xs[idx[0]])?;
    let mut d = f_prev.max(((idx[0] + 1) as f64 / nf - f_prev).abs());
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let f_next = (f_prev + probability_between(p, xs[a], xs[b])?).min(1.0);
        // On [x_a, x_b): F_n ∈ [(a+1)/n, b/n], F ∈ [F(x_a), F(x_b)].
        d = d.max(b as f64 / nf - f_prev).max(f_next - (a + 1) as f64 / nf);
        d = d.max(((b + 1) as f64 / nf - f_next).abs());
        f_prev = f_next;
    }
    d = d.max(1.0 - f_prev);
    Ok(d)
}

/// Raw and absolute moments of a driving variable, through order six.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBundle {
    /// `raw[k-1] = E X^k` for `k = 1..=6`.
    pub raw: [f64; 6],
    /// `E|X|³`.
    pub abs3: f64,
    /// `E|X|⁵`.
    pub abs5: f64,
}

impl MomentBundle {
    pub fn ex(&self, k: usize) -> f64 {
        self.raw[k - 1]
    }

    /// Standard normal: `E|X|^k = 2^{k/2} Γ((k+1)/2) / √π`.
    pub fn gaussian() -> Self {
        let abs = |k: f64| 2f64.powf(0.5 * k) * gamma(0.5 * (k + 1.0)) / PI.sqrt();
        MomentBundle {
            raw: [0.0, 1.0, 0.0, 3.0, 0.0, 15.0],
            abs3: abs(3.0),
            abs5: abs(5.0),
        }
    }

    /// `±1` with probability one half each.
    pub fn rademacher() -> Self {
        MomentBundle {
            raw: [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            abs3: 1.0,
            abs5: 1.0,
        }
    }

    /// Uniform on `[-√3, √3]`, `E|X|^k = 3^{k/2}/(k+1)`.
    pub fn uniform_pm() -> Self {
        let even = |k: i32| 3f64.powi(k / 2) / (k as f64 + 1.0);
        let abs = |k: f64| 3f64.powf(0.5 * k) / (k + 1.0);
        MomentBundle {
            raw: [0.0, 1.0, 0.0, even(4), 0.0, even(6)],
            abs3: abs(3.0),
            abs5: abs(5.0),
        }
    }

    /// Standardises `samples` (mean 0, variance 1) and returns its moments.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::domain("need at least two samples"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::domain("samples have zero variance"));
        }
        let sd = var.sqrt();
        let mut raw = [0.0; 6];
        let mut abs3 = 0.0;
        let mut abs5 = 0.0;
        for &x in samples {
            let z = (x - mean) / sd;
            let mut pw = 1.0;
            for r in raw.iter_mut() {
                pw *= z;
                *r += pw;
            }
            abs3 += z.abs().powi(3);
            abs5 += z.abs().powi(5);
        }
        for r in raw.iter_mut() {
            *r /= n;
        }
        Ok(MomentBundle { raw, abs3: abs3 / n, abs5: abs5 / n })
    }

    /// Checks the moment inequalities every genuine law satisfies.
    pub fn validate(&self) -> Result<()> {
        if self.raw.iter().chain([self.abs3, self.abs5].iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("moments must be finite"));
        }
        let slack = 1e-12;
        if self.ex(2) + slack < self.ex(1).powi(2) {
            return Err(Error::domain("E X^2 < (E X)^2"));
        }
        if self.ex(4) + slack < self.ex(2).powi(2) {
            return Err(Error::domain("E X^4 < (E X^2)^2"));
        }
        if self.abs3 + slack < self.ex(3).abs() || self.abs5 + slack < self.ex(5).abs() {
            return Err(Error::domain("absolute moments smaller than raw moments"));
        }
        Ok(())
    }

    /// Requires zero mean and unit variance (to `1e-9`).
    pub fn require_standardized(&self) -> Result<()> {
        self.validate()?;
        if self.ex(1).abs() > 1e-9 || (self.ex(2) - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "moments must be standardised (mean 0, variance 1), got mean {} and E X^2 {}",
                self.ex(1),
                self.ex(2)
            )));
        }
        Ok(())
    }
}
