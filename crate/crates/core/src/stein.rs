//! The Variance-Gamma Stein operator, its bounded solution, and the
//! smoothness constants for that solution.
//!
//! The operator for `VG(r, θ, σ, μ)` is
//!
//! ```text
//! A f(x) = σ²(x-μ) f''(x) + (σ²r + 2θ(x-μ)) f'(x) + (rθ - (x-μ)) f(x).
//! ```
//!
//! `A f = h - E h(X)` is solved by moving to the normalised law
//! `W = α(X - μ) ~ VG(ν, 1, b, 0)` with `b = β/α ∈ (-1, 1)`, where the solution
//! is an explicit combination of `I_ν` and `K_ν` weighted integrals of the
//! centred test function. For `w > 0`,
//!
//! ```text
//! g(w) = -e^{-bw} K_ν(w) w^{-ν} ∫_0^w e^{by} y^ν I_ν(y) ĥ(y) dy
//!        -e^{-bw} I_ν(w) w^{-ν} ∫_w^∞ e^{by} y^ν K_ν(y) ĥ(y) dy
//! ```
//!
//! and for `w < 0` the reflection `g(w) = -G(-w)` of the same formula with
//! `b → -b`, `ĥ → ĥ(-·)` is used; it is equivalent (the two tail integrals of
//! the `K` kernel agree because `E ĥ(W) = 0`) but keeps every exponential
//! factor bounded by one. The original-scale solution is
//! `f(x) = g(α(x-μ)) / (σ²α)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::bessel::{bessel_i_reduced_scaled, bessel_k_pow_scaled};
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};
use crate::vgdist::{density, expect, mean_variance, VGParams};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Sup-norms of a test function that enter the smoothness constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HNorms {
    /// `‖h - E h(X)‖∞` (or an upper bound for it).
    pub centered: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl HNorms {
    pub fn zero() -> Self {
        HNorms { centered: 0.0, d1: 0.0, d2: 0.0, d3: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("centered", self.centered), ("d1", self.d1), ("d2", self.d2), ("d3", self.d3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("norm {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A test function `h` with optional derivatives and declared sup-norms.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    h: RealFn,
    derivs: [Option<RealFn>; 3],
    /// `‖h‖∞`; infinite for unbounded `h`.
    pub sup_norm: f64,
    /// `‖h'‖∞, ‖h''‖∞, ‖h'''‖∞`; infinite when unknown or unbounded.
    pub deriv_norms: [f64; 3],
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .field("deriv_norms", &self.deriv_norms)
            .finish()
    }
}

impl TestFunction {
    /// A function without derivative information.
    pub fn new<F>(name: impl Into<String>, h: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        TestFunction {
            name: name.into(),
            h: Arc::new(h),
            derivs: [None, None, None],
            sup_norm: f64::INFINITY,
            deriv_norms: [f64::INFINITY; 3],
        }
    }

    pub fn with_sup_norm(mut self, sup: f64) -> Self {
        self.sup_norm = sup;
        self
    }

    /// Attaches the `k`-th derivative (`k = 1, 2, 3`) and its sup-norm.
    pub fn with_derivative<F>(mut self, k: usize, d: F, norm: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        assert!((1..=3).contains(&k), "derivative order must be 1, 2 or 3");
        self.derivs[k - 1] = Some(Arc::new(d));
        self.deriv_norms[k - 1] = norm;
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    /// `h^{(k)}(x)` for `k = 0..=3`, if that derivative was supplied.
    pub fn derivative(&self, k: usize, x: f64) -> Option<f64> {
        match k {
            0 => Some(self.eval(x)),
            1..=3 => self.derivs[k - 1].as_ref().map(|d| d(x)),
            _ => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_finite()
    }

    /// Norms with `‖h - E h‖` bounded by `‖h‖ + |E h|` (zero for constants).
    pub fn norms_with_target(&self, target: f64) -> HNorms {
        let constant = self.deriv_norms.iter().all(|&d| d == 0.0);
        HNorms {
            centered: if constant { 0.0 } else { self.sup_norm + target.abs() },
            d1: self.deriv_norms[0],
            d2: self.deriv_norms[1],
            d3: self.deriv_norms[2],
        }
    }

    /// Largest `|h^{(k)}|` on `grid` for `k = 0..=3` (NaN where absent).
    pub fn sampled_sup(&self, grid: &[f64]) -> [f64; 4] {
        let mut out = [f64::NAN; 4];
        for (k, slot) in out.iter_mut().enumerate() {
            if self.derivative(k, 0.0).is_some() {
                *slot = grid
                    .iter()
                    .map(|&x| self.derivative(k, x).unwrap().abs())
                    .fold(0.0, f64::max);
            }
        }
        out
    }

    pub fn cos() -> Self {
        TestFunction::new("cos", f64::cos)
            .with_sup_norm(1.0)
            .with_derivative(1, |x: f64| -x.sin(), 1.0)
            .with_derivative(2, |x: f64| -x.cos(), 1.0)
            .with_derivative(3, f64::sin, 1.0)
    }

    pub fn sin() -> Self {
        TestFunction::new("sin", f64::sin)
            .with_sup_norm(1.0)
            .with_derivative(1, f64::cos, 1.0)
            .with_derivative(2, |x: f64| -x.sin(), 1.0)
            .with_derivative(3, |x: f64| -x.cos(), 1.0)
    }

    pub fn tanh() -> Self {
        TestFunction::new("tanh", f64::tanh)
            .with_sup_norm(1.0)
            .with_derivative(1, |x: f64| 1.0 - x.tanh().powi(2), 1.0)
            .with_derivative(
                2,
                |x: f64| {
                    let t = x.tanh();
                    -2.0 * t * (1.0 - t * t)
                },
                4.0 / (3.0 * 3f64.sqrt()),
            )
            .with_derivative(
                3,
                |x: f64| {
                    let t = x.tanh();
                    -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t)
                },
                2.0,
            )
    }

    /// `e^{-x²/2}`.
    pub fn gaussian_bump() -> Self {
        let s = 3.0 - 6f64.sqrt();
        let d3_norm = s.sqrt() * 6f64.sqrt() * (-0.5 * s).exp();
        TestFunction::new("bump", |x: f64| (-0.5 * x * x).exp())
            .with_sup_norm(1.0)
            .with_derivative(1, |x: f64| -x * (-0.5 * x * x).exp(), (-0.5f64).exp())
            .with_derivative(2, |x: f64| (x * x - 1.0) * (-0.5 * x * x).exp(), 1.0)
            .with_derivative(3, |x: f64| (3.0 * x - x * x * x) * (-0.5 * x * x).exp(), d3_norm)
    }

    /// The constant function `1` (all centred norms vanish).
    pub fn one() -> Self {
        TestFunction::new("one", |_| 1.0)
            .with_sup_norm(1.0)
            .with_derivative(1, |_| 0.0, 0.0)
            .with_derivative(2, |_| 0.0, 0.0)
            .with_derivative(3, |_| 0.0, 0.0)
    }

    /// `1{x = 0}`: not smooth, and a null set for every VG law.
    pub fn indicator_zero() -> Self {
        TestFunction::new("indicator0", |x: f64| if x == 0.0 { 1.0 } else { 0.0 }).with_sup_norm(1.0)
    }

    /// `h(x) = x^k`, unbounded.
    pub fn monomial(k: i32) -> Self {
        TestFunction::new(format!("x^{k}"), move |x: f64| x.powi(k))
    }

    /// Looks up a built-in function by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cos" => Ok(TestFunction::cos()),
            "sin" => Ok(TestFunction::sin()),
            "tanh" => Ok(TestFunction::tanh()),
            "bump" => Ok(TestFunction::gaussian_bump()),
            "one" => Ok(TestFunction::one()),
            "indicator0" => Ok(TestFunction::indicator_zero()),
            "x" => Ok(TestFunction::monomial(1)),
            "x2" => Ok(TestFunction::monomial(2)),
            other => Err(Error::domain(format!(
                "unknown test function '{other}' (expected cos, sin, tanh, bump, one, indicator0, x, x2)"
            ))),
        }
    }

    /// Closed-form `E h(X)` where one exists (cos and sin via the
    /// characteristic function `e^{iμ}(1 + σ² - 2iθ)^{-r/2}`, and constants).
    pub fn known_expectation(&self, p: &VGParams) -> Option<f64> {
        let (re, im) = (1.0 + p.sigma * p.sigma, -2.0 * p.theta);
        let modulus = re.hypot(im).powf(-0.5 * p.r);
        let phase = p.mu - 0.5 * p.r * im.atan2(re);
        match self.name.as_str() {
            "cos" => Some(modulus * phase.cos()),
            "sin" => Some(modulus * phase.sin()),
            "one" => Some(1.0),
            "indicator0" => Some(0.0),
            "x" => Some(mean_variance(p).0),
            _ => None,
        }
    }
}

/// The four smooth bounded functions used by the experiments.
pub fn builtin_suite() -> Vec<TestFunction> {
    vec![
        TestFunction::cos(),
        TestFunction::sin(),
        TestFunction::tanh(),
        TestFunction::gaussian_bump(),
    ]
}

/// `A f(x)` from the values `f(x), f'(x), f''(x)`.
pub fn stein_operator(p: &VGParams, x: f64, f: f64, df: f64, d2f: f64) -> f64 {
    let z = x - p.mu;
    let s2 = p.sigma * p.sigma;
    s2 * z * d2f + (s2 * p.r + 2.0 * p.theta * z) * df + (p.r * p.theta - z) * f
}

/// The characterising functional in `(ν, α, β, μ)` form: `A f / σ²`.
pub fn characterizing_operator(p: &VGParams, x: f64, f: f64, df: f64, d2f: f64) -> f64 {
    stein_operator(p, x, f, df, d2f) / (p.sigma * p.sigma)
}

/// `f(x) = ((x-c)/w)^k e^{-((x-c)/w)²/2}` with exact first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedPolynomial {
    pub degree: u32,
    pub width: f64,
    pub center: f64,
}

impl DampedPolynomial {
    /// `[f, f', f'']` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let u = (x - self.center) / self.width;
        let k = self.degree as i32;
        let e = (-0.5 * u * u).exp();
        let pw = |j: i32| if j < 0 { 0.0 } else { u.powi(j) };
        let kf = k as f64;
        let f = pw(k) * e;
        let d1 = (kf * pw(k - 1) - pw(k + 1)) * e / self.width;
        let d2 = (kf * (kf - 1.0) * pw(k - 2) - (2.0 * kf + 1.0) * pw(k) + pw(k + 2)) * e
            / (self.width * self.width);
        [f, d1, d2]
    }

    /// Degrees 0–3 at widths 0.5, 1 and 2 around `center`.
    pub fn suite(center: f64) -> Vec<DampedPolynomial> {
        let mut out = Vec::new();
        for degree in 0..4 {
            for &width in &[0.5, 1.0, 2.0] {
                out.push(DampedPolynomial { degree, width, center });
            }
        }
        out
    }
}

/// An expectation with an optional Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// How the characterising expectation is computed.
pub enum ResidualMethod<'a> {
    /// Quadrature against the density of `p` itself.
    Quadrature,
    /// Quadrature against an arbitrary density with a non-smooth point at `kink`.
    QuadratureUnder { density: &'a dyn Fn(f64) -> f64, kink: f64 },
    /// Sample mean over the given draws.
    MonteCarlo { samples: &'a [f64] },
}

/// Checks that `f, f', f''` decay fast enough against the tails of `p`:
/// `|f^{(k)}(x)| |x-μ|^{ν+3/2} e^{-rate|x-μ|}` must shrink to below `1e-6`
/// along probes in both directions.
pub fn check_decay(p: &VGParams, f: &dyn Fn(f64) -> [f64; 3]) -> Result<()> {
    let nu = p.nu();
    for (dir, rate) in [(1.0, p.right_rate()), (-1.0, p.left_rate())] {
        let mut last = f64::INFINITY;
        for &scale in &[40.0, 80.0, 160.0] {
            let d = scale / rate;
            let vals = f(p.mu + dir * d);
            let log_env = (nu + 1.5) * d.ln() - rate * d;
            let worst = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if !worst.is_finite() {
                return Err(Error::domain("test function is not finite on the decay probe grid"));
            }
            let weighted = if worst == 0.0 { 0.0 } else { (worst.ln() + log_env).exp() };
            if scale >= 160.0 && !(weighted < 1e-6 && weighted <= last) {
                return Err(Error::domain(format!(
                    "test function grows too fast for the tails of the law (weighted size {weighted:e} at distance {d})"
                )));
            }
            last = weighted;
        }
    }
    Ok(())
}

/// `E[(W-μ)f'' + (2ν+1+2β(W-μ))f' + ((2ν+1)β - (α²-β²)(W-μ))f]`, which
/// vanishes exactly when `W ~ VG(p)`.
pub fn characterization_residual(
    p: &VGParams,
    f: &dyn Fn(f64) -> [f64; 3],
    method: ResidualMethod<'_>,
) -> Result<ResidualEstimate> {
    p.validate()?;
    check_decay(p, f)?;
    let op = |x: f64| {
        let [v, d1, d2] = f(x);
        characterizing_operator(p, x, v, d1, d2)
    };
    let cfg = QuadConfig::with_tolerances(1e-13, 1e-11);
    match method {
        ResidualMethod::Quadrature => Ok(ResidualEstimate { value: expect(p, op, &cfg)?, std_error: None }),
        ResidualMethod::QuadratureUnder { density, kink } => {
            let integrand = |x: f64| {
                let d = density(x);
                if d == 0.0 {
                    0.0
                } else {
                    op(x) * d
                }
            };
            let v = integrate(integrand, f64::NEG_INFINITY, f64::INFINITY, &[kink], &cfg)?.value;
            Ok(ResidualEstimate { value: v, std_error: None })
        }
        ResidualMethod::MonteCarlo { samples } => {
            if samples.len() < 2 {
                return Err(Error::domain("Monte Carlo residual needs at least two samples"));
            }
            let n = samples.len() as f64;
            let vals: Vec<f64> = samples.iter().map(|&x| op(x)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(ResidualEstimate { value: mean, std_error: Some((var / n).sqrt()) })
        }
    }
}

/// `(t² + 2βt - (α²-β²)) M'(t) + (2ν+1)(t+β) M(t)` with `M` and `M'` both
/// obtained by quadrature against the density (law with `μ = 0`).
pub fn mgf_ode_residual(p: &VGParams, t: f64) -> Result<f64> {
    if p.mu != 0.0 {
        return Err(Error::domain("the MGF equation is stated for mu = 0"));
    }
    let (alpha, beta, nu) = (p.alpha(), p.beta(), p.nu());
    if !((t + beta).abs() < alpha) {
        return Err(Error::domain("t outside |t + beta| < alpha"));
    }
    let cfg = QuadConfig::with_tolerances(1e-14, 1e-12);
    let m = expect(p, |x| (t * x).exp(), &cfg)?;
    let dm = expect(p, |x| x * (t * x).exp(), &cfg)?;
    let gap = (alpha - beta) * (alpha + beta);
    Ok((t * t + 2.0 * beta * t - gap) * dm + (2.0 * nu + 1.0) * (t + beta) * m)
}

/// Solution of the Stein equation for one law and one test function.
#[derive(Clone)]
pub struct SteinSolution {
    pub params: VGParams,
    /// `E h(X)` under `params`.
    pub target_expectation: f64,
    /// True when `ν < 0`, where the bounded solution is not unique and this
    /// is one particular bounded solution.
    pub non_unique: bool,
    nu: f64,
    /// Skew of the normalised law, `β/α`.
    b: f64,
    alpha: f64,
    h: TestFunction,
    cfg: QuadConfig,
}

impl fmt::Debug for SteinSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SteinSolution")
            .field("params", &self.params)
            .field("target_expectation", &self.target_expectation)
            .field("non_unique", &self.non_unique)
            .field("h", &self.h.name)
            .finish()
    }
}

/// Solves `A f = h - E h(X)` for `X ~ VG(p)`.
pub fn stein_solve(p: &VGParams, h: &TestFunction) -> Result<SteinSolution> {
    p.validate()?;
    let alpha = p.alpha();
    let b = p.theta / p.theta.hypot(p.sigma);
    // growth check in the normalised coordinate against the slower tail
    let rate = 1.0 - b.abs();
    for &w in &[40.0 / rate, 80.0 / rate, 160.0 / rate] {
        for x in [p.mu + w / alpha, p.mu - w / alpha] {
            let v = h.eval(x).abs();
            if !v.is_finite() || (v > 1.0 && v.ln() > 0.5 * rate * w) {
                return Err(Error::domain(format!(
                    "test function '{}' grows too fast for the tails of the law",
                    h.name
                )));
            }
        }
    }
    let tight = QuadConfig::with_tolerances(1e-13, 1e-12);
    let target = expect(p, |x| h.eval(x), &tight)?;
    Ok(SteinSolution {
        params: *p,
        target_expectation: target,
        non_unique: p.nu() < 0.0,
        nu: p.nu(),
        b,
        alpha,
        h: h.clone(),
        cfg: QuadConfig { abs_tol: 1e-13, rel_tol: 1e-11, max_subdivisions: 4000, ..Default::default() },
    })
}

impl SteinSolution {
    pub fn test_function(&self) -> &TestFunction {
        &self.h
    }

    /// Centred test function in the normalised coordinate, mirrored if `sign < 0`.
    fn hhat(&self, w: f64, sign: f64) -> f64 {
        self.h.eval(self.params.mu + sign * w / self.alpha) - self.target_expectation
    }

    /// `(G(x), G'(x))` for `x >= 0` with skew `b` and the centred function
    /// read in direction `sign`.
    fn kernel_pair(&self, x: f64, b: f64, sign: f64) -> Result<(f64, f64)> {
        let nu = self.nu;
        let hh = |y: f64| self.hhat(y, sign);
        let r0 = bessel_i_reduced_scaled(nu, x)?;

        // J2 = ∫_x^∞ y^ν e^y K_ν(y) e^{(1-b)(x-y)} ĥ(y) dy
        let kscale = bessel_k_pow_scaled(nu, x.max(1.0))?.max(1.0);
        let cfg2 = QuadConfig { abs_tol: self.cfg.abs_tol * kscale, ..self.cfg };
        let j2 = integrate(
            |y: f64| {
                let k = bessel_k_pow_scaled(nu, y).unwrap_or(f64::NAN);
                k * ((1.0 - b) * (x - y)).exp() * hh(y)
            },
            x,
            f64::INFINITY,
            &[],
            &cfg2,
        )?
        .value;

        if x == 0.0 {
            let g = -r0 * j2;
            let dg = hh(0.0) / (2.0 * nu + 1.0) - b * g;
            return Ok((g, dg));
        }

        // J1 = x^{2ν+1} Ĵ1, Ĵ1 = ∫_0^1 u^{2ν} e^{-xu} I_ν(xu)/(xu)^ν e^{(1+b)x(u-1)} ĥ(xu) du
        let j1 = integrate(
            |u: f64| {
                let y = x * u;
                let ri = bessel_i_reduced_scaled(nu, y).unwrap_or(f64::NAN);
                u.powf(2.0 * nu) * ri * ((1.0 + b) * x * (u - 1.0)).exp() * hh(y)
            },
            0.0,
            1.0,
            &[],
            &self.cfg,
        )?
        .value;

        let k0 = bessel_k_pow_scaled(nu, x)?;
        let k1 = bessel_k_pow_scaled(nu + 1.0, x)?;
        let r1 = bessel_i_reduced_scaled(nu + 1.0, x)?;
        let g = -x * k0 * j1 - r0 * j2;
        let dg = (b * x * k0 + k1) * j1 + (b * r0 - x * r1) * j2;
        Ok((g, dg))
    }

    /// `(g(w), g'(w))` of the normalised problem.
    fn normalized_pair(&self, w: f64) -> Result<(f64, f64)> {
        if !w.is_finite() {
            return Err(Error::domain("evaluation point must be finite"));
        }
        if w >= 0.0 {
            self.kernel_pair(w, self.b, 1.0)
        } else {
            let (g, dg) = self.kernel_pair(-w, -self.b, -1.0)?;
            Ok((-g, dg))
        }
    }

    fn scale(&self) -> f64 {
        self.params.sigma * self.params.sigma * self.alpha
    }

    fn w_of(&self, x: f64) -> f64 {
        self.alpha * (x - self.params.mu)
    }

    /// `f(x)`.
    pub fn f(&self, x: f64) -> Result<f64> {
        Ok(self.normalized_pair(self.w_of(x))?.0 / self.scale())
    }

    /// `f'(x)`, from the analytic derivative of the solution formula.
    pub fn df(&self, x: f64) -> Result<f64> {
        Ok(self.normalized_pair(self.w_of(x))?.1 * self.alpha / self.scale())
    }

    /// `(f(x), f'(x))` with one pair of kernel integrals.
    pub fn f_and_df(&self, x: f64) -> Result<(f64, f64)> {
        let (g, dg) = self.normalized_pair(self.w_of(x))?;
        Ok((g / self.scale(), dg * self.alpha / self.scale()))
    }

    /// `f^{(k)}(x)` for `k = 0..=4`; orders 2–4 are central differences of
    /// the analytic first derivative.
    pub fn derivative(&self, k: usize, x: f64) -> Result<f64> {
        let w = self.w_of(x);
        let dg = |t: f64| self.normalized_pair(t).map(|p| p.1);
        let scale = self.alpha.powi(k as i32) / (self.scale());
        let v = match k {
            0 => return self.f(x),
            1 => dg(w)?,
            2 => {
                let h = 2e-3;
                (dg(w - 2.0 * h)? - 8.0 * dg(w - h)? + 8.0 * dg(w + h)? - dg(w + 2.0 * h)?) / (12.0 * h)
            }
            3 => {
                let h = 1e-2;
                (-dg(w + 2.0 * h)? + 16.0 * dg(w + h)? - 30.0 * dg(w)? + 16.0 * dg(w - h)?
                    - dg(w - 2.0 * h)?)
                    / (12.0 * h * h)
            }
            4 => {
                let h = 2e-2;
                (-dg(w + 3.0 * h)? + 8.0 * dg(w + 2.0 * h)? - 13.0 * dg(w + h)? + 13.0 * dg(w - h)?
                    - 8.0 * dg(w - 2.0 * h)?
                    + dg(w - 3.0 * h)?)
                    / (8.0 * h * h * h)
            }
            _ => return Err(Error::domain("derivative order must be 0..=4")),
        };
        Ok(v * scale)
    }

    /// `A f(x) - (h(x) - E h(X))`, with `f''` taken from [`Self::derivative`].
    pub fn residual(&self, x: f64) -> Result<f64> {
        let (f, df) = self.f_and_df(x)?;
        let d2f = self.derivative(2, x)?;
        Ok(stein_operator(&self.params, x, f, df, d2f) - (self.h.eval(x) - self.target_expectation))
    }

    /// Both sides of the tail identity for the `K` kernel in the normalised
    /// coordinate: `(∫_{-∞}^w k ĥ, -∫_w^∞ k ĥ)` with `k(y) = e^{by}|y|^ν K_ν(|y|)`.
    pub fn kernel_tail_integrals(&self, w: f64) -> Result<(f64, f64)> {
        let nu = self.nu;
        let b = self.b;
        let kernel = |y: f64| {
            let a = y.abs();
            let k = bessel_k_pow_scaled(nu, a).unwrap_or(f64::NAN);
            k * (b * y - a).exp() * self.hhat(y, 1.0)
        };
        let cfg = QuadConfig::with_tolerances(1e-12, 1e-11);
        let left = integrate(kernel, f64::NEG_INFINITY, w, &[0.0], &cfg)?.value;
        let right = integrate(kernel, w, f64::INFINITY, &[0.0], &cfg)?.value;
        Ok((left, -right))
    }
}

/// `v(ν)` from the fourth-derivative bound: `2^{2ν+1} ν! (ν+2)! (2ν+1)` for
/// integer `ν`, `|sin πν| 2^{2ν} Γ(ν+1) Γ(ν+4) (2ν+1)` otherwise.
pub fn v_nu(nu: f64) -> f64 {
    if nu >= 0.0 && nu.fract() == 0.0 {
        let fact = |n: f64| (1..=n as u64).map(|k| k as f64).product::<f64>();
        2f64.powf(2.0 * nu + 1.0) * fact(nu) * fact(nu + 2.0) * (2.0 * nu + 1.0)
    } else {
        (PI * nu).sin().abs()
            * (2.0 * nu * std::f64::consts::LN_2 + ln_gamma(nu + 1.0) + ln_gamma(nu + 4.0)).exp()
            * (2.0 * nu + 1.0)
    }
}

/// Bounds on `‖f^{(k)}‖`, `k = 0..=4`, for the normalised symmetric law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedBounds {
    pub nu: f64,
    pub m: [f64; 5],
    pub v_nu: f64,
    /// Set when `v(ν) < 1e-3`, where the `1/v(ν)` terms dominate.
    pub warning: Option<String>,
}

/// Derivative bounds for `VG(ν, 1, 0, 0)` in terms of the test-function norms.
pub fn normalized_bound_constants(nu: f64, norms: &HNorms) -> Result<NormalizedBounds> {
    if !(nu > -0.5) || !nu.is_finite() {
        return Err(Error::domain(format!("need nu > -1/2, got {nu}")));
    }
    norms.validate()?;
    let c = norms.centered;
    let a = 1.0 / (2.0 * nu + 1.0);
    let k = PI.sqrt() / (2.0 * (nu + 0.5).sqrt()) + a;
    let v = v_nu(nu);
    let m = [
        (a + PI * gamma(nu + 0.5) / (2.0 * gamma(nu + 1.0))) * c,
        2.0 * a * c,
        k * (3.0 * norms.d1 + 4.0 * c),
        k * (5.0 * norms.d2 + 18.0 * norms.d1 + 18.0 * c) + c / v,
        k * (8.0 * norms.d3 + 52.0 * norms.d2 + 123.0 * norms.d1 + 123.0 * c) + (norms.d1 + c) / v,
    ];
    let warning = (v < 1e-3).then(|| {
        format!("v(nu) = {v:e} < 1e-3: the 1/v(nu) terms dominate these bounds")
    });
    Ok(NormalizedBounds { nu, m, v_nu: v, warning })
}

/// `M^0..M^4` bounding `‖f^{(k)}‖` for `VG(r, 0, σ, μ)` with integer `r`.
pub fn bound_constants(r: u32, sigma: f64, norms: &HNorms) -> Result<[f64; 5]> {
    if r < 1 {
        return Err(Error::domain("r must be a positive integer"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    norms.validate()?;
    let rf = r as f64;
    let c = norms.centered;
    let s = sigma;
    let k = (1.0 / (s * s)) * ((PI / (2.0 * rf)).sqrt() + 1.0 / rf);
    let half = 0.5 * rf;
    let m0 = (1.0 / s) * (1.0 / rf + PI * (ln_gamma(half) - ln_gamma(half + 0.5)).exp() / 2.0) * c;
    let m1 = 2.0 / (s * s * rf) * c;
    let m2 = k * (3.0 * norms.d1 + 4.0 / s * c);
    let m3 = k * (5.0 * norms.d2 + 18.0 / s * norms.d1 + 19.0 / (s * s) * c);
    let m4 = k * (8.0 * norms.d3 + 52.0 / s * norms.d2 + 124.0 / (s * s) * norms.d1 + 124.0 / (s * s * s) * c);
    Ok([m0, m1, m2, m3, m4])
}

/// [`bound_constants`] for a full parameter set; the bounds are only known
/// for `θ = 0` and integer `r`.
pub fn bound_constants_for(p: &VGParams, norms: &HNorms) -> Result<[f64; 5]> {
    p.validate()?;
    if p.theta != 0.0 {
        return Err(Error::domain("derivative bounds are only available for theta = 0"));
    }
    if p.r.fract() != 0.0 || p.r < 1.0 || p.r > u32::MAX as f64 {
        return Err(Error::domain(format!("derivative bounds need a positive integer r, got {}", p.r)));
    }
    bound_constants(p.r as u32, p.sigma, norms)
}

/// Density-weighted check used by tests and the CLI: `∫ A f · p` for an
/// arbitrary `f` given as values, evaluated against the VG density.
pub fn operator_expectation(p: &VGParams, f: &dyn Fn(f64) -> [f64; 3]) -> Result<f64> {
    let cfg = QuadConfig::with_tolerances(1e-13, 1e-11);
    let integrand = |x: f64| {
        let d = density(p, x);
        if d == 0.0 {
            return 0.0;
        }
        let [v, d1, d2] = f(x);
        stein_operator(p, x, v, d1, d2) * d
    };
    Ok(integrate(integrand, f64::NEG_INFINITY, f64::INFINITY, &[p.mu], &cfg)?.value)
}
