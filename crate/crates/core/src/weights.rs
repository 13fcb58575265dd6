//! Modulus of continuity, the weight functions built on it, and the closed-form
//! constants that parameterise the weighted energy estimate.
//!
//! The weights grow double-exponentially as `y -> 0`, so every quantity that can
//! leave the `f64` range has a log-scale twin. Integrals of `psi` are evaluated
//! after the substitution `r = y0^-lambda - z^-lambda`, which turns the
//! integrand into `exp(-r)` times a slowly varying factor and keeps the
//! position of the lower limit exact even when the weight varies on scales far
//! below the resolution of `y0` itself.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{adaptive_simpson, bisect_increasing};

/// Default relative tolerance for weight quadratures.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Beyond this many e-folds the integrand of the `r`-integral is below `f64` resolution.
const R_CAP: f64 = 1000.0;

/// `mu(s) = s (1 + |log s|)`.
pub fn modulus(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(domain("modulus argument", s));
    }
    Ok(s * (1.0 + s.ln().abs()))
}

/// `omega(p) = log(1 + log p)` for `p >= 1`.
pub fn omega(p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(domain("omega argument", p));
    }
    Ok(p.ln().ln_1p())
}

/// `omega^-1(w) = exp(e^w - 1)` for `w >= 0`.
pub fn omega_inverse(w: f64) -> Result<f64> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(domain("omega inverse argument", w));
    }
    let v = w.exp_m1().exp();
    if !v.is_finite() {
        return Err(Error::Overflow { what: "omega inverse" });
    }
    Ok(v)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(domain("lambda", lambda));
    }
    Ok(())
}

fn check_unit(y: f64) -> Result<()> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(domain("weight argument", y));
    }
    Ok(())
}

/// `log psi_lambda(y) = y^-lambda - 1`.
pub fn log_psi(lambda: f64, y: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_unit(y)?;
    let v = y.powf(-lambda) - 1.0;
    if !v.is_finite() {
        return Err(Error::Overflow { what: "log psi" });
    }
    Ok(v)
}

/// `psi_lambda(y) = exp(y^-lambda - 1)`; errors when the linear value overflows.
pub fn psi(lambda: f64, y: f64) -> Result<f64> {
    let v = log_psi(lambda, y)?.exp();
    if !v.is_finite() {
        return Err(Error::Overflow { what: "psi" });
    }
    Ok(v)
}

/// Raw `exp(y^-lambda - 1)` without domain checks, for difference stencils.
fn psi_raw(lambda: f64, y: f64) -> f64 {
    (y.powf(-lambda) - 1.0).exp()
}

/// Integrals of `psi_lambda` starting at a fixed lower limit `y0`.
#[derive(Debug, Clone, Copy)]
pub struct PsiKernel {
    lambda: f64,
    y0: f64,
    big_y0: f64,
}

impl PsiKernel {
    pub fn new(lambda: f64, y0: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_unit(y0)?;
        let big_y0 = y0.powf(-lambda);
        if !big_y0.is_finite() {
            return Err(Error::Overflow { what: "y0^-lambda" });
        }
        Ok(Self { lambda, y0, big_y0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    /// `r(delta) = y0^-lambda - (y0 + delta)^-lambda`, computed without cancellation.
    pub fn r_at(&self, delta: f64) -> f64 {
        -self.big_y0 * (-self.lambda * (delta / self.y0).ln_1p()).exp_m1()
    }

    /// `log psi(y0 + delta)`.
    pub fn log_psi_at(&self, delta: f64) -> f64 {
        (self.big_y0 - 1.0) - self.r_at(delta)
    }

    /// `log` of the factor `psi(y0) * y0 / (lambda y0^-lambda)` pulled out of every integral.
    pub fn log_scale(&self) -> f64 {
        (self.big_y0 - 1.0) + (self.y0 / (self.lambda * self.big_y0)).ln()
    }

    /// `log int_{r1}^{r2} exp(-r) (1 - r / Y0)^(-1 - 1/lambda) dr`.
    pub fn log_r_integral(&self, r1: f64, r2: f64, tol: f64) -> Result<f64> {
        if !(r2 > r1) {
            return Ok(f64::NEG_INFINITY);
        }
        let expo = 1.0 + 1.0 / self.lambda;
        let y = self.big_y0;
        let width = (r2 - r1).min(R_CAP);
        let integrand = |s: f64| (-s - expo * (-(r1 + s) / y).ln_1p()).exp();
        let q = adaptive_simpson(integrand, 0.0, width, tol)?;
        Ok(-r1 + q.value.ln())
    }

    /// `log int_{y0}^{y0 + delta} psi_lambda(z) dz`.
    pub fn log_integral(&self, delta: f64, tol: f64) -> Result<f64> {
        if delta < 0.0 {
            return Err(domain("integration length", delta));
        }
        if delta == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_scale() + self.log_r_integral(0.0, self.r_at(delta), tol)?)
    }

    /// `log int_{y0 + d1}^{y0 + d2} psi_lambda(z) dz` with both ends given as offsets.
    pub fn log_integral_between(&self, d1: f64, d2: f64, tol: f64) -> Result<f64> {
        if d2 < d1 || d1 < 0.0 {
            return Err(domain("integration offsets", d2 - d1));
        }
        Ok(self.log_scale() + self.log_r_integral(self.r_at(d1), self.r_at(d2), tol)?)
    }
}

/// `log(-Phi_lambda(y))`, finite for every representable `y^-lambda`; `-inf` at `y = 1`.
pub fn log_neg_phi(lambda: f64, y: f64, tol: f64) -> Result<f64> {
    let k = PsiKernel::new(lambda, y)?;
    k.log_integral(1.0 - y, tol)
}

/// `Phi_lambda(y) = -int_y^1 psi_lambda(z) dz`.
pub fn phi(lambda: f64, y: f64, tol: f64) -> Result<f64> {
    let v = -log_neg_phi(lambda, y, tol)?.exp();
    if !v.is_finite() {
        return Err(Error::Overflow { what: "Phi" });
    }
    Ok(v)
}

/// `Phi'_lambda = psi_lambda`.
pub fn phi_prime(lambda: f64, y: f64) -> Result<f64> {
    psi(lambda, y)
}

/// `Phi''_lambda(y)` by a centred difference of `psi` with a step matched to its
/// local scale `y / (lambda y^-lambda)`.
pub fn phi_second(lambda: f64, y: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_unit(y)?;
    let scale = y / (lambda * y.powf(-lambda));
    let h = 1e-4 * scale;
    let v = (psi_raw(lambda, y + h) - psi_raw(lambda, y - h)) / (2.0 * h);
    if !v.is_finite() {
        return Err(Error::Overflow { what: "Phi''" });
    }
    Ok(v)
}

/// `Lambda_lambda(y) = y Phi_lambda(1/y)` for `y >= 1`.
pub fn big_lambda(lambda: f64, y: f64, tol: f64) -> Result<f64> {
    if !(y >= 1.0) || !y.is_finite() {
        return Err(domain("Lambda argument", y));
    }
    Ok(y * phi(lambda, 1.0 / y, tol)?)
}

/// Largest bracket tried by [`lambda_inverse`].
pub const BRACKET_CAP: f64 = 1048576.0;

/// `Lambda_lambda^-1(z)` for `z <= 0`, by geometric bracket growth and bisection.
pub fn lambda_inverse(lambda: f64, z: f64, tol: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(z <= 0.0) || !z.is_finite() {
        return Err(domain("Lambda inverse argument", z));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let qtol = 1e-14;
    let mut hi = 2.0;
    loop {
        match big_lambda(lambda, hi, qtol) {
            Ok(v) if v <= z => break,
            Ok(_) => {}
            Err(_) => return Err(Error::BracketExceeded { reached: hi }),
        }
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::BracketExceeded { reached: hi });
        }
    }
    bisect_increasing(|y| Ok(-big_lambda(lambda, y, qtol)?), 1.0, hi, -z, tol)
}

/// Parameters of the weighted energy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl WeightParams {
    /// `alpha = max(alpha1, 1/T)`, `sigma = 1/alpha`, `tau = sigma/4`, `beta = sigma + tau`.
    pub fn from_horizon(horizon: f64, alpha1: f64, lambda: f64, gamma: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(domain("horizon", horizon));
        }
        if !(alpha1 > 0.0) {
            return Err(domain("alpha1", alpha1));
        }
        let alpha = alpha1.max(1.0 / horizon);
        let sigma = 1.0 / alpha;
        let tau = sigma / 4.0;
        let p = Self { lambda, beta: sigma + tau, gamma, tau, sigma, alpha, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.tau > 0.0) {
            return Err(domain("tau", self.tau));
        }
        if !(self.sigma > 0.0) {
            return Err(domain("sigma", self.sigma));
        }
        if !(self.beta >= self.sigma + self.tau) {
            return Err(domain("beta", self.beta));
        }
        if !(self.gamma >= 0.0) {
            return Err(domain("gamma", self.gamma));
        }
        if ((self.alpha * self.sigma) - 1.0).abs() > 1e-12 {
            return Err(domain("alpha * sigma", self.alpha * self.sigma));
        }
        if !(self.horizon > 0.0) {
            return Err(domain("horizon", self.horizon));
        }
        Ok(())
    }

    /// Argument `(t + tau) / beta` of `Phi_lambda` at time `t`.
    pub fn weight_argument(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.sigma) {
            return Err(domain("weight time", t));
        }
        let y = (t + self.tau) / self.beta;
        check_unit(y)?;
        Ok(y)
    }
}

/// `2 gamma t - 2 beta Phi_lambda((t + tau) / beta)`, the logarithm of the energy weight.
pub fn log_weight_factor(p: &WeightParams, t: f64) -> Result<f64> {
    let y = p.weight_argument(t)?;
    let neg_phi = log_neg_phi(p.lambda, y, DEFAULT_TOL)?.exp();
    let v = 2.0 * p.gamma * t + 2.0 * p.beta * neg_phi;
    if !v.is_finite() {
        return Err(Error::Overflow { what: "log weight" });
    }
    Ok(v)
}

/// Constants produced by the absorption argument of the energy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofConstants {
    pub kappa_prime: f64,
    pub lambda_bar: f64,
    pub nu_bar1: f64,
}

/// `kappa' = min(4 log 2, kappa log 2 / 4)`,
/// `lambda_bar = 16 alpha (log 2)^2 (sigma + tau) / (kappa' (1 + log 2))`,
/// `nu_bar1 = log(16 alpha log 2 / kappa) / log 2`.
pub fn proof_constants(kappa: f64, alpha: f64, sigma: f64, tau: f64) -> Result<ProofConstants> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(domain("kappa", kappa));
    }
    for (what, v) in [("alpha", alpha), ("sigma", sigma), ("tau", tau)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(domain(what, v));
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let kappa_prime = (4.0 * ln2).min(kappa * ln2 / 4.0);
    let lambda_bar = 16.0 * alpha * ln2 * ln2 * (sigma + tau) / (kappa_prime * (1.0 + ln2));
    let nu_bar1 = (16.0 * alpha * ln2 / kappa).ln() / ln2;
    Ok(ProofConstants { kappa_prime, lambda_bar, nu_bar1 })
}
