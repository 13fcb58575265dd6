//! Harness for the weighted energy inequality
//!
//! `int_0^s w(t) ||u(t)||^2_{H^(1 - alpha t)} dt
//!     <= M gamma [ (s + tau) w(s) ||u(s)||^2_{H^(1 - alpha s)} + tau psi(tau/beta) w(0) ||u(0)||^2 ]`
//!
//! with `w(t) = exp(2 gamma t - 2 beta Phi((t + tau) / beta))`. For admissible
//! weight parameters `w` spans far more than the floating-point range, so
//! everything is carried as logarithms relative to `log w(0)`. The time
//! integral is taken exactly for the weight and piecewise-linearly for the
//! norm profile: on each panel the convexity of `log w` brackets the weight
//! between exponentials of lines, and panels are bisected until the two
//! brackets agree.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::CoefficientFamily;
use crate::error::{Error, Result};
use crate::evolution::{admissible_backward_solution, SpectralExact, Trajectory};
use crate::fmt::serialize_float;
use crate::spectral::{band_limited_random, GridSpec};
use crate::weights::{log_neg_phi, PsiKernel, WeightParams};

const LN_2: f64 = std::f64::consts::LN_2;
const PSI_TOL: f64 = 1e-12;
const MAX_DEPTH: u32 = 400;

/// Default relative agreement required between the panel brackets.
pub const DEFAULT_GAP: f64 = 1e-9;

/// Panels whose upper bound sits this many nats below the running total are
/// dropped. Norm profiles must vary by less than this across the time grid.
pub const DYNAMIC_RANGE: f64 = 200.0;

/// `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A real number stored as a sign and `log |x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub negative: bool,
    pub log_abs: f64,
}

impl SignedLog {
    pub const ZERO: Self = Self { negative: false, log_abs: f64::NEG_INFINITY };

    pub fn from_value(x: f64) -> Self {
        Self { negative: x < 0.0, log_abs: x.abs().ln() }
    }

    /// `e^a - e^b`.
    pub fn difference(a: f64, b: f64) -> Self {
        match a.partial_cmp(&b) {
            Some(Ordering::Greater) => Self { negative: false, log_abs: a + (-(b - a).exp_m1()).ln() },
            Some(Ordering::Less) => Self { negative: true, log_abs: b + (-(a - b).exp_m1()).ln() },
            _ => Self::ZERO,
        }
    }

    pub fn value(&self) -> f64 {
        let m = self.log_abs.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }

    /// Multiply by `e^shift`.
    pub fn scaled(self, shift: f64) -> Self {
        if self.log_abs == f64::NEG_INFINITY {
            return self;
        }
        Self { log_abs: self.log_abs + shift, ..self }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        let key = |s: &Self| -> (i8, f64) {
            if s.log_abs == f64::NEG_INFINITY {
                (0, 0.0)
            } else if s.negative {
                (-1, -s.log_abs)
            } else {
                (1, s.log_abs)
            }
        };
        let (a, b) = (key(self), key(other));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    }

    pub fn min(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

/// `log int_0^1 e^(c u) (p0 (1 - u) + p1 u) du` for `p0, p1 >= 0`, valid for
/// `|c|` far beyond the floating-point range.
pub fn log_exp_linear(c: SignedLog, p0: f64, p1: f64) -> f64 {
    if p0 <= 0.0 && p1 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if c.log_abs < (0.5f64).ln() {
        let x = c.value();
        // sum_n x^n / (n+2)!  and  sum_n (n+1) x^n / (n+2)!
        let (mut a0, mut a1) = (0.0, 0.0);
        let mut term = 0.5;
        for n in 0..24 {
            a0 += term;
            a1 += term * (n + 1) as f64;
            term *= x / (n + 3) as f64;
        }
        return (p0 * a0 + p1 * a1).ln();
    }
    if c.log_abs <= 40f64.ln() {
        let x = c.value();
        let e = x.exp_m1();
        let a0 = (e - x) / (x * x);
        let a1 = (e * (x - 1.0) + x) / (x * x);
        return (p0 * a0 + p1 * a1).ln();
    }
    if c.negative {
        // e^c is below 1e-17 relative to every retained term
        if c.log_abs < 700.0 {
            let m = c.log_abs.exp();
            return (p0 * (m - 1.0) + p1).ln() - 2.0 * c.log_abs;
        }
        if p0 > 0.0 {
            p0.ln() - c.log_abs
        } else {
            p1.ln() - 2.0 * c.log_abs
        }
    } else {
        let x = c.value();
        x + (p0 + p1 * (x - 1.0)).ln() - 2.0 * x.ln()
    }
}

/// Log-weight relative to `t = 0` and its exact time integrals against the
/// hat functions of a fixed time grid.
#[derive(Debug, Clone)]
pub struct WeightKernel {
    params: WeightParams,
    psi: PsiKernel,
    knots: Vec<f64>,
    knot_log_weight: Vec<f64>,
    /// `log int_{s_j}^{s_{j+1}} e^{L(t)} (s_{j+1} - t) / H dt`
    left: Vec<f64>,
    /// `log int_{s_j}^{s_{j+1}} e^{L(t)} (t - s_j) / H dt`
    right: Vec<f64>,
    max_gap: f64,
    panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl WeightKernel {
    pub fn new(params: WeightParams, knots: &[f64], gap: f64) -> Result<Self> {
        params.validate()?;
        if knots.len() < 2 {
            return Err(Error::Empty("energy time grid"));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("time grid must start at 0 and increase".into()));
        }
        params.weight_argument(*knots.last().expect("nonempty"))?;
        let psi = PsiKernel::new(params.lambda, params.tau / params.beta)?;
        let mut k = Self {
            params,
            psi,
            knots: knots.to_vec(),
            knot_log_weight: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            max_gap: 0.0,
            panels: 0,
        };
        k.knot_log_weight = knots.iter().map(|&t| k.log_weight(t)).collect::<Result<_>>()?;
        k.build(gap)?;
        Ok(k)
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Largest relative bracket gap among the retained panels.
    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    pub fn panel_count(&self) -> usize {
        self.panels
    }

    /// `L(t) = log w(t) - log w(0) = 2 gamma t - 2 beta int_{y0}^{y_t} psi`;
    /// `-inf` once the weight has fallen below every representable magnitude.
    pub fn log_weight(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let p = &self.params;
        let li = self.psi.log_integral(t / p.beta, PSI_TOL)?;
        let drop = (LN_2 + p.beta.ln() + li).exp();
        if drop.is_infinite() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(2.0 * p.gamma * t - drop)
    }

    /// `L'(t) = 2 gamma - 2 psi((t + tau) / beta)`.
    pub fn log_weight_slope(&self, t: f64) -> SignedLog {
        let p = &self.params;
        SignedLog::difference((2.0 * p.gamma).ln(), LN_2 + self.psi.log_psi_at(t / p.beta))
    }

    /// `log w(0) = -2 beta Phi(tau / beta)`, infinite when not representable.
    pub fn log_reference(&self) -> Result<f64> {
        let p = &self.params;
        Ok(2.0 * p.beta * log_neg_phi(p.lambda, p.tau / p.beta, PSI_TOL)?.exp())
    }

    /// `log psi(tau / beta)`.
    pub fn log_psi_start(&self) -> f64 {
        self.psi.log_psi_at(0.0)
    }

    fn bounds(&self, ta: f64, tb: f64, lo: f64, hi: f64) -> Result<Bounds> {
        let none = Bounds { lower: [f64::NEG_INFINITY; 2], upper: [f64::NEG_INFINITY; 2] };
        let la = self.log_weight(ta)?;
        if la == f64::NEG_INFINITY {
            return Ok(none);
        }
        let p = &self.params;
        let h = tb - ta;
        let lh = h.ln();
        let low = self.log_weight_slope(ta).scaled(lh);
        let bracket = self.log_weight_slope(tb).scaled(lh);
        let li = self.psi.log_integral_between(ta / p.beta, tb / p.beta, PSI_TOL)?;
        let chord = SignedLog::difference((2.0 * p.gamma * h).ln(), LN_2 + p.beta.ln() + li);
        let up = chord.min(bracket);
        let w = hi - lo;
        let basis = [[(hi - ta) / w, (hi - tb) / w], [(ta - lo) / w, (tb - lo) / w]];
        let mut b = none;
        for k in 0..2 {
            b.lower[k] = la + lh + log_exp_linear(low, basis[k][0], basis[k][1]);
            b.upper[k] = la + lh + log_exp_linear(up, basis[k][0], basis[k][1]);
        }
        Ok(b)
    }

    fn build(&mut self, gap: f64) -> Result<()> {
        let n = self.knots.len() - 1;
        let whole: Vec<Bounds> = (0..n)
            .into_par_iter()
            .map(|j| self.bounds(self.knots[j], self.knots[j + 1], self.knots[j], self.knots[j + 1]))
            .collect::<Result<_>>()?;
        let reference = whole
            .iter()
            .map(|b| log_add_exp(b.lower[0], b.lower[1]))
            .fold(f64::NEG_INFINITY, log_add_exp);
        let cutoff = reference - DYNAMIC_RANGE;
        let per_interval: Vec<(f64, f64, f64, usize)> = (0..n)
            .into_par_iter()
            .map(|j| self.refine(j, gap, cutoff))
            .collect::<Result<_>>()?;
        for (l, r, g, c) in per_interval {
            self.left.push(l);
            self.right.push(r);
            self.max_gap = self.max_gap.max(g);
            self.panels += c;
        }
        if self.max_gap > gap {
            return Err(Error::Quadrature { estimate: self.max_gap });
        }
        Ok(())
    }

    fn refine(&self, j: usize, gap: f64, cutoff: f64) -> Result<(f64, f64, f64, usize)> {
        let (lo, hi) = (self.knots[j], self.knots[j + 1]);
        let mut acc = [f64::NEG_INFINITY; 2];
        let mut worst: f64 = 0.0;
        let mut count = 0;
        let mut stack = vec![(lo, hi, 0u32)];
        while let Some((ta, tb, depth)) = stack.pop() {
            let b = self.bounds(ta, tb, lo, hi)?;
            if log_add_exp(b.upper[0], b.upper[1]) < cutoff {
                continue;
            }
            let gaps: Vec<f64> = (0..2)
                .filter(|&k| b.upper[k] > f64::NEG_INFINITY)
                .map(|k| {
                    let resolvable = 8.0 * f64::EPSILON * b.upper[k].abs();
                    let g = b.upper[k] - b.lower[k];
                    if g <= resolvable {
                        0.0
                    } else {
                        g.exp_m1()
                    }
                })
                .collect();
            let g = gaps.iter().copied().fold(0.0, f64::max);
            let tm = 0.5 * (ta + tb);
            let splittable = tm > ta && tm < tb && depth < MAX_DEPTH;
            if g <= gap || !splittable {
                for k in 0..2 {
                    if b.upper[k] > f64::NEG_INFINITY {
                        let est = if b.lower[k] > f64::NEG_INFINITY {
                            0.5 * (b.lower[k] + b.upper[k])
                        } else {
                            b.upper[k]
                        };
                        acc[k] = log_add_exp(acc[k], est);
                    }
                }
                worst = worst.max(g);
                count += 1;
            } else {
                stack.push((tm, tb, depth + 1));
                stack.push((ta, tm, depth + 1));
            }
        }
        Ok((acc[0], acc[1], worst, count))
    }

    fn check_profile(&self, profile: &EnergyProfile) -> Result<()> {
        if profile.times.len() != self.knots.len()
            || profile.times.iter().zip(&self.knots).any(|(a, b)| a != b)
        {
            return Err(Error::Precondition("profile and weight kernel use different time grids".into()));
        }
        let pos: Vec<f64> = profile.weighted_norms.iter().copied().filter(|v| *v > 0.0).collect();
        if let (Some(lo), Some(hi)) = (
            pos.iter().copied().reduce(f64::min),
            pos.iter().copied().reduce(f64::max),
        ) {
            if (hi / lo).ln() > DYNAMIC_RANGE {
                return Err(Error::Precondition(format!(
                    "norm profile spans {:.1} nats, above the {DYNAMIC_RANGE} supported",
                    (hi / lo).ln()
                )));
            }
        }
        Ok(())
    }

    /// `log` of the left-hand side (relative to `w(0)`) at every grid time.
    pub fn log_lhs_cumulative(&self, profile: &EnergyProfile) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        let f = &profile.weighted_norms;
        let mut out = Vec::with_capacity(f.len());
        let mut acc = f64::NEG_INFINITY;
        out.push(acc);
        for j in 0..self.left.len() {
            let term = log_add_exp(self.left[j] + f[j].ln(), self.right[j] + f[j + 1].ln());
            acc = log_add_exp(acc, term);
            out.push(acc);
        }
        Ok(out)
    }

    /// `log` of the bracket on the right-hand side (relative to `w(0)`) at grid index `k`.
    pub fn log_rhs(&self, profile: &EnergyProfile, k: usize) -> Result<f64> {
        let p = &self.params;
        let s = *self.knots.get(k).ok_or_else(|| Error::Precondition(format!("grid index {k}")))?;
        let first = (s + p.tau).ln() + self.knot_log_weight[k] + profile.weighted_norms[k].ln();
        let second = p.tau.ln() + self.log_psi_start() + profile.initial_l2_sq.ln();
        Ok(log_add_exp(first, second))
    }
}

fn grid_index(kernel: &WeightKernel, s: f64) -> Result<usize> {
    kernel
        .knots()
        .iter()
        .position(|&t| t == s)
        .ok_or_else(|| Error::Precondition(format!("s = {s} is not a grid time")))
}

/// `log` of the weighted time integral up to grid time `s`, relative to `w(0)`.
pub fn weighted_lhs(kernel: &WeightKernel, profile: &EnergyProfile, s: f64) -> Result<f64> {
    let k = grid_index(kernel, s)?;
    Ok(kernel.log_lhs_cumulative(profile)?[k])
}

/// `log` of the right-hand bracket at grid time `s`, relative to `w(0)`.
pub fn weighted_rhs_bracket(kernel: &WeightKernel, profile: &EnergyProfile, s: f64) -> Result<f64> {
    kernel.log_rhs(profile, grid_index(kernel, s)?)
}

/// Norm data of one solution: `||u(t)||^2_{H^(1 - alpha t)}` on the grid and `||u(0)||^2_{L2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub times: Vec<f64>,
    pub weighted_norms: Vec<f64>,
    pub initial_l2_sq: f64,
}

impl EnergyProfile {
    pub fn from_trajectory(traj: &Trajectory, alpha: f64) -> Self {
        let weighted_norms = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, u)| u.sobolev_norm(1.0 - alpha * t).powi(2))
            .collect();
        Self { times: traj.times.clone(), weighted_norms, initial_l2_sq: traj.first().l2_norm().powi(2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub run: usize,
    pub s: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
}

impl EnergyRecord {
    pub fn log_ratio(&self) -> f64 {
        self.log_lhs - self.log_rhs
    }
}

/// Outcome of one `gamma`: `M = max lhs / (gamma rhs)`, kept in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyScan {
    pub gamma: f64,
    pub log_m: f64,
    pub records: Vec<EnergyRecord>,
    pub worst: Option<EnergyRecord>,
    pub quadrature_gap: f64,
}

impl EnergyScan {
    /// `exp(log_m)`; underflows to 0 when the estimate holds with vast room.
    pub fn empirical_m(&self) -> f64 {
        self.log_m.exp()
    }
}

/// Evaluate both sides for every profile at every grid time and take the worst ratio.
pub fn verify_estimate(kernel: &WeightKernel, profiles: &[EnergyProfile]) -> Result<EnergyScan> {
    let gamma = kernel.params().gamma;
    if !(gamma > 0.0) {
        return Err(crate::error::domain("gamma", gamma));
    }
    let per_run: Vec<Vec<EnergyRecord>> = profiles
        .par_iter()
        .enumerate()
        .map(|(run, prof)| {
            let lhs = kernel.log_lhs_cumulative(prof)?;
            let mut out = Vec::new();
            for (k, &l) in lhs.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let r = kernel.log_rhs(prof, k)?;
                let rec = EnergyRecord { run, s: kernel.knots()[k], log_lhs: l, log_rhs: r };
                if !rec.log_ratio().is_finite() {
                    return Err(Error::NonFiniteRatio { run, s: rec.s });
                }
                out.push(rec);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<EnergyRecord> = per_run.into_iter().flatten().collect();
    let worst = records.iter().copied().max_by(|a, b| a.log_ratio().total_cmp(&b.log_ratio()));
    let log_m = worst.map_or(f64::NEG_INFINITY, |w| w.log_ratio() - gamma.ln());
    Ok(EnergyScan { gamma, log_m, records, worst, quadrature_gap: kernel.max_gap() })
}

/// Provenance of a generated solution corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusDescriptor {
    pub family: String,
    pub size: usize,
    pub snapshots: usize,
    pub points: usize,
    #[serde(serialize_with = "serialize_float")]
    pub period: f64,
    pub band: [i32; 2],
    pub solver: String,
    #[serde(serialize_with = "serialize_float")]
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub descriptor: CorpusDescriptor,
    pub seeds: Vec<u64>,
    pub profiles: Vec<EnergyProfile>,
}

/// Backward solutions on `[0, sigma]` whose final data are random band-limited
/// fields. Run `i` uses seed `seed + i`, so a corpus of `2n` extends one of `n`.
#[allow(clippy::too_many_arguments)]
pub fn generate_corpus(
    grid: GridSpec,
    family: &CoefficientFamily,
    family_name: &str,
    size: usize,
    snapshots: usize,
    params: &WeightParams,
    band: [i32; 2],
    seed: u64,
) -> Result<Corpus> {
    if size == 0 {
        return Err(Error::Empty("energy corpus"));
    }
    if !family.is_x_independent() {
        return Err(Error::Precondition("the energy corpus needs space-independent coefficients".into()));
    }
    let seeds: Vec<u64> = (0..size as u64).map(|i| seed.wrapping_add(i)).collect();
    let profiles = seeds
        .par_iter()
        .map(|&s| {
            let v = band_limited_random(grid, band[0], band[1], s)?;
            let traj = admissible_backward_solution(&v, family, params.sigma, snapshots, &SpectralExact)?;
            Ok(EnergyProfile::from_trajectory(&traj, params.alpha))
        })
        .collect::<Result<_>>()?;
    Ok(Corpus {
        descriptor: CorpusDescriptor {
            family: family_name.to_string(),
            size,
            snapshots,
            points: grid.points,
            period: grid.period,
            band,
            solver: "spectral-exact".into(),
            horizon: params.sigma,
        },
        seeds,
        profiles,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsRecord {
    #[serde(serialize_with = "serialize_float")]
    pub lambda: f64,
    #[serde(serialize_with = "serialize_float")]
    pub beta: f64,
    #[serde(serialize_with = "serialize_float")]
    pub tau: f64,
    #[serde(serialize_with = "serialize_float")]
    pub sigma: f64,
    #[serde(serialize_with = "serialize_float")]
    pub alpha: f64,
    #[serde(rename = "T", serialize_with = "serialize_float")]
    pub horizon: f64,
}

impl From<&WeightParams> for ParamsRecord {
    fn from(p: &WeightParams) -> Self {
        Self { lambda: p.lambda, beta: p.beta, tau: p.tau, sigma: p.sigma, alpha: p.alpha, horizon: p.horizon }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaEntry {
    #[serde(serialize_with = "serialize_float")]
    pub gamma: f64,
    #[serde(rename = "empirical_M", serialize_with = "serialize_float")]
    pub empirical_m: f64,
    #[serde(rename = "log_M", serialize_with = "serialize_float")]
    pub log_m: f64,
    pub worst_run: Option<usize>,
    #[serde(serialize_with = "serialize_float")]
    pub worst_s: f64,
    #[serde(serialize_with = "serialize_float")]
    pub quadrature_gap: f64,
}

impl From<&EnergyScan> for GammaEntry {
    fn from(s: &EnergyScan) -> Self {
        Self {
            gamma: s.gamma,
            empirical_m: s.empirical_m(),
            log_m: s.log_m,
            worst_run: s.worst.map(|w| w.run),
            worst_s: s.worst.map_or(f64::NAN, |w| w.s),
            quadrature_gap: s.quadrature_gap,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub params: ParamsRecord,
    pub gamma_scan: Vec<GammaEntry>,
    pub corpus_descriptor: CorpusDescriptor,
    pub seeds: Vec<u64>,
}

impl EnergyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Run the estimate for every `gamma` on one corpus.
pub fn gamma_scan(params: &WeightParams, gammas: &[f64], corpus: &Corpus, gap: f64) -> Result<Vec<EnergyScan>> {
    if gammas.is_empty() {
        return Err(Error::Empty("gamma list"));
    }
    let knots = &corpus.profiles[0].times;
    gammas
        .iter()
        .map(|&g| {
            let kernel = WeightKernel::new(params.with_gamma(g)?, knots, gap)?;
            verify_estimate(&kernel, &corpus.profiles)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;
    use crate::weights::{log_weight_factor, proof_constants};
    use approx::assert_relative_eq;

    fn oracle_exp_linear(c: f64, p0: f64, p1: f64) -> f64 {
        // the integrand is negligible beyond u = 60/|c| for strongly negative c
        let top = if c < -60.0 { -60.0 / c } else { 1.0 };
        adaptive_simpson(|u| (c * u).exp() * (p0 * (1.0 - u) + p1 * u), 0.0, top, 1e-14).unwrap().value.ln()
    }

    #[test]
    fn exp_linear_matches_quadrature() {
        for c in [-1e4, -300.0, -41.0, -39.0, -5.0, -0.6, -0.4, -1e-9, 0.0, 1e-7, 0.3, 0.7, 12.0, 39.0, 45.0] {
            for (p0, p1) in [(1.0, 0.0), (0.0, 1.0), (0.3, 0.9)] {
                let got = log_exp_linear(SignedLog::from_value(c), p0, p1);
                let want = oracle_exp_linear(c, p0, p1);
                assert!((got - want).abs() < 1e-11 * want.abs().max(1.0), "c={c} p=({p0},{p1}) {got} {want}");
            }
        }
    }

    #[test]
    fn exp_linear_astronomical_slope() {
        let c = SignedLog { negative: true, log_abs: 1e40 };
        assert_eq!(log_exp_linear(c, 2.0, 5.0), 2f64.ln() - 1e40);
        assert_eq!(log_exp_linear(c, 0.0, 5.0), 5f64.ln() - 2e40);
        assert_eq!(log_exp_linear(c, 0.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn signed_log_arithmetic() {
        let d = SignedLog::difference(3f64.ln(), 5f64.ln());
        assert!(d.negative);
        assert_relative_eq!(d.value(), -2.0, max_relative = 1e-15);
        assert_eq!(SignedLog::difference(1.0, 1.0), SignedLog::ZERO);
        let a = SignedLog::from_value(-10.0);
        let b = SignedLog::from_value(-1.0);
        assert_eq!(a.min(b), a);
        assert_eq!(SignedLog::from_value(2.0).min(SignedLog::ZERO), SignedLog::ZERO);
        assert_relative_eq!(log_add_exp(1f64.ln(), 2f64.ln()), 3f64.ln(), max_relative = 1e-15);
    }

    fn moderate_params(gamma: f64) -> WeightParams {
        WeightParams::from_horizon(1.0, 1.0, 1.5, gamma).unwrap()
    }

    fn knots(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn kernel_matches_direct_quadrature() {
        let p = moderate_params(3.0);
        let t = knots(8);
        let k = WeightKernel::new(p, &t, 1e-10).unwrap();
        let l0 = log_weight_factor(&p, 0.0).unwrap();
        let f: Vec<f64> = t.iter().map(|s| 1.0 + s * s).collect();
        let prof = EnergyProfile { times: t.clone(), weighted_norms: f.clone(), initial_l2_sq: 1.0 };
        let lhs = k.log_lhs_cumulative(&prof).unwrap();
        for j in 1..t.len() {
            // independent path: the absolute log-weight from Phi directly, piece by piece
            let mut total = 0.0;
            for i in 0..j {
                let (a, b) = (t[i], t[i + 1]);
                let lin = |s: f64| f[i] + (f[i + 1] - f[i]) * (s - a) / (b - a);
                total += adaptive_simpson(|s| (log_weight_factor(&p, s).unwrap() - l0).exp() * lin(s), a, b, 1e-12)
                    .unwrap()
                    .value;
            }
            assert_relative_eq!(lhs[j], total.ln(), max_relative = 1e-7, epsilon = 1e-7);
        }
        assert_eq!(lhs[0], f64::NEG_INFINITY);
    }

    #[test]
    fn log_weight_is_convex_and_consistent() {
        let p = moderate_params(10.0);
        let k = WeightKernel::new(p, &knots(4), 1e-9).unwrap();
        let l0 = log_weight_factor(&p, 0.0).unwrap();
        assert_relative_eq!(k.log_reference().unwrap(), l0, max_relative = 1e-10);
        for t in [0.1, 0.4, 0.9] {
            assert_relative_eq!(k.log_weight(t).unwrap(), log_weight_factor(&p, t).unwrap() - l0, max_relative = 1e-8);
            let h = 1e-5;
            let fd = (k.log_weight(t + h).unwrap() - k.log_weight(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(k.log_weight_slope(t).value(), fd, max_relative = 1e-5);
            let second = k.log_weight(t + h).unwrap() - 2.0 * k.log_weight(t).unwrap() + k.log_weight(t - h).unwrap();
            assert!(second > 0.0);
        }
    }

    #[test]
    fn ratio_is_invariant_under_rescaling_the_solution() {
        let p = moderate_params(1.0);
        let t = knots(16);
        let k = WeightKernel::new(p, &t, 1e-10).unwrap();
        let f: Vec<f64> = t.iter().map(|s| (-s).exp() + 0.5).collect();
        let a = EnergyProfile { times: t.clone(), weighted_norms: f.clone(), initial_l2_sq: 0.5 };
        let b = EnergyProfile {
            times: t.clone(),
            weighted_norms: f.iter().map(|v| v * 1e6).collect(),
            initial_l2_sq: 0.5e6,
        };
        let sa = verify_estimate(&k, &[a]).unwrap();
        let sb = verify_estimate(&k, &[b]).unwrap();
        for (x, y) in sa.records.iter().zip(&sb.records) {
            assert_relative_eq!(x.log_ratio(), y.log_ratio(), max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn rhs_first_term_where_phi_vanishes() {
        // gamma = 0 and (s + tau) / beta = 1 at s = sigma
        let p = moderate_params(0.0);
        let t = knots(4);
        let k = WeightKernel::new(p, &t, 1e-9).unwrap();
        let f = 3.0;
        let first = (1.0 + p.tau).ln() + k.log_weight(1.0).unwrap() + f64::ln(f) + k.log_reference().unwrap();
        assert_relative_eq!(first, ((1.0 + p.tau) * f).ln(), max_relative = 1e-8, epsilon = 1e-8);
    }

    #[test]
    fn zero_and_empty_cases() {
        let p = moderate_params(1.0);
        let t = knots(4);
        let k = WeightKernel::new(p, &t, 1e-9).unwrap();
        let zero = EnergyProfile { times: t.clone(), weighted_norms: vec![0.0; 5], initial_l2_sq: 0.0 };
        assert_eq!(weighted_lhs(&k, &zero, 1.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(weighted_rhs_bracket(&k, &zero, 1.0).unwrap(), f64::NEG_INFINITY);
        let scan = verify_estimate(&k, &[zero]).unwrap();
        assert!(scan.records.is_empty());
        assert_eq!(scan.empirical_m(), 0.0);
        let one = EnergyProfile { times: t.clone(), weighted_norms: vec![1.0; 5], initial_l2_sq: 1.0 };
        assert_eq!(weighted_lhs(&k, &one, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(weighted_lhs(&k, &one, 0.3).is_err());
        let rhs = weighted_rhs_bracket(&k, &one, 0.5).unwrap();
        let first = (0.5 + p.tau).ln() + k.log_weight(0.5).unwrap();
        assert!(rhs >= first);
    }

    #[test]
    fn threshold_weight_is_handled_in_log_form() {
        let pc = proof_constants(0.5, 1.0, 1.0, 0.25).unwrap();
        let p = WeightParams::from_horizon(1.0, 1.0, pc.lambda_bar, 10.0).unwrap();
        let t = knots(20);
        let k = WeightKernel::new(p, &t, 1e-9).unwrap();
        let lp = k.log_psi_start();
        assert!(lp > 1e45);
        let prof = EnergyProfile { times: t.clone(), weighted_norms: vec![4.0; t.len()], initial_l2_sq: 2.0 };
        let scan = verify_estimate(&k, &[prof]).unwrap();
        // lhs ~ f(0) / (2 psi0), rhs ~ tau psi0 ||u0||^2
        let expect = 4f64.ln() - LN_2 - lp - (p.tau.ln() + lp + 2f64.ln()) - 10f64.ln();
        assert_relative_eq!(scan.log_m, expect, max_relative = 1e-12);
        assert!(scan.log_m.is_finite());
        assert_eq!(scan.empirical_m(), 0.0);
    }

    #[test]
    fn corpus_extends_under_doubling() {
        let g = GridSpec::one_d(2.0 * std::f64::consts::PI, 64).unwrap();
        let p = moderate_params(1.0);
        let fam = CoefficientFamily::heat(1);
        let a = generate_corpus(g, &fam, "heat", 2, 8, &p, [0, 2], 5).unwrap();
        let b = generate_corpus(g, &fam, "heat", 4, 8, &p, [0, 2], 5).unwrap();
        assert_eq!(a.profiles[..], b.profiles[..2]);
        assert_eq!(b.seeds, vec![5, 6, 7, 8]);
        let scans = gamma_scan(&p, &[1.0, 10.0], &b, DEFAULT_GAP).unwrap();
        assert!(scans.iter().all(|s| s.log_m.is_finite()));
        let json = EnergyReport {
            params: (&p).into(),
            gamma_scan: scans.iter().map(GammaEntry::from).collect(),
            corpus_descriptor: b.descriptor.clone(),
            seeds: b.seeds.clone(),
        }
        .to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["gamma_scan"].as_array().unwrap().len(), 2);
        assert!(v["gamma_scan"][0]["empirical_M"].as_f64().unwrap() > 0.0);
        assert_eq!(v["seeds"][3], 8);
    }
}
