//! Time-dependent diffusion coefficients: profile strategies, symmetric
//! families, ellipticity and log-Lipschitz diagnostics, and time mollification.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_floor, ABS_FLOOR};
use crate::spectral::{Field, GridSpec};
use crate::weights::modulus;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    Constant,
    Lipschitz,
    LogLipschitz,
}

/// A scalar function of time, one entry of a coefficient matrix.
pub trait TimeProfile: Debug + Send + Sync {
    fn kind(&self) -> &'static str;
    fn value(&self, t: f64) -> f64;
    fn class(&self) -> Regularity;

    /// Closed-form `int_0^t`, when available.
    fn antiderivative(&self, _t: f64) -> Option<f64> {
        None
    }

    /// Known derivative discontinuities, used to split quadratures.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `value(t) - value(s)`; overridden where a large offset would cancel.
    fn increment(&self, t: f64, s: f64) -> f64 {
        self.value(t) - self.value(s)
    }

    fn integral(&self, t0: f64, t1: f64) -> Result<f64> {
        if let (Some(a), Some(b)) = (self.antiderivative(t0), self.antiderivative(t1)) {
            return Ok(b - a);
        }
        split_integral(|t| self.value(t), t0, t1, &self.breakpoints())
    }
}

fn split_integral<F: Fn(f64) -> f64>(f: F, t0: f64, t1: f64, cuts: &[f64]) -> Result<f64> {
    split_integral_floor(f, t0, t1, cuts, ABS_FLOOR)
}

fn split_integral_floor<F: Fn(f64) -> f64>(f: F, t0: f64, t1: f64, cuts: &[f64], floor: f64) -> Result<f64> {
    let (lo, hi, sign) = if t0 <= t1 { (t0, t1, 1.0) } else { (t1, t0, -1.0) };
    let mut knots = vec![lo];
    knots.extend(cuts.iter().copied().filter(|c| *c > lo && *c < hi));
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adaptive_simpson_floor(&f, w[0], w[1], QUAD_TOL, floor)?.value;
    }
    Ok(sign * total)
}

#[derive(Debug, Clone)]
pub struct Constant(pub f64);

impl TimeProfile for Constant {
    fn kind(&self) -> &'static str {
        "constant"
    }
    fn value(&self, _t: f64) -> f64 {
        self.0
    }
    fn class(&self) -> Regularity {
        Regularity::Constant
    }
    fn antiderivative(&self, t: f64) -> Option<f64> {
        Some(self.0 * t)
    }
}

/// `offset + slope * t`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub offset: f64,
    pub slope: f64,
}

impl TimeProfile for Linear {
    fn kind(&self) -> &'static str {
        "linear"
    }
    fn value(&self, t: f64) -> f64 {
        self.offset + self.slope * t
    }
    fn class(&self) -> Regularity {
        if self.slope == 0.0 {
            Regularity::Constant
        } else {
            Regularity::Lipschitz
        }
    }
    fn antiderivative(&self, t: f64) -> Option<f64> {
        Some(self.offset * t + 0.5 * self.slope * t * t)
    }
}

/// `t (1 - log t)` on `(0, 1]`, 0 at the origin, 1 beyond. Its modulus of
/// continuity is exactly `s (1 + |log s|)`, and it is not Lipschitz at 0.
pub fn ll_shape(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * (1.0 - t.ln())
    }
}

fn ll_shape_antiderivative(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        0.75 + (t - 1.0)
    } else {
        0.75 * t * t - 0.5 * t * t * t.ln()
    }
}

/// `base + amplitude * ll_shape(t)`; its log-Lipschitz seminorm is `|amplitude|`.
#[derive(Debug, Clone)]
pub struct LlExemplar {
    pub base: f64,
    pub amplitude: f64,
}

impl TimeProfile for LlExemplar {
    fn kind(&self) -> &'static str {
        "ll_exemplar"
    }
    fn value(&self, t: f64) -> f64 {
        self.base + self.amplitude * ll_shape(t)
    }
    fn class(&self) -> Regularity {
        Regularity::LogLipschitz
    }
    fn antiderivative(&self, t: f64) -> Option<f64> {
        Some(self.base * t + self.amplitude * ll_shape_antiderivative(t))
    }
    fn increment(&self, t: f64, s: f64) -> f64 {
        self.amplitude * (ll_shape(t) - ll_shape(s))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
}

/// Piecewise-linear interpolation of `(t, value)` samples, held constant outside.
#[derive(Debug, Clone)]
pub struct Sampled {
    times: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Sampled {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("coefficient samples"));
        }
        if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Format("non-finite coefficient sample".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Format("duplicate sample time".into()));
        }
        let (times, values): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let mut cumulative = vec![0.0; times.len()];
        for i in 1..times.len() {
            cumulative[i] =
                cumulative[i - 1] + 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
        }
        Ok(Self { times, values, cumulative })
    }

    /// Read a headed `t,value` CSV.
    pub fn from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut samples = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |j: usize| -> Result<f64> {
                rec.get(j)
                    .ok_or_else(|| Error::Format(format!("row {i}: missing column {j}")))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("row {i}: {e}")))
            };
            samples.push((get(0)?, get(1)?));
        }
        Self::new(samples)
    }

    fn locate(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1).min(self.times.len() - 1)
    }
}

impl TimeProfile for Sampled {
    fn kind(&self) -> &'static str {
        "sampled"
    }
    fn value(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.locate(t);
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
    fn class(&self) -> Regularity {
        if self.values.windows(2).all(|w| w[0] == w[1]) {
            Regularity::Constant
        } else {
            Regularity::Lipschitz
        }
    }
    fn antiderivative(&self, t: f64) -> Option<f64> {
        // cumulative integral measured from t = 0, constant continuation outside
        let from_first = |s: f64| -> f64 {
            let n = self.times.len();
            if s <= self.times[0] {
                return self.values[0] * (s - self.times[0]);
            }
            if s >= self.times[n - 1] {
                return self.cumulative[n - 1] + self.values[n - 1] * (s - self.times[n - 1]);
            }
            let i = self.locate(s);
            let v = self.value(s);
            self.cumulative[i] + 0.5 * (self.values[i] + v) * (s - self.times[i])
        };
        Some(from_first(t) - from_first(0.0))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.times.clone()
    }
}

/// `inner(horizon - t)`: the coefficient seen by the time-reversed problem.
#[derive(Debug, Clone)]
pub struct Reversed {
    pub inner: Arc<dyn TimeProfile>,
    pub horizon: f64,
}

impl TimeProfile for Reversed {
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }
    fn value(&self, t: f64) -> f64 {
        self.inner.value(self.horizon - t)
    }
    fn class(&self) -> Regularity {
        self.inner.class()
    }
    fn antiderivative(&self, t: f64) -> Option<f64> {
        let f = |s| self.inner.antiderivative(s);
        Some(f(self.horizon)? - f(self.horizon - t)?)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().into_iter().map(|b| self.horizon - b).collect()
    }
    fn increment(&self, t: f64, s: f64) -> f64 {
        self.inner.increment(self.horizon - t, self.horizon - s)
    }
}

/// Normalised bump `exp(-1 / (1 - 4 s^2)) / Z` on `(-1/2, 1/2)`.
#[derive(Debug, Clone, Copy)]
pub struct Mollifier {
    normalizer: f64,
}

impl Mollifier {
    pub fn standard() -> Self {
        static Z: OnceLock<f64> = OnceLock::new();
        let normalizer = *Z.get_or_init(|| {
            adaptive_simpson(bump, -0.5, 0.5, 1e-14).expect("bump integral converges").value
        });
        Self { normalizer }
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn value(&self, s: f64) -> f64 {
        bump(s) / self.normalizer
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let q = 1.0 - 4.0 * s * s;
        if q <= 0.0 {
            return 0.0;
        }
        -8.0 * s / (q * q) * self.value(s)
    }

    /// `||rho'||_{L1} = 2 rho(0)` for an even bump decreasing away from 0.
    pub fn derivative_l1(&self) -> f64 {
        2.0 * self.value(0.0)
    }
}

fn bump(s: f64) -> f64 {
    let q = 1.0 - 4.0 * s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Time convolution with `rho_eps`, continuing the profile by constants
/// outside `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub inner: Arc<dyn TimeProfile>,
    pub epsilon: f64,
    pub horizon: f64,
    pub rho: Mollifier,
}

impl Mollified {
    fn extended(&self, t: f64) -> f64 {
        self.inner.value(t.clamp(0.0, self.horizon))
    }

    fn window_cuts(&self, t: f64) -> Vec<f64> {
        let mut cuts: Vec<f64> = vec![0.0, self.horizon];
        cuts.extend(self.inner.breakpoints());
        // t - eps r = c  <=>  r = (t - c) / eps
        cuts.into_iter().map(|c| (t - c) / self.epsilon).filter(|r| r.abs() < 0.5).collect()
    }

    // `a(t - eps r) - a(t)` carries rounding noise of order ulp(a(t)).
    fn noise_floor(&self, at: f64) -> f64 {
        64.0 * f64::EPSILON * at.abs().max(f64::MIN_POSITIVE)
    }

    /// `a_eps(t) - a(t)`, formed so that it vanishes identically for constants.
    pub fn deviation(&self, t: f64) -> Result<f64> {
        let at = self.extended(t);
        split_integral_floor(
            |r| (self.extended(t - self.epsilon * r) - at) * self.rho.value(r),
            -0.5,
            0.5,
            &self.window_cuts(t),
            self.noise_floor(at),
        )
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let at = self.extended(t);
        let s = split_integral_floor(
            |r| (self.extended(t - self.epsilon * r) - at) * self.rho.derivative(r),
            -0.5,
            0.5,
            &self.window_cuts(t),
            self.noise_floor(at),
        )?;
        Ok(s / self.epsilon)
    }
}

impl TimeProfile for Mollified {
    fn kind(&self) -> &'static str {
        "mollified"
    }
    fn value(&self, t: f64) -> f64 {
        self.extended(t) + self.deviation(t).unwrap_or(f64::NAN)
    }
    fn class(&self) -> Regularity {
        self.inner.class().min(Regularity::Lipschitz)
    }
}

/// Entry of a coefficient family as declared in configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(default)]
    pub row: usize,
    #[serde(default)]
    pub col: usize,
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

impl ProfileSpec {
    pub fn new(kind: &str, params: &[(&str, f64)]) -> Self {
        Self {
            kind: kind.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ..Default::default()
        }
    }

    pub fn at(mut self, row: usize, col: usize) -> Self {
        self.row = row;
        self.col = col;
        self
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::Precondition(format!("{} entry needs parameter '{name}'", self.kind)))
    }

    pub fn param_or(&self, name: &str, default: f64) -> f64 {
        self.params.get(name).copied().unwrap_or(default)
    }
}

pub trait ProfileBuilder: Send + Sync {
    fn build(&self, spec: &ProfileSpec) -> Result<Arc<dyn TimeProfile>>;
}

impl<F> ProfileBuilder for F
where
    F: Fn(&ProfileSpec) -> Result<Arc<dyn TimeProfile>> + Send + Sync,
{
    fn build(&self, spec: &ProfileSpec) -> Result<Arc<dyn TimeProfile>> {
        self(spec)
    }
}

/// Named constructors for [`TimeProfile`] kinds.
pub struct ProfileRegistry {
    builders: BTreeMap<String, Box<dyn ProfileBuilder>>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("constant", |s: &ProfileSpec| {
            Ok(Arc::new(Constant(s.param("value")?)) as Arc<dyn TimeProfile>)
        });
        r.register("linear", |s: &ProfileSpec| {
            Ok(Arc::new(Linear { offset: s.param_or("offset", 0.0), slope: s.param("slope")? })
                as Arc<dyn TimeProfile>)
        });
        r.register("ll_exemplar", |s: &ProfileSpec| {
            Ok(Arc::new(LlExemplar {
                base: s.param_or("base", 1.0),
                amplitude: s.param("amplitude")?,
            }) as Arc<dyn TimeProfile>)
        });
        r.register("sampled", |s: &ProfileSpec| {
            let path = s
                .csv
                .as_ref()
                .ok_or_else(|| Error::Precondition("sampled entry needs a csv path".into()))?;
            Ok(Arc::new(Sampled::from_csv(std::fs::File::open(path)?)?) as Arc<dyn TimeProfile>)
        });
        r
    }

    pub fn register<B: ProfileBuilder + 'static>(&mut self, name: &str, builder: B) {
        self.builders.insert(name.to_string(), Box::new(builder));
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &ProfileSpec) -> Result<Arc<dyn TimeProfile>> {
        self.builders
            .get(&spec.kind)
            .ok_or_else(|| Error::UnknownStrategy { kind: "coefficient", name: spec.kind.clone() })?
            .build(spec)
    }
}

/// Spatial factor `1 + amplitude sin(mode x_1)` multiplying every entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceModulation {
    pub amplitude: f64,
    pub mode: f64,
}

impl SpaceModulation {
    pub fn factor(&self, x: [f64; 2]) -> f64 {
        1.0 + self.amplitude * (self.mode * x[0]).sin()
    }

    pub fn range(&self) -> (f64, f64) {
        (1.0 - self.amplitude.abs(), 1.0 + self.amplitude.abs())
    }

    pub fn gradient_sup(&self) -> f64 {
        (self.amplitude * self.mode).abs()
    }
}

/// Declarative family description, resolved through a [`ProfileRegistry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub entries: Vec<ProfileSpec>,
    #[serde(default)]
    pub spatial: Option<SpaceModulation>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

fn one() -> usize {
    1
}

impl FamilySpec {
    pub fn build(&self, registry: &ProfileRegistry) -> Result<CoefficientFamily> {
        let d = self.dim;
        if d != 1 && d != 2 {
            return Err(Error::Precondition(format!("coefficient dimension {d} not in {{1, 2}}")));
        }
        let mut slots: Vec<Option<Arc<dyn TimeProfile>>> = vec![None; d * d];
        for e in &self.entries {
            let (r, c) = (e.row.min(e.col), e.row.max(e.col));
            if c >= d {
                return Err(Error::Precondition(format!("entry ({}, {}) outside {d}x{d}", e.row, e.col)));
            }
            if slots[r * d + c].is_some() {
                return Err(Error::Precondition(format!("entry ({r}, {c}) declared twice")));
            }
            slots[r * d + c] = Some(registry.build(e)?);
        }
        let mut entries = Vec::with_capacity(d * d);
        for j in 0..d {
            for k in 0..d {
                let (r, c) = (j.min(k), j.max(k));
                let e = match &slots[r * d + c] {
                    Some(p) => p.clone(),
                    None if r != c => Arc::new(Constant(0.0)) as Arc<dyn TimeProfile>,
                    None => return Err(Error::Precondition(format!("diagonal entry ({r}, {r}) missing"))),
                };
                entries.push(e);
            }
        }
        Ok(CoefficientFamily { dim: d, entries, spatial: self.spatial, declared_kappa: self.kappa })
    }
}

/// Symmetric matrix of time profiles, optionally modulated in space.
#[derive(Debug, Clone)]
pub struct CoefficientFamily {
    dim: usize,
    entries: Vec<Arc<dyn TimeProfile>>,
    spatial: Option<SpaceModulation>,
    declared_kappa: Option<f64>,
}

/// Extremal Rayleigh quotients over the sampled `(t, xi)` set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipticity {
    pub lo: f64,
    pub hi: f64,
}

impl Ellipticity {
    pub fn admissible(&self) -> bool {
        self.lo > 0.0
    }

    /// Largest `kappa` with `kappa <= lo` and `hi <= 1 / kappa`.
    pub fn kappa(&self) -> f64 {
        self.lo.min(1.0 / self.hi)
    }

    /// Whether `|xi|^2 / 2 <= a(t, xi) <= 2 |xi|^2`.
    pub fn within_normalization(&self) -> bool {
        self.lo >= 0.5 && self.hi <= 2.0
    }
}

impl CoefficientFamily {
    /// Diagonal family with the same profile on every diagonal entry.
    pub fn isotropic(dim: usize, profile: Arc<dyn TimeProfile>) -> Self {
        let entries = (0..dim * dim)
            .map(|i| {
                if i / dim == i % dim {
                    profile.clone()
                } else {
                    Arc::new(Constant(0.0)) as Arc<dyn TimeProfile>
                }
            })
            .collect();
        Self { dim, entries, spatial: None, declared_kappa: None }
    }

    /// `a = identity`.
    pub fn heat(dim: usize) -> Self {
        Self::isotropic(dim, Arc::new(Constant(1.0)))
    }

    pub fn ll_exemplar(dim: usize, base: f64, amplitude: f64) -> Self {
        Self::isotropic(dim, Arc::new(LlExemplar { base, amplitude }))
    }

    pub fn with_spatial(mut self, m: SpaceModulation) -> Self {
        self.spatial = Some(m);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn declared_kappa(&self) -> Option<f64> {
        self.declared_kappa
    }

    pub fn spatial(&self) -> Option<SpaceModulation> {
        self.spatial
    }

    pub fn is_x_independent(&self) -> bool {
        self.spatial.is_none()
    }

    pub fn entry(&self, j: usize, k: usize) -> &Arc<dyn TimeProfile> {
        &self.entries[j * self.dim + k]
    }

    pub fn class(&self) -> Regularity {
        self.entries.iter().map(|e| e.class()).max().unwrap_or(Regularity::Constant)
    }

    /// Upper-triangle index pairs `(j, k)` with `j <= k`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let d = self.dim;
        (0..d).flat_map(|j| (j..d).map(move |k| (j, k))).collect()
    }

    /// `sum_jk a_jk(t) xi_j xi_k` (spatial factor excluded).
    pub fn symbol(&self, t: f64, xi: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.dim {
            for k in 0..self.dim {
                s += self.entry(j, k).value(t) * xi[j] * xi[k];
            }
        }
        s
    }

    /// Same family on the reversed time axis `s -> horizon - s`.
    pub fn reversed(&self, horizon: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Arc::new(Reversed { inner: e.clone(), horizon }) as Arc<dyn TimeProfile>)
            .collect();
        Self { entries, ..self.clone() }
    }

    pub fn ellipticity_constants(&self, t_samples: &[f64], xi_samples: &[[f64; 2]]) -> Result<Ellipticity> {
        if t_samples.is_empty() {
            return Err(Error::Empty("time samples"));
        }
        let xs: Vec<&[f64; 2]> = xi_samples.iter().filter(|x| x[0] != 0.0 || x[1] != 0.0).collect();
        if xs.is_empty() {
            return Err(Error::Empty("nonzero frequency samples"));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in t_samples {
            for xi in &xs {
                let xi = if self.dim == 1 { [xi[0], 0.0] } else { **xi };
                let n2 = xi[0] * xi[0] + xi[1] * xi[1];
                if n2 == 0.0 {
                    continue;
                }
                let q = self.symbol(t, xi) / n2;
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        if let Some(m) = self.spatial {
            let (g0, g1) = m.range();
            let cands = [lo * g0, lo * g1, hi * g0, hi * g1];
            lo = cands.iter().copied().fold(f64::INFINITY, f64::min);
            hi = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        Ok(Ellipticity { lo, hi })
    }

    /// Ellipticity on a default sample set, failing when degenerate.
    pub fn require_elliptic(&self, horizon: f64) -> Result<Ellipticity> {
        let e = self.ellipticity_constants(&uniform_times(horizon, 257), &unit_directions(self.dim, 64))?;
        if !e.admissible() {
            return Err(Error::Degenerate(e.lo));
        }
        Ok(e)
    }

    /// Empirical log-Lipschitz seminorm over `(t, s)` pairs with `0 < |t-s| <= 1`.
    pub fn ll_seminorm(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        self.pair_quotient(pairs, |h| modulus(h).unwrap_or(f64::INFINITY))
    }

    /// Plain Lipschitz quotient, for class diagnostics.
    pub fn lipschitz_quotient(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        self.pair_quotient(pairs, |h| h)
    }

    fn pair_quotient<M: Fn(f64) -> f64>(&self, pairs: &[(f64, f64)], m: M) -> Result<f64> {
        let valid: Vec<&(f64, f64)> =
            pairs.iter().filter(|(t, s)| (t - s).abs() > 0.0 && (t - s).abs() <= 1.0).collect();
        if valid.is_empty() {
            return Err(Error::Empty("log-Lipschitz sample pairs"));
        }
        let g = self.spatial.map_or(1.0, |m| m.range().1);
        let mut best: f64 = 0.0;
        for (j, k) in self.pairs() {
            let e = self.entry(j, k);
            for (t, s) in &valid {
                best = best.max(e.increment(*t, *s).abs() / m((t - s).abs()));
            }
        }
        Ok(best * g)
    }

    /// `(sup |a_jk|, sup |grad_x a_jk|)` over time samples.
    pub fn amplitude_constants(&self, t_samples: &[f64]) -> (f64, f64) {
        let mut sup: f64 = 0.0;
        for (j, k) in self.pairs() {
            for &t in t_samples {
                sup = sup.max(self.entry(j, k).value(t).abs());
            }
        }
        match self.spatial {
            Some(m) => (sup * m.range().1, sup * m.gradient_sup()),
            None => (sup, 0.0),
        }
    }

    /// Entry `(j, k)` at time `t` as a field on `grid`.
    pub fn entry_field(&self, grid: GridSpec, t: f64, j: usize, k: usize) -> Result<Field> {
        let p = self.entry(j, k).value(t);
        match self.spatial {
            Some(m) => Field::from_fn(grid, |x| p * m.factor(x)),
            None => Field::constant(grid, p),
        }
    }

    /// Time-mollified family with constant continuation outside `[0, horizon]`.
    pub fn mollify(&self, epsilon: f64, horizon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(domain("mollification width", epsilon));
        }
        let rho = Mollifier::standard();
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Arc::new(Mollified { inner: e.clone(), epsilon, horizon, rho }) as Arc<dyn TimeProfile>
            })
            .collect();
        Ok(Self { entries, ..self.clone() })
    }

    /// Measured `sup |a_eps - a|` and `sup |d/dt a_eps|` over `t_samples`.
    pub fn mollifier_bounds_check(&self, epsilon: f64, horizon: f64, t_samples: &[f64]) -> Result<MollifierCheck> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(domain("mollification width", epsilon));
        }
        if t_samples.is_empty() {
            return Err(Error::Empty("time samples"));
        }
        let rho = Mollifier::standard();
        let g = self.spatial.map_or(1.0, |m| m.range().1);
        let (mut dev, mut der): (f64, f64) = (0.0, 0.0);
        for (j, k) in self.pairs() {
            let m = Mollified { inner: self.entry(j, k).clone(), epsilon, horizon, rho };
            for &t in t_samples {
                dev = dev.max(m.deviation(t)?.abs());
                der = der.max(m.derivative(t)?.abs());
            }
        }
        let seminorm = self.ll_seminorm(&default_pairs(horizon))?;
        let log_term = epsilon.ln().abs() + 1.0;
        Ok(MollifierCheck {
            epsilon,
            deviation: dev * g,
            derivative: der * g,
            deviation_bound: seminorm * epsilon * log_term,
            derivative_bound: seminorm * rho.derivative_l1() * log_term,
            seminorm,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierCheck {
    pub epsilon: f64,
    pub deviation: f64,
    pub derivative: f64,
    pub deviation_bound: f64,
    pub derivative_bound: f64,
    pub seminorm: f64,
}

impl MollifierCheck {
    /// Both bounds, with a relative slack for quadrature error.
    pub fn holds(&self) -> bool {
        let ok = |v: f64, b: f64| v <= b * (1.0 + 1e-9) + 1e-14;
        ok(self.deviation, self.deviation_bound) && ok(self.derivative, self.derivative_bound)
    }
}

/// `n` equally spaced times covering `[0, horizon]`.
pub fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
}

/// Unit directions in the plane (only the first is used in 1D).
pub fn unit_directions(dim: usize, n: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        return vec![[1.0, 0.0]];
    }
    (0..n)
        .map(|i| {
            let a = std::f64::consts::PI * i as f64 / n as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Pairs with gaps `2^-j`, `j = 0..40`, anchored at the origin, the
/// midpoint and the end of `[0, horizon]`.
pub fn default_pairs(horizon: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for j in 0..=40 {
        let h = 2f64.powi(-j).min(horizon.max(f64::MIN_POSITIVE));
        for anchor in [0.0, 0.25 * horizon, 0.5 * horizon, horizon - h] {
            if anchor >= 0.0 && anchor + h <= horizon {
                out.push((anchor, anchor + h));
            }
        }
    }
    out
}
