//! Solution generators: the exact Fourier propagator for space-independent
//! coefficients, an implicit-midpoint stepper for the general case, and
//! backward-equation solutions obtained by time reversal.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coefficients::CoefficientFamily;
use crate::error::{Error, Result};
use crate::fmt::float;
use crate::spectral::{Field, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Cumulative integrals `I_jk(t) = int_0^t a_jk`, memoised per time.
#[derive(Debug)]
pub struct PropagatorCache {
    family: CoefficientFamily,
    integrals: Mutex<HashMap<u64, [f64; 4]>>,
}

impl PropagatorCache {
    pub fn new(family: &CoefficientFamily) -> Result<Self> {
        if !family.is_x_independent() {
            return Err(Error::Precondition(
                "the exact propagator needs space-independent coefficients".into(),
            ));
        }
        Ok(Self { family: family.clone(), integrals: Mutex::new(HashMap::new()) })
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    fn integrals(&self, t: f64) -> Result<[f64; 4]> {
        if let Some(v) = self.integrals.lock().expect("propagator cache").get(&t.to_bits()) {
            return Ok(*v);
        }
        let d = self.family.dim();
        let mut v = [0.0; 4];
        for (j, k) in self.family.pairs() {
            let i = self.family.entry(j, k).integral(0.0, t)?;
            v[j * 2 + k] = i;
            v[k * 2 + j] = i;
        }
        if d == 1 {
            v[1] = 0.0;
            v[2] = 0.0;
            v[3] = 0.0;
        }
        self.integrals.lock().expect("propagator cache").insert(t.to_bits(), v);
        Ok(v)
    }

    /// `A(t, xi) = sum_jk xi_j xi_k int_0^t a_jk`.
    pub fn exponent(&self, t: f64, xi: [f64; 2]) -> Result<f64> {
        let i = self.integrals(t)?;
        Ok(i[0] * xi[0] * xi[0] + 2.0 * i[1] * xi[0] * xi[1] + i[3] * xi[1] * xi[1])
    }

    /// Multiply every mode by `exp(-A(t, xi))` (forward) or `exp(+A(t, xi))` (backward).
    pub fn propagate(&self, u0: &Field, t: f64, direction: Direction) -> Result<Field> {
        let g = *u0.grid();
        let sign = match direction {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        };
        let exps: Vec<f64> = (0..g.len()).map(|i| self.exponent(t, g.frequency(i))).collect::<Result<_>>()?;
        if exps.iter().all(|a| *a == 0.0) {
            return Ok(u0.clone());
        }
        let mut out = Vec::with_capacity(g.len());
        let mut offender: Option<(f64, f64, f64)> = None;
        for (i, c) in u0.spectral().iter().enumerate() {
            let n = c.norm();
            if n == 0.0 {
                out.push(*c);
                continue;
            }
            let factor = (sign * exps[i]).exp();
            let direct = c * factor;
            if factor.is_finite() && direct.norm() > 0.0 && direct.re.is_finite() && direct.im.is_finite() {
                out.push(direct);
                continue;
            }
            // exp(ln|c| + s A) keeps intermediate products in range
            let mag = (n.ln() + sign * exps[i]).exp();
            if !mag.is_finite() {
                let xi = g.frequency_norm(i);
                if offender.map_or(true, |(x, _, _)| xi < x) {
                    offender = Some((xi, exps[i], n));
                }
            }
            out.push(c / n * mag);
        }
        if let Some((xi, a, n)) = offender {
            let budget = f64::MAX.ln() - n.ln().max(0.0) - (g.len() as f64).ln();
            return Err(Error::AmplificationOverflow { xi, radius: xi * (budget / a).sqrt() });
        }
        Field::from_spectral(g, out)
    }
}

/// Free-function form of [`PropagatorCache::propagate`].
pub fn propagate(u0: &Field, family: &CoefficientFamily, t: f64, direction: Direction) -> Result<Field> {
    PropagatorCache::new(family)?.propagate(u0, t, direction)
}

/// States at equally spaced times `t_i = i * horizon / steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &Field {
        &self.states[0]
    }

    pub fn last(&self) -> &Field {
        self.states.last().expect("nonempty trajectory")
    }

    /// Time-reversed trajectory on the same time grid.
    pub fn reversed(&self) -> Self {
        let t_end = *self.times.last().unwrap_or(&0.0);
        Self {
            times: self.times.iter().rev().map(|t| t_end - t).collect(),
            states: self.states.iter().rev().cloned().collect(),
        }
    }

    /// `t, l2_norm, h1_norm` rows.
    pub fn write_norms<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "l2_norm", "h1_norm"])?;
        for (t, u) in self.times.iter().zip(&self.states) {
            w.write_record([float(*t), float(u.l2_norm()), float(u.sobolev_norm(1.0))])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn time_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect()
}

fn check_run(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(crate::error::domain("horizon", horizon));
    }
    if steps == 0 {
        return Err(Error::Precondition("at least one time step is required".into()));
    }
    Ok(())
}

/// A forward-equation solver producing a trajectory on `[0, horizon]`.
pub trait ForwardSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, u0: &Field, family: &CoefficientFamily, horizon: f64, steps: usize) -> Result<Trajectory>;
}

/// Exact Fourier multipliers; space-independent coefficients only.
pub struct SpectralExact;

impl ForwardSolver for SpectralExact {
    fn name(&self) -> &'static str {
        "spectral-exact"
    }

    fn solve(&self, u0: &Field, family: &CoefficientFamily, horizon: f64, steps: usize) -> Result<Trajectory> {
        check_run(horizon, steps)?;
        let cache = PropagatorCache::new(family)?;
        let times = time_grid(horizon, steps);
        let states = times
            .par_iter()
            .map(|&t| cache.propagate(u0, t, Direction::Forward))
            .collect::<Result<_>>()?;
        Ok(Trajectory { times, states })
    }
}

/// Implicit midpoint in time with a preconditioned conjugate-gradient inner solve.
pub struct ImplicitMidpoint {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ImplicitMidpoint {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 500 }
    }
}

/// `-sum_jk d_j (a_jk(t, x) d_k u)`, a nonnegative symmetric operator.
fn elliptic_operator(family: &CoefficientFamily, coeffs: &[Field], u: &Field) -> Result<Field> {
    let d = family.dim();
    let mut out = Field::zeros(*u.grid());
    for k in 0..d {
        let du = u.derivative(k);
        for j in 0..d {
            let term = if family.is_x_independent() {
                du.scale(coeffs[j * d + k].physical()[0].re)
            } else {
                coeffs[j * d + k].mul(&du)?
            };
            out = out.sub(&term.derivative(j))?;
        }
    }
    Ok(out)
}

impl ImplicitMidpoint {
    /// Solve `(I + h K) x = b` where `K` is the elliptic operator at one time.
    fn solve_shifted(
        &self,
        family: &CoefficientFamily,
        coeffs: &[Field],
        t: f64,
        h: f64,
        b: &Field,
        guess: &Field,
    ) -> Result<Field> {
        let apply = |x: &Field| -> Result<Field> { x.combine(&elliptic_operator(family, coeffs, x)?, 1.0, h) };
        // the space-averaged symbol inverts the operator exactly when a is constant in x
        let precondition = |r: &Field| r.apply_multiplier(|xi| Complex64::new(1.0 / (1.0 + h * family.symbol(t, xi)), 0.0));
        let b_norm = b.l2_norm();
        if b_norm == 0.0 {
            return Ok(Field::zeros(*b.grid()));
        }
        let mut x = guess.clone();
        let mut r = b.sub(&apply(&x)?)?;
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = r.inner(&z)?.re;
        for _ in 0..self.max_iterations {
            if r.l2_norm() <= self.tolerance * b_norm {
                return Ok(x);
            }
            let ap = apply(&p)?;
            let alpha = rz / p.inner(&ap)?.re;
            x = x.combine(&p, 1.0, alpha)?;
            r = r.combine(&ap, 1.0, -alpha)?;
            z = precondition(&r);
            let rz_new = r.inner(&z)?.re;
            p = z.combine(&p, 1.0, rz_new / rz)?;
            rz = rz_new;
        }
        let residual = r.l2_norm() / b_norm;
        if residual <= self.tolerance {
            return Ok(x);
        }
        Err(Error::SolverStagnation { residual, iterations: self.max_iterations })
    }
}

impl ForwardSolver for ImplicitMidpoint {
    fn name(&self) -> &'static str {
        "implicit-midpoint"
    }

    fn solve(&self, u0: &Field, family: &CoefficientFamily, horizon: f64, steps: usize) -> Result<Trajectory> {
        check_run(horizon, steps)?;
        family.require_elliptic(horizon.max(f64::MIN_POSITIVE))?;
        let g: GridSpec = *u0.grid();
        let times = time_grid(horizon, steps);
        let dt = horizon / steps as f64;
        let d = family.dim();
        let mut states = Vec::with_capacity(steps + 1);
        states.push(u0.clone());
        let mut u = u0.clone();
        for n in 0..steps {
            let tm = 0.5 * (times[n] + times[n + 1]);
            let coeffs: Vec<Field> = (0..d * d)
                .map(|i| family.entry_field(g, tm, i / d, i % d))
                .collect::<Result<_>>()?;
            // (I + dt/2 K) u_{n+1} = (I - dt/2 K) u_n
            let rhs = u.combine(&elliptic_operator(family, &coeffs, &u)?, 1.0, -0.5 * dt)?;
            u = self.solve_shifted(family, &coeffs, tm, 0.5 * dt, &rhs, &u)?;
            states.push(u.clone());
        }
        Ok(Trajectory { times, states })
    }
}

pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn ForwardSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self { solvers: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SpectralExact));
        r.register(Box::new(ImplicitMidpoint::default()));
        r
    }

    pub fn register(&mut self, s: Box<dyn ForwardSolver>) {
        self.solvers.insert(s.name(), s);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ForwardSolver> {
        self.solvers
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy { kind: "solver", name: name.to_string() })
    }
}

/// Solution of the backward equation with `u(T) = final_data`: solve forward
/// with coefficients `a(T - s)` from `final_data` and reverse the time axis.
pub fn admissible_backward_solution(
    final_data: &Field,
    family: &CoefficientFamily,
    horizon: f64,
    steps: usize,
    solver: &dyn ForwardSolver,
) -> Result<Trajectory> {
    let forward = solver.solve(final_data, &family.reversed(horizon), horizon, steps)?;
    Ok(forward.reversed())
}

/// `(sum_i dt ||(u_{i+1} - u_{i-1}) / 2dt - K(t_i) u_i||^2)^(1/2)` over interior
/// times: the discrete residual of `d_t u + div(a grad u) = 0`.
pub fn backward_residual(traj: &Trajectory, family: &CoefficientFamily) -> Result<f64> {
    if traj.len() < 3 {
        return Err(Error::Precondition("residual needs at least three states".into()));
    }
    let g = *traj.first().grid();
    let d = family.dim();
    let dt = traj.times[1] - traj.times[0];
    let sq: Vec<f64> = (1..traj.len() - 1)
        .into_par_iter()
        .map(|i| {
            let coeffs: Vec<Field> = (0..d * d)
                .map(|e| family.entry_field(g, traj.times[i], e / d, e % d))
                .collect::<Result<_>>()?;
            let dudt = traj.states[i + 1].combine(&traj.states[i - 1], 0.5 / dt, -0.5 / dt)?;
            let k = elliptic_operator(family, &coeffs, &traj.states[i])?;
            Ok(dudt.sub(&k)?.l2_norm().powi(2) * dt)
        })
        .collect::<Result<_>>()?;
    Ok(sq.iter().sum::<f64>().sqrt())
}
