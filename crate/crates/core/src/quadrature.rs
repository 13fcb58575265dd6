//! Adaptive Simpson quadrature and monotone bisection.

use crate::error::{Error, Result};

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
}

/// Absolute floor applied to every local tolerance.
pub const ABS_FLOOR: f64 = 1e-300;

const MAX_DEPTH: u32 = 60;

/// Adaptive Simpson with interval bisection and Richardson correction.
///
/// The local tolerance is `max(rel_tol * |coarse estimate|, ABS_FLOOR)` and is
/// halved at every bisection. Returns [`Error::Quadrature`] when some branch
/// exhausts the depth budget without meeting its tolerance.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    adaptive_simpson_floor(f, a, b, rel_tol, ABS_FLOOR)
}

/// As [`adaptive_simpson`], with a caller-chosen absolute floor. Use it when the
/// integrand carries cancellation noise that no relative tolerance can resolve.
pub fn adaptive_simpson_floor<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Integral { value: 0.0, error_estimate: 0.0 });
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // seed the scale with a 9-point pass so spikes near one end are not missed
    let mut scale = whole.abs();
    for i in 1..8 {
        let x = a + (b - a) * i as f64 / 8.0;
        scale = scale.max(f(x).abs() * (b - a) / 8.0);
    }
    let tol = (rel_tol * scale).max(abs_floor.max(ABS_FLOOR));
    let mut state = State { failed: false, err: 0.0 };
    let value = recurse(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut state);
    if state.failed || !value.is_finite() {
        return Err(Error::Quadrature { estimate: state.err });
    }
    Ok(Integral { value, error_estimate: state.err })
}

struct State {
    failed: bool,
    err: f64,
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    state: &mut State,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || m <= a || m >= b {
        state.err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        state.failed = true;
        state.err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, state)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, state)
}

/// Bisection for an increasing function `g` on `[lo, hi]` with `g(lo) <= target <= g(hi)`.
///
/// Stops once the residual `|g(x) - target|` is at most `tol` or the bracket
/// collapses to adjacent floats.
pub fn bisect_increasing<G>(g: G, mut lo: f64, mut hi: f64, target: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let mut best = lo;
    let mut best_res = f64::INFINITY;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let val = g(mid)?;
        let res = (val - target).abs();
        if res < best_res {
            best = mid;
            best_res = res;
        }
        if res <= tol || mid <= lo || mid >= hi {
            break;
        }
        if val < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
