//! Dyadic frequency decomposition: smoothing operators `S_k`, blocks `Delta_k`,
//! and empirical checks of the Bernstein, Sobolev and Lipschitz block bounds.

use crate::error::{Error, Result};
use crate::spectral::Field;

pub const PLATEAU_INNER: f64 = 1.1;
pub const PLATEAU_OUTER: f64 = 1.9;

fn step_seed(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth even cutoff: 1 on `|s| <= 1.1`, 0 on `|s| >= 1.9`.
pub fn cutoff(s: f64) -> f64 {
    let s = s.abs();
    if s <= PLATEAU_INNER {
        return 1.0;
    }
    if s >= PLATEAU_OUTER {
        return 0.0;
    }
    let x = (PLATEAU_OUTER - s) / (PLATEAU_OUTER - PLATEAU_INNER);
    let (f, g) = (step_seed(x), step_seed(1.0 - x));
    f / (f + g)
}

/// Multiplier of `S_k` at frequency magnitude `r`; `S_{-1} = 0`.
pub fn smoothing_symbol(k: i32, r: f64) -> f64 {
    if k < 0 {
        0.0
    } else {
        cutoff(r / 2f64.powi(k))
    }
}

/// Multiplier of `Delta_k` at frequency magnitude `r`.
pub fn block_symbol(k: i32, r: f64) -> f64 {
    if k < 0 {
        0.0
    } else {
        smoothing_symbol(k, r) - smoothing_symbol(k - 1, r)
    }
}

/// Smallest `K` with `S_K = I` on the grid of `f`.
pub fn top_shell(f: &Field) -> i32 {
    let m = f.grid().max_frequency();
    let mut k = 0;
    while PLATEAU_INNER * 2f64.powi(k) < m {
        k += 1;
    }
    k
}

fn check_shell(f: &Field, k: i32, lo: i32) -> Result<()> {
    let hi = top_shell(f);
    if k < lo || k > hi {
        return Err(Error::ShellOutOfRange { k, lo, hi });
    }
    Ok(())
}

pub fn apply_s(k: i32, f: &Field) -> Result<Field> {
    check_shell(f, k, -1)?;
    Ok(smooth(k, f))
}

pub fn apply_delta(k: i32, f: &Field) -> Result<Field> {
    check_shell(f, k, 0)?;
    Ok(block(k, f))
}

/// `S_k` clamped to the identity above the top shell.
pub(crate) fn smooth(k: i32, f: &Field) -> Field {
    if k < 0 {
        return Field::zeros(*f.grid());
    }
    if k >= top_shell(f) {
        return f.clone();
    }
    f.apply_radial(|r| smoothing_symbol(k, r))
}

/// `Delta_k`, zero above the top shell.
pub(crate) fn block(k: i32, f: &Field) -> Field {
    if k < 0 || k > top_shell(f) {
        return Field::zeros(*f.grid());
    }
    f.apply_radial(|r| block_symbol(k, r))
}

/// All blocks `Delta_0 .. Delta_K`.
pub fn decompose(f: &Field) -> Vec<Field> {
    (0..=top_shell(f)).map(|k| block(k, f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinCheck {
    pub lower: f64,
    pub gradient: f64,
    pub upper: f64,
    /// The block vanished; the sandwich is vacuous rather than failed.
    pub zero_block: bool,
}

impl BernsteinCheck {
    pub fn holds(&self) -> bool {
        self.zero_block || (self.lower <= self.gradient && self.gradient <= self.upper)
    }

    /// Right inequality only; this is the statement that survives at `nu = 0`.
    pub fn upper_holds(&self) -> bool {
        self.zero_block || self.gradient <= self.upper
    }
}

/// `(2^(nu-1) ||u||, ||grad u||, 2^(nu+1) ||u||)` for a block `u = Delta_nu f`.
pub fn check_bernstein(block: &Field, nu: i32) -> BernsteinCheck {
    let n = block.l2_norm();
    BernsteinCheck {
        lower: 2f64.powi(nu - 1) * n,
        gradient: block.gradient_l2_norm(),
        upper: 2f64.powi(nu + 1) * n,
        zero_block: n == 0.0,
    }
}

/// `(sum_k 2^(2 k theta) ||Delta_k f||^2)^(1/2)`.
pub fn lp_sobolev_norm(f: &Field, theta: f64) -> f64 {
    decompose(f)
        .iter()
        .enumerate()
        .map(|(k, b)| 2f64.powf(2.0 * k as f64 * theta) * b.l2_norm().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Block-sum norm over the multiplier norm; `NaN` for the zero field.
pub fn equivalence_ratio(f: &Field, theta: f64) -> f64 {
    lp_sobolev_norm(f, theta) / f.sobolev_norm(theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipBlockCheck {
    /// `sup_k 2^k ||Delta_k a||_inf`
    pub block_sup: f64,
    /// `sup_k ||grad S_k a||_inf`
    pub gradient_sup: f64,
    /// `||a||_inf + ||grad a||_inf`
    pub lip_norm: f64,
}

impl LipBlockCheck {
    /// Ratio of the larger supremum to the Lipschitz norm.
    pub fn ratio(&self) -> f64 {
        self.block_sup.max(self.gradient_sup) / self.lip_norm
    }
}

pub fn lip_block_check(a: &Field) -> LipBlockCheck {
    let top = top_shell(a);
    let mut block_sup: f64 = 0.0;
    let mut gradient_sup: f64 = 0.0;
    for k in 0..=top {
        block_sup = block_sup.max(2f64.powi(k) * block(k, a).sup_norm());
        gradient_sup = gradient_sup.max(smooth(k, a).gradient_sup());
    }
    LipBlockCheck { block_sup, gradient_sup, lip_norm: a.lip_norm() }
}
