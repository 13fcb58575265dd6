//! Modified paraproduct `T_a^m u = S_{m-1}a S_{m+2}u + sum_{k>=m+3} S_{k-3}a Delta_k u`
//! and the measurable ratios behind its mapping, positivity, adjoint and
//! commutator estimates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::littlewood_paley::{block, smooth, top_shell};
use crate::spectral::{band_limited_random, Field};

fn check(a: &Field, u: &Field) -> Result<i32> {
    a.same_grid(u)?;
    Ok(top_shell(u))
}

/// `T_a^m u`. The block sum stops at the top shell of the grid, which is exact
/// for grid-resolved inputs.
pub fn apply_paraproduct(a: &Field, m: u32, u: &Field) -> Result<Field> {
    let top = check(a, u)?;
    let m = m as i32;
    let mut out = smooth(m - 1, a).mul(&smooth(m + 2, u))?;
    for k in (m + 3)..=top {
        out = out.add(&smooth(k - 3, a).mul(&block(k, u))?)?;
    }
    Ok(out)
}

/// `(T_a^m)^* v`, by reversing the composition: each product becomes
/// multiplication by the conjugate, applied before the (self-adjoint) multiplier.
pub fn apply_adjoint(a: &Field, m: u32, v: &Field) -> Result<Field> {
    let top = check(a, v)?;
    let m = m as i32;
    let mut out = smooth(m + 2, &smooth(m - 1, a).conj().mul(v)?);
    for k in (m + 3)..=top {
        out = out.add(&block(k, &smooth(k - 3, a).conj().mul(v)?))?;
    }
    Ok(out)
}

/// `Re <T_a^m u | u> / ||u||^2`.
pub fn rayleigh_quotient(a: &Field, m: u32, u: &Field) -> Result<f64> {
    let n2 = u.l2_norm().powi(2);
    if n2 == 0.0 {
        return Err(Error::Precondition("zero test field".into()));
    }
    Ok(u.inner(&apply_paraproduct(a, m, u)?)?.re / n2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityCertificate {
    pub m: u32,
    pub kappa: f64,
    /// Worst `quotient - kappa/2` over the test set at the certified order.
    pub worst_margin: f64,
    /// Worst margin for every order tried, starting at 0.
    pub margins: Vec<f64>,
    pub test_count: usize,
}

impl PositivityCertificate {
    /// Whether the recorded margins never decrease with the order.
    pub fn monotone(&self) -> bool {
        self.margins.windows(2).all(|w| w[1] >= w[0])
    }
}

fn worst_margin(a: &Field, kappa: f64, m: u32, fields: &[Field]) -> Result<f64> {
    let q: Vec<f64> = fields.par_iter().map(|u| rayleigh_quotient(a, m, u)).collect::<Result<_>>()?;
    Ok(q.into_iter().fold(f64::INFINITY, f64::min) - 0.5 * kappa)
}

/// Smallest order `m <= m_max` with `<T_a^m u | u> >= kappa/2 ||u||^2` on every test field.
pub fn min_positivity_order(
    a: &Field,
    kappa: f64,
    test_fields: &[Field],
    m_max: u32,
) -> Result<PositivityCertificate> {
    if test_fields.is_empty() {
        return Err(Error::Empty("positivity test fields"));
    }
    if !(kappa > 0.0) {
        return Err(crate::error::domain("kappa", kappa));
    }
    let lo = a.min_real();
    if lo < kappa || a.max_imag() > 1e-12 * a.sup_norm() {
        return Err(Error::Precondition(format!(
            "coefficient must be real with a >= kappa = {kappa}; minimum is {lo}"
        )));
    }
    let mut margins = Vec::new();
    for m in 0..=m_max {
        let w = worst_margin(a, kappa, m, test_fields)?;
        margins.push(w);
        if w >= 0.0 {
            return Ok(PositivityCertificate {
                m,
                kappa,
                worst_margin: w,
                margins,
                test_count: test_fields.len(),
            });
        }
    }
    let worst = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Err(Error::NoPositiveOrder { m_max: m_max as usize, worst_margin: worst })
}

/// Random band-limited test fields plus deterministic ones concentrated at the
/// lowest and highest resolved shells.
pub fn positivity_test_fields(a_like: &Field, count: usize, seed: u64) -> Result<Vec<Field>> {
    let g = *a_like.grid();
    let nyq_shell = (g.nyquist().log2().ceil() as i32 - 1).max(1);
    let mut out = Vec::with_capacity(count);
    let adversarial = [(0, 0), (0, 2), (nyq_shell - 1, nyq_shell - 1), (0, nyq_shell - 1)];
    for (lo, hi) in adversarial.iter().take(count) {
        out.push(band_limited_random(g, *lo, *hi, seed ^ 0x9e37_79b9)?);
    }
    let mut i = 0u64;
    while out.len() < count {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
        let lo = (s % nyq_shell as u64) as i32;
        let hi = lo + ((s / 7) % (nyq_shell - lo) as u64) as i32;
        out.push(band_limited_random(g, lo.min(hi), hi, s)?);
        i += 1;
    }
    Ok(out)
}

/// `||T_a^m u||_{H^theta} / (||a||_inf ||u||_{H^theta})`.
pub fn mapping_ratio(a: &Field, m: u32, u: &Field, theta: f64) -> Result<f64> {
    let t = apply_paraproduct(a, m, u)?;
    Ok(t.sobolev_norm(theta) / (a.sup_norm() * u.sobolev_norm(theta)))
}

/// `max_j ||(T_a^m - (T_a^m)^*) d_j u||_{L2}`.
pub fn adjoint_defect_norm(a: &Field, m: u32, u: &Field) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for axis in 0..u.grid().dim {
        let du = u.derivative(axis);
        let d = apply_paraproduct(a, m, &du)?.sub(&apply_adjoint(a, m, &du)?)?;
        worst = worst.max(d.l2_norm());
    }
    Ok(worst)
}

pub fn adjoint_defect_ratio(a: &Field, m: u32, u: &Field) -> Result<f64> {
    Ok(adjoint_defect_norm(a, m, u)? / (a.lip_norm() * u.l2_norm()))
}

/// `(sum_k 2^(-2 k theta) ||d_j [Delta_k, T_a^m] d_l u||^2)^(1/2)`, maximised over axis pairs.
pub fn commutator_block_norms(a: &Field, m: u32, u: &Field, theta: f64) -> Result<f64> {
    let top = check(a, u)?;
    let dim = u.grid().dim;
    let mut worst: f64 = 0.0;
    for l in 0..dim {
        let v = u.derivative(l);
        let tv = apply_paraproduct(a, m, &v)?;
        let parts: Vec<Field> = (0..=top)
            .into_par_iter()
            .map(|k| Ok(block(k, &tv).sub(&apply_paraproduct(a, m, &block(k, &v))?)?))
            .collect::<Result<_>>()?;
        for j in 0..dim {
            let s: f64 = parts
                .iter()
                .enumerate()
                .map(|(k, c)| 2f64.powf(-2.0 * k as f64 * theta) * c.derivative(j).l2_norm().powi(2))
                .sum();
            worst = worst.max(s.sqrt());
        }
    }
    Ok(worst)
}

pub fn commutator_ratio(a: &Field, m: u32, u: &Field, theta: f64) -> Result<f64> {
    Ok(commutator_block_norms(a, m, u, theta)? / (a.lip_norm() * u.sobolev_norm(1.0 - theta)))
}

/// `(||au - T u||_{H^1}, ||a d u - T d u||_{L2})`, each over `||a||_Lip ||u||_{L2}`.
pub fn remainder_smoothing_check(a: &Field, m: u32, u: &Field) -> Result<(f64, f64)> {
    let scale = a.lip_norm() * u.l2_norm();
    let r = a.mul(u)?.sub(&apply_paraproduct(a, m, u)?)?;
    let mut l2: f64 = 0.0;
    for axis in 0..u.grid().dim {
        let du = u.derivative(axis);
        l2 = l2.max(a.mul(&du)?.sub(&apply_paraproduct(a, m, &du)?)?.l2_norm());
    }
    Ok((r.sobolev_norm(1.0) / scale, l2 / scale))
}

/// `||au - T u||_{H^theta} / (||a||_Lip ||u||_{H^(theta-1)})`; at `theta = 0, 1`
/// these are the endpoints interpolated by the intermediate values.
pub fn remainder_ratio(a: &Field, m: u32, u: &Field, theta: f64) -> Result<f64> {
    let r = a.mul(u)?.sub(&apply_paraproduct(a, m, u)?)?;
    Ok(r.sobolev_norm(theta) / (a.lip_norm() * u.sobolev_norm(theta - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn grid(n: usize) -> GridSpec {
        GridSpec::one_d(2.0 * std::f64::consts::PI, n).unwrap()
    }

    fn sin_coefficient(g: GridSpec) -> Field {
        Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin()).unwrap()
    }

    #[test]
    fn constant_coefficient_is_scalar_from_order_one() {
        let g = grid(256);
        let c = Field::constant(g, 2.0).unwrap();
        let u = band_limited_random(g, 0, 6, 4).unwrap();
        for m in 1..=8 {
            let t = apply_paraproduct(&c, m, &u).unwrap();
            assert!(t.sub(&u.scale(2.0)).unwrap().l2_norm() < 1e-12, "m = {m}");
        }
        // order 0 drops S_{-1} c = 0 and loses the low shells: T = c (I - S_2)
        let t0 = apply_paraproduct(&c, 0, &u).unwrap();
        let expect = u.sub(&smooth(2, &u)).unwrap().scale(2.0);
        assert!(t0.sub(&expect).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn zero_input_and_grid_mismatch() {
        let g = grid(128);
        let a = sin_coefficient(g);
        assert_eq!(apply_paraproduct(&a, 2, &Field::zeros(g)).unwrap().l2_norm(), 0.0);
        assert!(apply_paraproduct(&a, 1, &Field::zeros(grid(256))).is_err());
    }

    #[test]
    fn band_limited_coefficient_at_order_one_is_multiplication() {
        let g = grid(256);
        let a = sin_coefficient(g);
        let u = band_limited_random(g, 0, 6, 9).unwrap();
        let t = apply_paraproduct(&a, 1, &u).unwrap();
        assert!(t.sub(&a.mul(&u).unwrap()).unwrap().l2_norm() < 1e-12);
    }

    /// Dense matrix of `u -> T u` in the physical basis, built column by column.
    fn dense(a: &Field, m: u32, adjoint: bool) -> DMatrix<f64> {
        let g = *a.grid();
        let n = g.len();
        let mut mat = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![num_complex::Complex64::new(0.0, 0.0); n];
            e[j].re = 1.0;
            let u = Field::from_physical(g, e).unwrap();
            let col = if adjoint { apply_adjoint(a, m, &u) } else { apply_paraproduct(a, m, &u) }.unwrap();
            for i in 0..n {
                mat[(i, j)] = col.physical()[i].re;
            }
        }
        mat
    }

    #[test]
    fn adjoint_is_transpose() {
        let g = grid(64);
        let a = Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin().abs()).unwrap();
        for m in [0, 1, 3] {
            let t = dense(&a, m, false);
            let ts = dense(&a, m, true);
            assert!((t.transpose() - ts).abs().max() < 1e-12);
        }
    }

    #[test]
    fn positivity_agrees_with_dense_spectrum() {
        let g = grid(64);
        let a = Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin().abs()).unwrap();
        let fields = positivity_test_fields(&a, 40, 5).unwrap();
        let cert = min_positivity_order(&a, 0.5, &fields, 20).unwrap();
        // the symmetric part's smallest eigenvalue bounds every Rayleigh quotient
        let t = dense(&a, cert.m, false);
        let sym = (&t + t.transpose()) * 0.5;
        let lam_min = sym.symmetric_eigen().eigenvalues.min();
        let worst = fields.iter().map(|u| rayleigh_quotient(&a, cert.m, u).unwrap()).fold(f64::INFINITY, f64::min);
        assert!(lam_min <= worst + 1e-12);
        assert_relative_eq!(cert.worst_margin, worst - 0.25, max_relative = 1e-12);
    }

    #[test]
    fn sine_coefficient_minimal_order() {
        let g = grid(256);
        let a = sin_coefficient(g);
        let fields = positivity_test_fields(&a, 50, 1).unwrap();
        let cert = min_positivity_order(&a, 0.5, &fields, 20).unwrap();
        assert_eq!(cert.m, 1);
        assert!(cert.worst_margin >= 0.0);
        assert!(min_positivity_order(&a, 0.9, &fields, 20).is_err());
        assert!(matches!(
            min_positivity_order(&Field::constant(g, 0.5).unwrap(), 0.5, &fields, 0),
            Err(Error::NoPositiveOrder { .. })
        ));
    }

    #[test]
    fn constant_coefficient_has_no_defects() {
        let g = grid(128);
        let c = Field::constant(g, 1.5).unwrap();
        let u = band_limited_random(g, 0, 5, 2).unwrap();
        assert!(adjoint_defect_norm(&c, 2, &u).unwrap() < 1e-12);
        assert!(commutator_block_norms(&c, 2, &u, 0.5).unwrap() < 1e-11);
        let (h1, l2) = remainder_smoothing_check(&c, 2, &u).unwrap();
        assert!(h1 < 1e-12 && l2 < 1e-12);
    }

    #[test]
    fn defect_is_linear_in_coefficient() {
        let g = grid(128);
        let a = Field::from_fn(g, |x| x[0].sin().abs()).unwrap();
        let u = band_limited_random(g, 0, 5, 2).unwrap();
        let d1 = adjoint_defect_norm(&a, 1, &u).unwrap();
        let d2 = adjoint_defect_norm(&a.scale(2.0), 1, &u).unwrap();
        assert!(d1 > 0.0);
        assert_relative_eq!(d2, 2.0 * d1, max_relative = 1e-12);
    }

    #[test]
    fn summands_stay_in_their_annulus() {
        let g = grid(512);
        let a = sin_coefficient(g);
        let u = band_limited_random(g, 0, 7, 6).unwrap();
        for k in 4..=top_shell(&u) {
            let s = smooth(k - 3, &a).mul(&block(k, &u)).unwrap();
            for (i, c) in s.spectral().iter().enumerate() {
                let r = g.frequency_norm(i);
                if c.norm() > 1e-12 {
                    assert!(r >= 0.25 * 2f64.powi(k) && r <= 2.2 * 2f64.powi(k), "k={k} r={r}");
                }
            }
        }
    }
}
