//! Stable reconstruction of the initial state from a noisy final-time
//! measurement: sharp Fourier truncation at a noise-dependent radius followed
//! by exact backward propagation, plus noise sweeps and a logarithmic rate fit.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{uniform_times, unit_directions, CoefficientFamily};
use crate::error::{domain, Error, Result};
use crate::evolution::{Direction, PropagatorCache};
use crate::fmt::{float, serialize_float};
use crate::littlewood_paley::PLATEAU_OUTER;
use crate::spectral::{white_noise, Field, GridSpec};

/// Slack allowed on both bound checks.
pub const BOUND_SLACK: f64 = 1e-8;

/// Cases with a truncation radius at or below this value sit inside the
/// lowest dyadic shell and are left out of the rate fit.
pub const FIT_MIN_RADIUS: f64 = PLATEAU_OUTER;

/// Final state plus seeded white noise of `L2` norm exactly `theta`.
pub fn measure(u_final: &Field, theta: f64, seed: u64) -> Result<Field> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(domain("noise level", theta));
    }
    u_final.add(&white_noise(*u_final.grid(), theta, seed)?)
}

/// `R(theta) = sqrt(|log theta| / (2T + 1))`.
pub fn truncation_radius(theta: f64, horizon: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain("noise level", theta));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(domain("horizon", horizon));
    }
    Ok((theta.ln().abs() / (2.0 * horizon + 1.0)).sqrt())
}

/// Zero every mode with `|xi| > radius`.
pub fn truncate(v: &Field, radius: f64) -> Field {
    let g = *v.grid();
    let removes = v.spectral().iter().enumerate().any(|(i, c)| c.norm() != 0.0 && g.frequency_norm(i) > radius);
    if !removes {
        return v.clone();
    }
    let data = v
        .spectral()
        .iter()
        .enumerate()
        .map(|(i, c)| if g.frequency_norm(i) <= radius { *c } else { Default::default() })
        .collect();
    Field::from_spectral(g, data).expect("same grid")
}

fn require_normalized(family: &CoefficientFamily, horizon: f64) -> Result<()> {
    let e = family.ellipticity_constants(&uniform_times(horizon, 257), &unit_directions(family.dim(), 64))?;
    if !e.within_normalization() {
        return Err(Error::Precondition(format!(
            "coefficient symbol ratio range [{}, {}] is outside [1/2, 2]",
            e.lo, e.hi
        )));
    }
    Ok(())
}

/// Truncate the measurement at `radius` and propagate it back to `t = 0`.
pub fn reconstruct(measurement: &Field, family: &CoefficientFamily, horizon: f64, radius: f64) -> Result<Field> {
    require_normalized(family, horizon)?;
    PropagatorCache::new(family)?.propagate(&truncate(measurement, radius), horizon, Direction::Backward)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionReport {
    pub theta: f64,
    pub radius: f64,
    pub bound_d: f64,
    pub horizon: f64,
    pub err_l2: f64,
    pub h1_recon: f64,
    pub bound_h1: f64,
    pub proximity: f64,
    pub bound_proximity: f64,
    /// `||(1 - chi_R) u(0)||`
    pub tail: f64,
    /// `||reconstruction of the noise alone||`
    pub noise_part: f64,
    pub seed: u64,
}

impl ReconstructionReport {
    pub fn h1_bound_holds(&self) -> bool {
        self.h1_recon <= self.bound_h1 + BOUND_SLACK
    }

    pub fn proximity_bound_holds(&self) -> bool {
        self.proximity <= self.bound_proximity + BOUND_SLACK
    }

    /// The error never exceeds truncation tail plus amplified noise.
    pub fn decomposition_holds(&self) -> bool {
        self.err_l2 <= (self.tail + self.noise_part) * (1.0 + 1e-10) + 1e-14
    }

    pub fn holds(&self) -> bool {
        self.h1_bound_holds() && self.proximity_bound_holds() && self.decomposition_holds()
    }
}

/// Forward model, measurement, truncation and reconstruction for one `(theta, seed)`.
#[derive(Debug)]
pub struct Experiment {
    truth: Field,
    final_state: Field,
    cache: PropagatorCache,
    horizon: f64,
    bound_d: f64,
}

impl Experiment {
    pub fn new(truth: Field, family: &CoefficientFamily, horizon: f64, bound_d: f64) -> Result<Self> {
        let h1 = truth.sobolev_norm(1.0);
        if !(h1 <= bound_d) {
            return Err(Error::Precondition(format!("a-priori bound {bound_d} is below ||u0||_H1 = {h1}")));
        }
        require_normalized(family, horizon)?;
        let cache = PropagatorCache::new(family)?;
        let final_state = cache.propagate(&truth, horizon, Direction::Forward)?;
        Ok(Self { truth, final_state, cache, horizon, bound_d })
    }

    pub fn truth(&self) -> &Field {
        &self.truth
    }

    pub fn final_state(&self) -> &Field {
        &self.final_state
    }

    pub fn run_case(&self, theta: f64, seed: u64) -> Result<ReconstructionReport> {
        let radius = truncation_radius(theta, self.horizon)?;
        let noise = white_noise(*self.truth.grid(), theta, seed)?;
        let measured = self.final_state.add(&noise)?;
        let kept = truncate(&measured, radius);
        let recon = self.cache.propagate(&kept, self.horizon, Direction::Backward)?;
        let noise_recon = self.cache.propagate(&truncate(&noise, radius), self.horizon, Direction::Backward)?;
        let r2 = radius * radius;
        let t = self.horizon;
        Ok(ReconstructionReport {
            theta,
            radius,
            bound_d: self.bound_d,
            horizon: t,
            err_l2: self.truth.sub(&recon)?.l2_norm(),
            h1_recon: recon.sobolev_norm(1.0),
            bound_h1: self.bound_d + ((2.0 * t + 1.0) * r2).exp() * theta,
            proximity: self.final_state.sub(&kept)?.l2_norm(),
            bound_proximity: (-0.5 * t * r2).exp() * self.bound_d + theta,
            tail: self.truth.sub(&truncate(&self.truth, radius))?.l2_norm(),
            noise_part: noise_recon.l2_norm(),
            seed,
        })
    }

    /// Every `(theta, seed)` pair, theta-major.
    pub fn sweep(&self, thetas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
        if thetas.is_empty() || seeds.is_empty() {
            return Err(Error::Empty("noise sweep"));
        }
        let cases: Vec<(f64, u64)> = thetas.iter().flat_map(|&th| seeds.iter().map(move |&s| (th, s))).collect();
        cases
            .par_iter()
            .map(|&(th, s)| {
                let report = self.run_case(th, s)?;
                Ok(SweepRow { included_in_fit: report.radius > FIT_MIN_RADIUS, report })
            })
            .collect()
    }
}

/// One-shot form of [`Experiment::run_case`].
pub fn run_case(
    truth: &Field,
    family: &CoefficientFamily,
    horizon: f64,
    theta: f64,
    seed: u64,
    bound_d: f64,
) -> Result<ReconstructionReport> {
    Experiment::new(truth.clone(), family, horizon, bound_d)?.run_case(theta, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub report: ReconstructionReport,
    pub included_in_fit: bool,
}

pub const SWEEP_HEADER: [&str; 9] =
    ["theta", "R", "err_L2", "h1_recon", "bound_h1", "proximity", "bound_proximity", "seed", "included_in_fit"];

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            float(r.theta),
            float(r.radius),
            float(r.err_l2),
            float(r.h1_recon),
            float(r.bound_h1),
            float(r.proximity),
            float(r.bound_proximity),
            r.seed.to_string(),
            row.included_in_fit.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `err = K / |log theta|^delta` fitted in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    #[serde(rename = "K_tilde", serialize_with = "serialize_float")]
    pub k_tilde: f64,
    #[serde(serialize_with = "serialize_float")]
    pub delta: f64,
    #[serde(serialize_with = "serialize_float")]
    pub rms_log_residual: f64,
    pub n_points: usize,
}

impl RateFit {
    pub fn predict(&self, theta: f64) -> f64 {
        self.k_tilde / theta.ln().abs().powf(self.delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serialises")
    }
}

/// Least squares of `log err` against `log |log theta|` over `(theta, err)` points.
pub fn fit_log_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} distinct noise levels, need 3", distinct.len())));
    }
    let span = (distinct[distinct.len() - 1] / distinct[0]).log10();
    if span < 4.0 {
        return Err(Error::DegenerateFit(format!("noise levels span {span:.2} decades, need 4")));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.0 < 1.0) || !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::DegenerateFit(format!("point (theta {}, error {}) has no logarithm", p.0, p.1)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln().abs().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { k_tilde: intercept.exp(), delta: -slope, rms_log_residual: (rss / n).sqrt(), n_points: points.len() })
}

/// Fit over the rows flagged for inclusion.
pub fn fit_sweep(rows: &[SweepRow]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.included_in_fit).map(|r| (r.report.theta, r.report.err_l2)).collect();
    fit_log_rate(&pts)
}

/// Run the sweep and fit. The table is returned even when the fit is refused.
pub fn sweep_and_fit(
    truth: &Field,
    family: &CoefficientFamily,
    horizon: f64,
    thetas: &[f64],
    seeds: &[u64],
    bound_d: f64,
) -> Result<(Vec<SweepRow>, Result<RateFit>)> {
    let rows = Experiment::new(truth.clone(), family, horizon, bound_d)?.sweep(thetas, seeds)?;
    let fit = fit_sweep(&rows);
    Ok((rows, fit))
}

/// Mean and standard deviation of the error per noise level, ordered by increasing `|log theta|`.
pub fn error_by_level(rows: &[SweepRow]) -> Vec<(f64, f64, f64)> {
    let mut thetas: Vec<f64> = rows.iter().map(|r| r.report.theta).collect();
    thetas.sort_by(|a, b| b.total_cmp(a));
    thetas.dedup();
    thetas
        .into_iter()
        .map(|th| {
            let e: Vec<f64> = rows.iter().filter(|r| r.report.theta == th).map(|r| r.report.err_l2).collect();
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (th, mean, var.sqrt())
        })
        .collect()
}

/// Mean errors do not grow as `theta` shrinks, beyond twice the largest seed spread.
pub fn monotone_up_to_noise(rows: &[SweepRow]) -> bool {
    let levels = error_by_level(rows);
    let spread = levels.iter().map(|l| l.2).fold(0.0, f64::max);
    levels.windows(2).all(|w| w[1].1 <= w[0].1 + 2.0 * spread + 1e-12)
}

/// Rows whose error exceeds `max(1.5 * fitted rate, floor)`.
pub fn envelope_violations(rows: &[SweepRow], fit: &RateFit, floor: f64) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.report.err_l2 > (1.5 * fit.predict(r.report.theta)).max(floor))
        .map(|(i, _)| i)
        .collect()
}

/// `exp(-x^2 / (2 w^2))` centred in the cell.
pub fn gaussian_bump(grid: GridSpec, width: f64) -> Result<Field> {
    if !(width > 0.0) {
        return Err(domain("bump width", width));
    }
    Field::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * width * width)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::one_d(2.0 * PI, 256).unwrap()
    }

    #[test]
    fn radius_closed_forms() {
        assert_relative_eq!(truncation_radius((-12f64).exp(), 1.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(truncation_radius((-3f64).exp(), 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(truncation_radius(1e-8, 1.0).unwrap() > truncation_radius(1e-4, 1.0).unwrap());
        assert!(truncation_radius(1.0, 1.0).is_err());
        assert!(truncation_radius(0.0, 1.0).is_err());
    }

    #[test]
    fn measurement_is_exactly_theta_away() {
        let u = gaussian_bump(grid(), 0.5).unwrap();
        let m = measure(&u, 1e-3, 4).unwrap();
        assert_relative_eq!(m.sub(&u).unwrap().l2_norm(), 1e-3, max_relative = 1e-12);
        assert_eq!(m, measure(&u, 1e-3, 4).unwrap());
        assert!(measure(&u, -1.0, 4).is_err());
    }

    #[test]
    fn noise_spectrum_is_flat() {
        let g = grid();
        let mut power = vec![0.0; g.len()];
        for seed in 0..100 {
            let n = white_noise(g, 1.0, seed).unwrap();
            for (p, c) in power.iter_mut().zip(n.spectral()) {
                *p += c.norm_sqr() / 100.0;
            }
        }
        let mean = power.iter().sum::<f64>() / g.len() as f64;
        let q = g.len() / 4;
        for band in power.chunks(q) {
            let avg = band.iter().sum::<f64>() / q as f64 / mean;
            assert!((avg - 1.0).abs() < 0.1, "band mean {avg}");
        }
    }

    #[test]
    fn truncation_is_a_projection() {
        let g = grid();
        let u = gaussian_bump(g, 0.3).unwrap();
        let once = truncate(&u, 5.0);
        assert_eq!(truncate(&once, 5.0), once);
        assert_eq!(truncate(&u, 1e9), u);
        let wave = Field::plane_wave(g, 3, 1.0).unwrap();
        assert!(truncate(&wave, 2.0).l2_norm() < 1e-15);
    }

    #[test]
    fn noiseless_round_trip() {
        let g = grid();
        let fam = CoefficientFamily::heat(1);
        let truth = crate::spectral::band_limited_random(g, 0, 2, 9).unwrap();
        let ut = PropagatorCache::new(&fam).unwrap().propagate(&truth, 1.0, Direction::Forward).unwrap();
        let back = reconstruct(&ut, &fam, 1.0, 4.5).unwrap();
        assert!(back.sub(&truth).unwrap().l2_norm() <= 1e-8 * truth.l2_norm());
        let wave = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let zero = reconstruct(&wave, &fam, 1.0, 0.0).unwrap();
        assert!(zero.l2_norm() < 1e-15);
        assert_relative_eq!(wave.sub(&zero).unwrap().l2_norm(), wave.l2_norm(), max_relative = 1e-14);
    }

    #[test]
    fn out_of_ball_noise_is_removed() {
        let g = grid();
        let fam = CoefficientFamily::heat(1);
        let truth = Field::plane_wave(g, 1, 1.0).unwrap();
        let ut = PropagatorCache::new(&fam).unwrap().propagate(&truth, 1.0, Direction::Forward).unwrap();
        let noisy = ut.add(&Field::plane_wave(g, 7, 1e-3).unwrap()).unwrap();
        let back = reconstruct(&noisy, &fam, 1.0, 2.0).unwrap();
        assert!(back.sub(&truth).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn bounds_hold_for_smooth_truth() {
        let g = GridSpec::one_d(16.0 * PI, 1024).unwrap();
        let truth = gaussian_bump(g, 0.3).unwrap();
        let d = truth.sobolev_norm(1.0) * 1.001;
        for fam in [CoefficientFamily::heat(1), CoefficientFamily::ll_exemplar(1, 1.0, 0.5)] {
            let r = run_case(&truth, &fam, 1.0, 1e-6, 3, d).unwrap();
            assert!(r.holds(), "{r:?}");
            assert_eq!(r, run_case(&truth, &fam, 1.0, 1e-6, 3, d).unwrap());
        }
        assert!(matches!(run_case(&truth, &CoefficientFamily::heat(1), 1.0, 1e-6, 3, 0.5 * d), Err(Error::Precondition(_))));
    }

    #[test]
    fn tiny_noise_error_is_the_tail() {
        let g = GridSpec::one_d(16.0 * PI, 1024).unwrap();
        let truth = gaussian_bump(g, 0.3).unwrap();
        let d = truth.sobolev_norm(1.0);
        let r = run_case(&truth, &CoefficientFamily::heat(1), 1.0, 1e-14, 1, d).unwrap();
        assert!((r.err_l2 - r.tail).abs() <= r.noise_part + 1e-12);
        assert!(r.noise_part < 1e-3 * r.tail);
    }

    #[test]
    fn normalization_is_enforced() {
        let g = grid();
        let u = gaussian_bump(g, 0.5).unwrap();
        let fam = CoefficientFamily::isotropic(1, std::sync::Arc::new(crate::coefficients::Constant(3.0)));
        assert!(matches!(reconstruct(&u, &fam, 1.0, 2.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn exact_model_is_recovered() {
        let pts: Vec<(f64, f64)> =
            (2..=12).map(|k| 10f64.powi(-k)).map(|th| (th, 2.0 / th.ln().abs().powf(0.5))).collect();
        let f = fit_log_rate(&pts).unwrap();
        assert_relative_eq!(f.k_tilde, 2.0, max_relative = 1e-10);
        assert_relative_eq!(f.delta, 0.5, max_relative = 1e-10);
        assert!(f.rms_log_residual < 1e-10);
        assert_eq!(f.n_points, 11);
    }

    #[test]
    fn degenerate_fits_are_refused() {
        assert!(matches!(fit_log_rate(&[(1e-3, 0.1), (1e-3, 0.2)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_log_rate(&[(1e-3, 0.1), (1e-4, 0.1), (1e-5, 0.1)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            fit_log_rate(&[(1e-3, 0.1), (1e-5, 0.0), (1e-8, 0.1)]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn sweep_table_and_fit() {
        let g = GridSpec::one_d(16.0 * PI, 1024).unwrap();
        let truth = gaussian_bump(g, 0.3).unwrap();
        let d = truth.sobolev_norm(1.0);
        let thetas: Vec<f64> = (2..=12).map(|k| 10f64.powi(-k)).collect();
        let (rows, fit) = sweep_and_fit(&truth, &CoefficientFamily::heat(1), 1.0, &thetas, &[1, 2], d).unwrap();
        assert_eq!(rows.len(), 22);
        assert!(rows.iter().all(|r| r.report.holds()));
        assert!(monotone_up_to_noise(&rows));
        let fit = fit.unwrap();
        assert!(fit.delta > 0.0 && fit.rms_log_residual < 0.2, "{fit:?}");
        assert!(envelope_violations(&rows, &fit, 1e-12).is_empty());
        let mut buf = Vec::new();
        write_sweep(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta,R,err_L2,h1_recon,bound_h1,proximity,bound_proximity,seed,included_in_fit\n"));
        assert_eq!(text.lines().count(), 23);
        let json: serde_json::Value = serde_json::from_str(&fit.to_json()).unwrap();
        assert!(json["K_tilde"].as_f64().unwrap() > 0.0);
    }
}
