//! Periodic-torus discretisation: grids, fields carried in physical and
//! spectral form, unitary DFTs and multiplier norms.
//!
//! The torus `[-L/2, L/2)^d` stands in for the whole space. Frequencies are
//! `xi_k = 2 pi k / L` for `k in [-N/2, N/2)`, stored in FFT order. The
//! transform is unitary, so the continuum L2 norm is recovered by weighting
//! sums with the cell volume `(L/N)^d` in either representation.

mod fft;
pub mod io;
mod random;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::{to_physical, to_spectral};
pub use random::{band_limited_random, white_noise};

/// Periodic grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub period: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dim: 1, period: 2.0 * std::f64::consts::PI, points: 2048 }
    }
}

impl GridSpec {
    pub fn new(dim: usize, period: f64, points: usize) -> Result<Self> {
        let g = Self { dim, period, points };
        g.validate()?;
        Ok(g)
    }

    pub fn one_d(period: f64, points: usize) -> Result<Self> {
        Self::new(1, period, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {} not in {{1, 2}}", self.dim)));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::InvalidGrid(format!("period {} must be positive", self.period)));
        }
        if self.points < 64 || !self.points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{} points per axis; need a power of two >= 64",
                self.points
            )));
        }
        if self.dim == 2 && self.points > 256 {
            return Err(Error::InvalidGrid("two-dimensional grids are capped at 256^2".into()));
        }
        Ok(())
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest per-axis frequency magnitude, `pi N / L`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.points as f64 / self.period
    }

    /// Physical coordinate of sample `j` along an axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -0.5 * self.period + j as f64 * self.spacing()
    }

    /// Frequency of FFT-ordered index `i` along an axis.
    pub fn axis_frequency(&self, i: usize) -> f64 {
        let n = self.points as i64;
        let k = if (i as i64) < n / 2 { i as i64 } else { i as i64 - n };
        2.0 * std::f64::consts::PI * k as f64 / self.period
    }

    /// Per-axis indices of a flat (row-major) index.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.points, flat % self.points]
        }
    }

    /// Frequency vector of a flat spectral index (second entry zero in 1D).
    pub fn frequency(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(flat);
        if self.dim == 1 {
            [self.axis_frequency(i), 0.0]
        } else {
            [self.axis_frequency(i), self.axis_frequency(j)]
        }
    }

    pub fn frequency_norm(&self, flat: usize) -> f64 {
        let [a, b] = self.frequency(flat);
        a.hypot(b)
    }

    /// Physical position of a flat sample index.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(flat);
        if self.dim == 1 {
            [self.coordinate(i), 0.0]
        } else {
            [self.coordinate(i), self.coordinate(j)]
        }
    }

    /// Largest `|xi|` present on the grid.
    pub fn max_frequency(&self) -> f64 {
        self.nyquist() * (self.dim as f64).sqrt()
    }

    /// Flat index of `-xi` for the mode at `flat`.
    pub fn mirror(&self, flat: usize) -> usize {
        let n = self.points;
        let [i, j] = self.unflatten(flat);
        let mi = (n - i) % n;
        if self.dim == 1 {
            mi
        } else {
            mi * n + (n - j) % n
        }
    }
}

/// A sampled function on a [`GridSpec`], carried in both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    physical: Arc<Vec<Complex64>>,
    spectral: Arc<Vec<Complex64>>,
}

impl Field {
    pub fn from_physical(grid: GridSpec, physical: Vec<Complex64>) -> Result<Self> {
        let spectral = to_spectral(&grid, &physical)?;
        Ok(Self { grid, physical: Arc::new(physical), spectral: Arc::new(spectral) })
    }

    pub fn from_spectral(grid: GridSpec, spectral: Vec<Complex64>) -> Result<Self> {
        let physical = to_physical(&grid, &spectral)?;
        Ok(Self { grid, physical: Arc::new(physical), spectral: Arc::new(spectral) })
    }

    /// Real samples of `f` at the grid positions.
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: GridSpec, f: F) -> Result<Self> {
        let data = (0..grid.len()).map(|i| Complex64::new(f(grid.position(i)), 0.0)).collect();
        Self::from_physical(grid, data)
    }

    pub(crate) fn from_parts(grid: GridSpec, physical: Vec<Complex64>, spectral: Vec<Complex64>) -> Self {
        Self { grid, physical: Arc::new(physical), spectral: Arc::new(spectral) }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let z = Arc::new(vec![Complex64::new(0.0, 0.0); grid.len()]);
        Self { grid, physical: z.clone(), spectral: z }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_| c)
    }

    /// `amplitude * exp(i xi . x)` for the grid mode at `flat`.
    pub fn plane_wave(grid: GridSpec, flat: usize, amplitude: f64) -> Result<Self> {
        let xi = grid.frequency(flat);
        let data = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                Complex64::from_polar(amplitude, xi[0] * x[0] + xi[1] * x[1])
            })
            .collect();
        Self::from_physical(grid, data)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn physical(&self) -> &[Complex64] {
        &self.physical
    }

    pub fn spectral(&self) -> &[Complex64] {
        &self.spectral
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Multiply the spectrum by `m(xi)`.
    pub fn apply_multiplier<M: Fn([f64; 2]) -> Complex64>(&self, m: M) -> Field {
        let data = self
            .spectral
            .iter()
            .enumerate()
            .map(|(i, c)| if c.norm_sqr() == 0.0 { *c } else { c * m(self.grid.frequency(i)) })
            .collect();
        Field::from_spectral(self.grid, data).expect("grid-sized buffer")
    }

    /// Multiply the spectrum by a real radial multiplier `m(|xi|)`.
    pub fn apply_radial<M: Fn(f64) -> f64>(&self, m: M) -> Field {
        self.apply_multiplier(|xi| Complex64::new(m(xi[0].hypot(xi[1])), 0.0))
    }

    /// Partial derivative along `axis`, spectrally.
    pub fn derivative(&self, axis: usize) -> Field {
        self.apply_multiplier(|xi| Complex64::new(0.0, xi[axis]))
    }

    /// Pointwise product in physical space.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.same_grid(other)?;
        let data = self.physical.iter().zip(other.physical.iter()).map(|(a, b)| a * b).collect();
        Field::from_physical(self.grid, data)
    }

    pub fn conj(&self) -> Field {
        let data = self.physical.iter().map(|c| c.conj()).collect();
        Field::from_physical(self.grid, data).expect("grid-sized buffer")
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.combine(other, 1.0, -1.0)
    }

    /// `a * self + b * other`, formed in both representations without a transform.
    pub fn combine(&self, other: &Field, a: f64, b: f64) -> Result<Field> {
        self.same_grid(other)?;
        let lin = |x: &[Complex64], y: &[Complex64]| -> Vec<Complex64> {
            x.iter().zip(y).map(|(p, q)| p * a + q * b).collect()
        };
        Ok(Field {
            grid: self.grid,
            physical: Arc::new(lin(&self.physical, &other.physical)),
            spectral: Arc::new(lin(&self.spectral, &other.spectral)),
        })
    }

    pub fn scale(&self, s: f64) -> Field {
        self.scale_complex(Complex64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: Complex64) -> Field {
        Field {
            grid: self.grid,
            physical: Arc::new(self.physical.iter().map(|c| c * s).collect()),
            spectral: Arc::new(self.spectral.iter().map(|c| c * s).collect()),
        }
    }

    /// `<self | other> = int conj(self) other`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.same_grid(other)?;
        let s: Complex64 =
            self.spectral.iter().zip(other.spectral.iter()).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// `(sum (1 + |xi|^2)^theta |u_hat|^2 * cell)^(1/2)`.
    pub fn sobolev_norm(&self, theta: f64) -> f64 {
        let cell = self.grid.cell_volume();
        let s: f64 = self
            .spectral
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = if theta == 0.0 {
                    1.0
                } else {
                    let k = self.grid.frequency_norm(i);
                    (1.0 + k * k).powf(theta)
                };
                w * c.norm_sqr()
            })
            .sum();
        (s * cell).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// L2 norm summed over physical samples; agrees with [`Field::l2_norm`] by Parseval.
    pub fn l2_norm_physical(&self) -> f64 {
        let s: f64 = self.physical.iter().map(|c| c.norm_sqr()).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// `||grad u||_{L2}` from the spectrum.
    pub fn gradient_l2_norm(&self) -> f64 {
        let s: f64 = self
            .spectral
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.grid.frequency_norm(i);
                k * k * c.norm_sqr()
            })
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.physical.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Pointwise sup of the Euclidean gradient magnitude.
    pub fn gradient_sup(&self) -> f64 {
        let parts: Vec<Field> = (0..self.grid.dim).map(|a| self.derivative(a)).collect();
        (0..self.grid.len())
            .map(|i| parts.iter().map(|p| p.physical[i].norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `||a||_Lip = ||a||_inf + ||grad a||_inf` on the grid.
    pub fn lip_norm(&self) -> f64 {
        self.sup_norm() + self.gradient_sup()
    }

    /// Largest imaginary part of the physical samples.
    pub fn max_imag(&self) -> f64 {
        self.physical.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// Normalise to unit L2 norm; a zero field is returned unchanged.
    pub fn normalized(&self) -> Field {
        let n = self.l2_norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / n)
        }
    }

    /// Minimum of the real part of the samples.
    pub fn min_real(&self) -> f64 {
        self.physical.iter().map(|c| c.re).fold(f64::INFINITY, f64::min)
    }
}
