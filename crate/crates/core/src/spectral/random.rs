use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Field, GridSpec};
use crate::error::{Error, Result};

/// Real, unit-L2 field whose spectrum is supported in `2^lo <= |xi| <= 2^hi`.
pub fn band_limited_random(grid: GridSpec, lo: i32, hi: i32, seed: u64) -> Result<Field> {
    if lo > hi {
        return Err(Error::Precondition(format!("empty band [{lo}, {hi}]")));
    }
    let (a, b) = (2f64.powi(lo), 2f64.powi(hi));
    if b >= grid.nyquist() {
        return Err(Error::Precondition(format!(
            "band edge 2^{hi} = {b} reaches the Nyquist frequency {}",
            grid.nyquist()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let m = grid.mirror(i);
        if m < i {
            continue;
        }
        let k = grid.frequency_norm(i);
        if k < a || k > b {
            continue;
        }
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        if m == i {
            spec[i] = Complex64::new(re, 0.0);
        } else {
            spec[i] = Complex64::new(re, im);
            spec[m] = spec[i].conj();
        }
    }
    let f = Field::from_spectral(grid, spec)?;
    if f.l2_norm() == 0.0 {
        return Err(Error::Precondition(format!("no grid frequencies in [{a}, {b}]")));
    }
    // normalising scales both representations, so the support stays exact
    Ok(f.normalized())
}

/// Real Gaussian white noise with `||noise||_{L2} = level` exactly.
pub fn white_noise(grid: GridSpec, level: f64, seed: u64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let f = Field::from_physical(grid, data)?;
    Ok(f.normalized().scale(level))
}
