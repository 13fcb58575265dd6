use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::GridSpec;
use crate::error::{Error, Result};

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, direction: FftDirection) -> Plan {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let key = (n, matches!(direction, FftDirection::Forward));
    let mut map = PLANS.get_or_init(|| Mutex::new(HashMap::new())).lock().expect("fft plan cache");
    map.entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(n, direction))
        .clone()
}

fn transform(grid: &GridSpec, data: &[Complex64], direction: FftDirection) -> Result<Vec<Complex64>> {
    if data.len() != grid.len() {
        return Err(Error::Format(format!(
            "buffer of {} samples does not match grid of {}",
            data.len(),
            grid.len()
        )));
    }
    let n = grid.points;
    let p = plan(n, direction);
    let mut buf = data.to_vec();
    // rows (contiguous); in 1D this is the whole transform
    p.process(&mut buf);
    if grid.dim == 2 {
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[i * n + j];
            }
            p.process(&mut col);
            for i in 0..n {
                buf[i * n + j] = col[i];
            }
        }
    }
    let s = 1.0 / (grid.len() as f64).sqrt();
    buf.iter_mut().for_each(|c| *c *= s);
    Ok(buf)
}

/// Unitary forward DFT of physical samples.
pub fn to_spectral(grid: &GridSpec, physical: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(grid, physical, FftDirection::Forward)
}

/// Unitary inverse DFT of spectral coefficients.
pub fn to_physical(grid: &GridSpec, spectral: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(grid, spectral, FftDirection::Inverse)
}
