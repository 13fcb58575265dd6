//! Field serialisation: a text CSV of physical samples and a bit-exact binary
//! container with a grid header.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Field, GridSpec};
use crate::error::{Error, Result};
use crate::fmt::{atomic_write, float};

const MAGIC: &[u8; 8] = b"BHFIELD1";

/// Write physical samples as `index,re,im`.
pub fn write_csv<W: Write>(field: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "re", "im"])?;
    for (i, c) in field.physical().iter().enumerate() {
        w.write_record([i.to_string(), float(c.re), float(c.im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Read an `index,re,im` CSV onto `grid`. Indices must be `0..len` in order.
pub fn read_csv<R: Read>(grid: GridSpec, input: R) -> Result<Field> {
    let mut r = csv::Reader::from_reader(input);
    let mut data = Vec::with_capacity(grid.len());
    for (expected, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("row {expected}: expected 3 columns")));
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Format(format!("row {expected}: {e}")))
        };
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("row {expected}: bad index: {e}")))?;
        if idx != expected {
            return Err(Error::Format(format!("row {expected}: index {idx} out of order")));
        }
        data.push(Complex64::new(parse(&rec[1])?, parse(&rec[2])?));
    }
    if data.is_empty() {
        return Err(Error::Empty("field csv"));
    }
    if data.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    Field::from_physical(grid, data)
}

/// Binary container: magic, dim, points, period bits, then the spectral
/// coefficients as little-endian f64 pairs. Both representations round-trip
/// bit-exactly because the physical samples are stored too.
pub fn encode(field: &Field) -> Vec<u8> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(32 + 32 * g.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.dim as u64).to_le_bytes());
    buf.extend_from_slice(&(g.points as u64).to_le_bytes());
    buf.extend_from_slice(&g.period.to_bits().to_le_bytes());
    for v in [field.physical(), field.spectral()] {
        for c in v {
            buf.extend_from_slice(&c.re.to_bits().to_le_bytes());
            buf.extend_from_slice(&c.im.to_bits().to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a field container".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let grid = GridSpec::new(word(8) as usize, f64::from_bits(word(24)), word(16) as usize)?;
    let n = grid.len();
    if bytes.len() != 32 + 32 * n {
        return Err(Error::Format(format!("container length {} for {n} samples", bytes.len())));
    }
    let read = |start: usize| -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let o = start + 16 * i;
                Complex64::new(f64::from_bits(word(o)), f64::from_bits(word(o + 8)))
            })
            .collect()
    };
    Ok(Field::from_parts(grid, read(32), read(32 + 16 * n)))
}

pub fn save(field: &Field, path: &Path) -> Result<()> {
    atomic_write(path, &encode(field))
}

pub fn load(path: &Path) -> Result<Field> {
    decode(&std::fs::read(path)?)
}

pub fn save_csv(field: &Field, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(field, &mut buf)?;
    atomic_write(path, &buf)
}

pub fn load_csv(grid: GridSpec, path: &Path) -> Result<Field> {
    read_csv(grid, std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::band_limited_random;

    #[test]
    fn binary_roundtrip_is_bit_exact() {
        let g = GridSpec::one_d(3.0, 128).unwrap();
        let f = band_limited_random(g, 0, 4, 11).unwrap();
        let back = decode(&encode(&f)).unwrap();
        assert_eq!(back, f);
        for (a, b) in f.spectral().iter().zip(back.spectral()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let g = GridSpec::one_d(3.0, 64).unwrap();
        let f = band_limited_random(g, 0, 3, 5).unwrap();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let back = read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back.physical(), f.physical());
    }

    #[test]
    fn csv_errors() {
        let g = GridSpec::one_d(3.0, 64).unwrap();
        assert!(matches!(read_csv(g, "index,re,im\n".as_bytes()), Err(Error::Empty(_))));
        assert!(matches!(read_csv(g, "index,re,im\n0,1,0\n".as_bytes()), Err(Error::GridMismatch)));
        assert!(read_csv(g, "index,re,im\n1,1,0\n".as_bytes()).is_err());
        assert!(decode(b"garbage").is_err());
    }
}
