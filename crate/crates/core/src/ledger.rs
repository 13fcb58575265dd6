//! Constants ledger: one CSV row per measured estimate constant.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fmt::float;

pub const HEADER: [&str; 6] = ["estimate_id", "theta", "m", "measured_constant", "sweep_size", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub estimate_id: String,
    pub theta: f64,
    pub m: u32,
    pub measured_constant: f64,
    pub sweep_size: usize,
    pub seed: u64,
}

pub fn write<W: Write>(rows: &[LedgerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.estimate_id.clone(),
            float(r.theta),
            r.m.to_string(),
            float(r.measured_constant),
            r.sweep_size.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(input: R) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Format("unexpected ledger header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("ledger row {i}: bad {what}"));
        rows.push(LedgerRow {
            estimate_id: rec[0].to_string(),
            theta: rec[1].parse().map_err(|_| bad("theta"))?,
            m: rec[2].parse().map_err(|_| bad("m"))?,
            measured_constant: rec[3].parse().map_err(|_| bad("measured_constant"))?,
            sweep_size: rec[4].parse().map_err(|_| bad("sweep_size"))?,
            seed: rec[5].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}
