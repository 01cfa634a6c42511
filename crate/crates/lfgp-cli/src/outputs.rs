//! CSV emission. Every output starts with a comment line carrying the
//! master seed and effective config hash, so artifacts are traceable to the
//! exact run that produced them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

pub struct CsvOut {
    out: BufWriter<File>,
}

impl CsvOut {
    pub fn create(path: &Path, seed: u64, config_hash: &str, columns: &str) -> Result<CsvOut> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# seed={seed} config={config_hash}")?;
        writeln!(out, "{columns}")?;
        Ok(CsvOut { out })
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// 100·p-th percentile of a sample (linear interpolation).
pub fn quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    if values.len() == 1 {
        return values[0];
    }
    let pos = p * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    values[lo] * (1.0 - w) + values[hi] * w
}
