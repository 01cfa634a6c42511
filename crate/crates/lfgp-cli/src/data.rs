//! Trial ingestion: a directory of per-trial CSVs named
//! `trial_<idx>_<label>.csv`, each with header `t,ch1,...,chp` and one row
//! per sample. Every trial must share the same channel count and length.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use lfgp_core::sw::{Trial, TrialSet};

use crate::error::{CliError, Result};

fn parse_filename(name: &str) -> Option<(usize, String)> {
    let stem = name.strip_suffix(".csv")?;
    let rest = stem.strip_prefix("trial_")?;
    let (idx, label) = rest.split_once('_')?;
    let idx = idx.parse::<usize>().ok()?;
    Some((idx, label.to_owned()))
}

/// Load a trial directory into a [`TrialSet`]. Labels come from filenames;
/// the sample rate is inferred from the `t` column (seconds).
pub fn load_trials(dir: &Path) -> Result<TrialSet> {
    let mut files: Vec<(usize, String, std::path::PathBuf)> = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some((idx, label)) = parse_filename(&name) {
            files.push((idx, label, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no trial_<idx>_<label>.csv files in {}",
            dir.display()
        )));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));

    let mut trials = Vec::with_capacity(files.len());
    let mut shape: Option<(usize, usize)> = None;
    for (_, label, path) in &files {
        let trial = load_one_trial(path, label)?;
        let this = (trial.signal_count(), trial.len());
        match shape {
            None => shape = Some(this),
            Some(expected) if expected != this => {
                return Err(CliError::Data(format!(
                    "ragged trials: {} has (p, T) = {:?}, expected {:?}",
                    path.display(),
                    this,
                    expected
                )))
            }
            _ => {}
        }
        trials.push(trial);
    }
    TrialSet::new(trials).map_err(Into::into)
}

fn load_one_trial(path: &Path, label: &str) -> Result<Trial> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "file is empty"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(parse_err(path, 1, "expected header t,ch1,...,chp"));
    }
    for (i, col) in cols.iter().enumerate().skip(1) {
        if *col != format!("ch{i}") {
            return Err(parse_err(path, 1, &format!("expected column ch{i}, got {col:?}")));
        }
    }
    let p = cols.len() - 1;

    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != p + 1 {
            return Err(parse_err(
                path,
                line_idx + 1,
                &format!("expected {} fields, got {}", p + 1, fields.len()),
            ));
        }
        let mut parsed = Vec::with_capacity(p + 1);
        for (fi, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                parse_err(path, line_idx + 1, &format!("bad number {f:?} in field {}", fi + 1))
            })?;
            parsed.push(v);
        }
        times.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if rows.len() < 2 {
        return Err(parse_err(path, 1, "need at least 2 samples"));
    }

    let sample_rate = infer_sample_rate(&times);
    let samples = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Trial::new(samples, sample_rate, Some(label.to_owned())).map_err(Into::into)
}

fn infer_sample_rate(times: &[f64]) -> f64 {
    let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.retain(|d| *d > 0.0 && d.is_finite());
    if deltas.is_empty() {
        return 1.0;
    }
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    1.0 / deltas[deltas.len() / 2]
}

fn parse_err(path: &Path, line: usize, msg: &str) -> CliError {
    CliError::Data(format!("{} line {line}: {msg}", path.display()))
}

/// Write one trial in the ingestion format.
pub fn write_trial(
    path: &Path,
    samples: &DMatrix<f64>,
    sample_rate_hz: f64,
) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let p = samples.ncols();
    let mut header = String::from("t");
    for i in 1..=p {
        header.push_str(&format!(",ch{i}"));
    }
    writeln!(out, "{header}")?;
    for t in 0..samples.nrows() {
        let mut line = format!("{}", t as f64 / sample_rate_hz);
        for j in 0..p {
            line.push_str(&format!(",{}", samples[(t, j)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
