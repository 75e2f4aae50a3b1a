use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nonsense_core::montecarlo::{McReport, ReplicateRecord, TrendReport};
use nonsense_core::presets::RunSpec;
use serde::Serialize;

use crate::commands::CliError;

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Serialize)]
pub struct Run {
    pub name: String,
    pub seconds: f64,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_path: Option<String>,
    pub preset: Option<String>,
    pub resolved_config: RunSpec,
    pub resolved_config_file: String,
    pub tool_version: String,
    pub timestamp: String,
    pub threads: usize,
    pub runs: Vec<Run>,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<String, CliError> {
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(dir, name, &(text + "\n"))
}

pub fn write_report(dir: &Path, stem: &str, report: &McReport) -> Result<String, CliError> {
    write_json(dir, &format!("{stem}.report.json"), report)
}

pub fn write_records(dir: &Path, stem: &str, report: &McReport) -> Result<String, CliError> {
    let name = format!("{stem}.replicates.csv");
    let mut w = csv::Writer::from_path(dir.join(&name)).map_err(csv_err)?;
    for rec in &report.records {
        w.serialize::<&ReplicateRecord>(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(name)
}

/// Raw `i8` spins, replicate-major, `x` then `y`, `n` bytes each.
pub fn write_spins(dir: &Path, stem: &str, report: &McReport) -> Result<Option<String>, CliError> {
    if report.spins.is_empty() {
        return Ok(None);
    }
    let name = format!("{stem}.spins.bin");
    let mut w = BufWriter::new(File::create(dir.join(&name))?);
    for (x, y) in &report.spins {
        for v in x.iter().chain(y) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(Some(name))
}

struct Histogram {
    lo: f64,
    width: f64,
}

impl Histogram {
    fn covering<'a>(blocks: impl IntoIterator<Item = &'a [f64]>) -> Histogram {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in blocks.into_iter().flatten().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi <= lo {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Histogram {
            lo,
            width: (hi - lo) / HISTOGRAM_BINS as f64,
        }
    }

    fn counts(&self, values: &[f64]) -> Vec<u64> {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for v in values.iter().filter(|v| v.is_finite()) {
            let bin = (((v - self.lo) / self.width) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        counts
    }

    fn write_block(
        &self,
        w: &mut csv::Writer<File>,
        label: &str,
        values: &[f64],
    ) -> Result<(), CliError> {
        let total = values.iter().filter(|v| v.is_finite()).count().max(1) as f64;
        for (i, c) in self.counts(values).into_iter().enumerate() {
            let low = self.lo + i as f64 * self.width;
            w.write_record([
                label.to_string(),
                low.to_string(),
                (low + self.width).to_string(),
                c.to_string(),
                (c as f64 / (total * self.width)).to_string(),
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    }
}

type Column = fn(&ReplicateRecord) -> Option<f64>;

const COLUMNS: [(&str, Column); 4] = [
    ("scaled_t", |r| r.scaled_t),
    ("scaled_rho", |r| r.scaled_rho),
    ("rho_n", |r| r.rho_n),
    ("beta_hat", |r| r.beta_hat),
];

/// One block per available statistic, each on its own bin grid.
pub fn write_histograms(dir: &Path, stem: &str, report: &McReport) -> Result<String, CliError> {
    let name = format!("{stem}.histogram.csv");
    let mut w = csv::Writer::from_path(dir.join(&name)).map_err(csv_err)?;
    w.write_record(["statistic", "bin_low", "bin_high", "count", "density"])
        .map_err(csv_err)?;
    for (label, f) in COLUMNS {
        let values = report.column(f);
        if !values.is_empty() {
            Histogram::covering([values.as_slice()]).write_block(&mut w, label, &values)?;
        }
    }
    w.flush()?;
    Ok(name)
}

/// `sqrt(n) rho_n` at each beta on a shared bin grid, one block per beta.
pub fn write_sweep_histogram(
    dir: &Path,
    stem: &str,
    trend: &TrendReport,
) -> Result<String, CliError> {
    let name = format!("{stem}.histogram.csv");
    let columns: Vec<Vec<f64>> = trend
        .reports
        .iter()
        .map(|r| r.column(|x| x.scaled_rho))
        .collect();
    let hist = Histogram::covering(columns.iter().map(Vec::as_slice));
    let mut w = csv::Writer::from_path(dir.join(&name)).map_err(csv_err)?;
    w.write_record(["beta", "bin_low", "bin_high", "count", "density"])
        .map_err(csv_err)?;
    for (point, values) in trend.points.iter().zip(&columns) {
        hist.write_block(&mut w, &point.beta.to_string(), values)?;
    }
    w.flush()?;
    Ok(name)
}
