//! Run outputs: the time-series and per-cell ledger CSV files, the flat
//! key=value metadata file, and the growth-rate fitter that consumes the
//! time series.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `parse(write(x)) == x` bitwise for every value.

use crate::grid::Mesh1D;
use crate::ledger::EnergyLedger;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("growth window [{t_start}, {t_end}] holds {count} samples; at least 10 are required")]
    DegenerateWindow {
        t_start: f64,
        t_end: f64,
        count: usize,
    },
    #[error("field energy must be positive on the window (found {value:.3e} at t = {t})")]
    NonPositiveEnergy { t: f64, value: f64 },
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse field {field}: {value:?}")]
    Parse {
        line: usize,
        field: &'static str,
        value: String,
    },
}

/// One output row of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeseriesRow {
    pub t: f64,
    pub kinetic: f64,
    pub field_energy: f64,
    pub total: f64,
    pub drift: f64,
    pub picard_iters: u64,
    pub max_residue: f64,
    pub sum_d: f64,
    pub max_charge_residual: f64,
}

pub const TIMESERIES_HEADER: &str =
    "t,kinetic,field_energy,total,drift,picard_iters,max_residue,sum_d,max_charge_residual";

pub fn format_timeseries_row(r: &TimeseriesRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.t,
        r.kinetic,
        r.field_energy,
        r.total,
        r.drift,
        r.picard_iters,
        r.max_residue,
        r.sum_d,
        r.max_charge_residual
    )
}

pub fn parse_timeseries(text: &str) -> Result<Vec<TimeseriesRow>, CsvError> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(CsvError::ColumnCount {
                line: k + 1,
                expected: 9,
                found: parts.len(),
            });
        }
        let f = |field: &'static str, s: &str| -> Result<f64, CsvError> {
            s.parse().map_err(|_| CsvError::Parse {
                line: k + 1,
                field,
                value: s.to_string(),
            })
        };
        rows.push(TimeseriesRow {
            t: f("t", parts[0])?,
            kinetic: f("kinetic", parts[1])?,
            field_energy: f("field_energy", parts[2])?,
            total: f("total", parts[3])?,
            drift: f("drift", parts[4])?,
            picard_iters: parts[5].parse().map_err(|_| CsvError::Parse {
                line: k + 1,
                field: "picard_iters",
                value: parts[5].to_string(),
            })?,
            max_residue: f("max_residue", parts[6])?,
            sum_d: f("sum_d", parts[7])?,
            max_charge_residual: f("max_charge_residual", parts[8])?,
        });
    }
    Ok(rows)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>, CsvError> {
    parse_timeseries(&fs::read_to_string(path)?)
}

/// Write one per-cell ledger snapshot, one row per cell.
pub fn write_ledger_csv(path: &Path, ledger: &EnergyLedger, mesh: &Mesh1D) -> Result<(), io::Error> {
    let mut text =
        String::from("i,dek_dt,deps_dt,div_gamma,div_gammaE,D,gammaK_left_face,residue\n");
    let n = mesh.n_cells();
    for i in 0..n {
        let left_face = if i == 0 { n - 1 } else { i - 1 };
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            i,
            ledger.dek_dt[i],
            ledger.deps_dt[i],
            ledger.div_gamma[i],
            ledger.div_gamma_e[i],
            ledger.d[i],
            ledger.gamma_k[left_face],
            ledger.residue[i]
        )
        .expect("string write is infallible");
    }
    fs::write(path, text)
}

/// Flat key=value metadata file.
pub fn write_meta(path: &Path, entries: &[(String, String)]) -> Result<(), io::Error> {
    let mut text = String::new();
    for (k, v) in entries {
        writeln!(text, "{k}={v}").expect("string write is infallible");
    }
    fs::write(path, text)
}

/// Incremental CSV sink so partial output survives a failed run.
pub struct TimeseriesWriter {
    inner: io::BufWriter<fs::File>,
}

impl TimeseriesWriter {
    pub fn create(path: &Path) -> Result<Self, io::Error> {
        let mut inner = io::BufWriter::new(fs::File::create(path)?);
        writeln!(inner, "{TIMESERIES_HEADER}")?;
        Ok(TimeseriesWriter { inner })
    }

    pub fn write_row(&mut self, row: &TimeseriesRow) -> Result<(), io::Error> {
        writeln!(self.inner, "{}", format_timeseries_row(row))
    }

    pub fn flush(&mut self) -> Result<(), io::Error> {
        self.inner.flush()
    }
}

/// Least-squares growth rate of `ln(field_energy)` over `[t_start, t_end]`,
/// divided by two (the energy grows as `exp(2 gamma t)`).
pub fn fit_growth_rate(series: &[(f64, f64)], t_start: f64, t_end: f64) -> Result<f64, FitError> {
    let window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t_start && *t <= t_end)
        .collect();
    if window.len() < 10 {
        return Err(FitError::DegenerateWindow {
            t_start,
            t_end,
            count: window.len(),
        });
    }
    for &(t, v) in &window {
        if v.is_nan() || v <= 0.0 {
            return Err(FitError::NonPositiveEnergy { t, value: v });
        }
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y = window.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, v) in &window {
        cov += (t - mean_t) * (v.ln() - mean_y);
        var += (t - mean_t) * (t - mean_t);
    }
    Ok(cov / var / 2.0)
}
