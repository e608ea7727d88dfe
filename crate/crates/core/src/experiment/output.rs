//! CSV writers with a fixed column order and number format.

use std::io::Write;
use std::path::Path;

use super::run::{BaselineRow, SweepRow};
use crate::error::Result;
use crate::simulator::RocCurve;

pub const SWEEP_HEADER: [&str; 11] = [
    "axis",
    "value",
    "eps_th",
    "far_analytic",
    "mdr_analytic",
    "far_empirical",
    "mdr_empirical",
    "ci_far",
    "ci_mdr",
    "trials",
    "seed",
];

pub const ROC_HEADER: [&str; 5] = ["threshold", "pfa", "pd", "provenance", "seed"];

pub const BASELINE_HEADER: [&str; 10] = [
    "axis",
    "value",
    "far_analytic",
    "mdr_analytic",
    "far_empirical",
    "mdr_empirical",
    "ci_far",
    "ci_mdr",
    "trials",
    "seed",
];

/// Shortest round-trip decimal, switching to scientific notation for
/// magnitudes below `1e-4`.
pub fn format_number(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

fn opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis.to_string(),
            format_number(r.value),
            format_number(r.eps_th),
            opt(r.far_analytic),
            opt(r.mdr_analytic),
            opt(r.far_empirical),
            opt(r.mdr_empirical),
            opt(r.ci_far),
            opt(r.ci_mdr),
            opt_u(r.trials),
            opt_u(r.seed),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_baseline_csv(path: &Path, rows: &[BaselineRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BASELINE_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis.to_string(),
            format_number(r.value),
            opt(r.far_analytic),
            opt(r.mdr_analytic),
            opt(r.far_empirical),
            opt(r.mdr_empirical),
            opt(r.ci_far),
            opt(r.ci_mdr),
            opt_u(r.trials),
            opt_u(r.seed),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every curve in order; analytic rows leave `seed` empty.
pub fn write_roc_csv(path: &Path, curves: &[RocCurve], seed: u64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ROC_HEADER)?;
    for c in curves {
        let seed_field = match c.provenance {
            crate::simulator::RocProvenance::Analytic => String::new(),
            _ => seed.to_string(),
        };
        for p in &c.points {
            w.write_record([
                format_number(p.threshold),
                format_number(p.pfa),
                format_number(p.pd),
                c.provenance.name().to_string(),
                seed_field.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script plotting the given data files.
pub fn gnuplot_stub(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    log_x: bool,
    plots: &[String],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "set datafile separator \",\"")?;
    writeln!(f, "set key autotitle columnhead")?;
    writeln!(f, "set title \"{title}\"")?;
    writeln!(f, "set xlabel \"{xlabel}\"")?;
    writeln!(f, "set ylabel \"{ylabel}\"")?;
    writeln!(f, "set logscale y")?;
    if log_x {
        writeln!(f, "set logscale x")?;
    }
    writeln!(f, "set grid")?;
    writeln!(f, "plot \\")?;
    for (i, p) in plots.iter().enumerate() {
        let sep = if i + 1 < plots.len() { ", \\" } else { "" };
        writeln!(f, "  {p}{sep}")?;
    }
    Ok(())
}
