//! CSV and JSON writers. All CSV is UTF-8 with LF line endings, one header
//! row, and `#`-prefixed diagnostic comment lines at the top. Numbers are
//! written with Rust's shortest round-trip f64 formatting, which is
//! locale-independent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sdde_core::composition::DensityCurve;
use sdde_core::fokker_planck::DensityField;
use sdde_core::montecarlo::{HistogramDensity, PathEnsemble};

use crate::pipeline::CliResult;

pub fn write_density_csv(path: &Path, curve: &DensityCurve, warnings: &[String]) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# t = {}", curve.t)?;
    writeln!(w, "# backend = {}", curve.backend)?;
    writeln!(w, "# mass = {}", curve.mass)?;
    for warning in warnings {
        writeln!(w, "# warning: {warning}")?;
    }
    writeln!(w, "x,density")?;
    for (x, v) in curve.x.iter().zip(&curve.values) {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

pub fn write_curves_csv(
    path: &Path,
    xs: &[f64],
    curves: &[(String, DensityCurve)],
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "x")?;
    for (name, _) in curves {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, x) in xs.iter().enumerate() {
        write!(w, "{x}")?;
        for (_, curve) in curves {
            write!(w, ",{}", curve.values[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_report_json(path: &Path, report: &crate::pipeline::ComparisonReport) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| crate::pipeline::CliError::Config(format!("json: {e}")))?;
    writeln!(w)?;
    Ok(())
}

pub fn write_raw_samples_csv(path: &Path, ens: &PathEnsemble) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "path,time,value")?;
    for p in 0..ens.n_paths() {
        for (ti, t) in ens.times().iter().enumerate() {
            writeln!(w, "{p},{t},{}", ens.value(p, ti))?;
        }
    }
    Ok(())
}

pub fn write_histograms_csv(
    path: &Path,
    per_time: &[(f64, HistogramDensity)],
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (t, hist) in per_time {
        writeln!(w, "# t = {t}: samples = {}, mass = {}", hist.count(), hist.mass())?;
    }
    writeln!(w, "time,bin_center,density")?;
    for (t, hist) in per_time {
        for (c, h) in hist.centers().iter().zip(hist.heights()) {
            writeln!(w, "{t},{c},{h}")?;
        }
    }
    Ok(())
}

pub fn write_field_csv(path: &Path, field: &DensityField, label: &str) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    let k = grid.dim();
    writeln!(w, "# t = {}", field.time())?;
    writeln!(w, "# backend = {label}")?;
    writeln!(w, "# mass = {}", field.mass())?;
    for warning in field.warnings() {
        writeln!(w, "# warning: {warning}")?;
    }
    for d in 1..=k {
        write!(w, "x{d},")?;
    }
    writeln!(w, "density")?;
    let mut coords = vec![0.0; k];
    for i in 0..grid.node_count() {
        grid.coords(i, &mut coords);
        for c in &coords {
            write!(w, "{c},")?;
        }
        writeln!(w, "{}", field.values()[i])?;
    }
    Ok(())
}
