use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::MetricsReport;

pub const REPORT_JSON: &str = "report.json";
pub const ATE_CSV: &str = "ate.csv";
pub const DRIFT_CSV: &str = "drift.csv";
pub const ATE_DAT: &str = "ate_vs_distance.dat";
pub const DRIFT_DAT: &str = "drift_vs_distance.dat";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub ate_csv: PathBuf,
    pub drift_csv: PathBuf,
    pub ate_dat: PathBuf,
    pub drift_dat: PathBuf,
}

impl ReportFiles {
    pub fn all(&self) -> [&Path; 5] {
        [&self.json, &self.ate_csv, &self.drift_csv, &self.ate_dat, &self.drift_dat]
    }
}

fn csv(header: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut s = format!("{header}\n");
    for (x, y) in xs.iter().zip(ys) {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

fn dat(title: &str, columns: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut s = format!("# {title}\n# {columns}\n");
    for (x, y) in xs.iter().zip(ys) {
        writeln!(s, "{x} {y}").unwrap();
    }
    s
}

/// JSON report, per-series CSVs and gnuplot data files.
pub fn write_report_files(report: &MetricsReport, dir: impl AsRef<Path>) -> std::io::Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = ReportFiles {
        json: dir.join(REPORT_JSON),
        ate_csv: dir.join(ATE_CSV),
        drift_csv: dir.join(DRIFT_CSV),
        ate_dat: dir.join(ATE_DAT),
        drift_dat: dir.join(DRIFT_DAT),
    };
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    fs::write(&files.json, json + "\n")?;
    fs::write(&files.ate_csv, csv("t,ate_m", &report.ate_stamps, &report.ate_series))?;
    fs::write(
        &files.drift_csv,
        csv("t,tdr_fraction", &report.drift_stamps, &report.drift_series),
    )?;
    fs::write(
        &files.ate_dat,
        dat("ATE vs distance", "distance_m ate_m", &report.ate_distance, &report.ate_series),
    )?;
    let percent: Vec<f64> = report.drift_series.iter().map(|d| d * 100.0).collect();
    fs::write(
        &files.drift_dat,
        dat("translation drift vs distance", "distance_m drift_percent", &report.drift_distance, &percent),
    )?;
    Ok(files)
}
