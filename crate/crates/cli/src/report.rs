use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use taoi_core::engine::MiRow;
use taoi_core::RunReport;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const PDR_BINS_CSV: &str = "pdr_bins.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PAIR_TE_CSV: &str = "pair_te.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: String,
    pub n_vehicles: usize,
    pub seed: u64,
    pub system_aoi_s: f64,
    pub system_taoi_s: f64,
    pub collision_risk_count: u64,
    pub mean_interval_ms: f64,
    pub overall_pdr: Option<f64>,
}

impl From<&RunReport> for SummaryRow {
    fn from(r: &RunReport) -> Self {
        Self {
            protocol: r.protocol.name().to_string(),
            n_vehicles: r.n_vehicles,
            seed: r.seed,
            system_aoi_s: r.system_aoi,
            system_taoi_s: r.system_taoi,
            collision_risk_count: r.collision_risk_count,
            mean_interval_ms: r.mean_interval_ms,
            overall_pdr: r.overall_pdr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdrRow {
    pub bin_lo_m: f64,
    pub bin_hi_m: f64,
    pub pdr: f64,
}

pub fn pdr_rows(r: &RunReport) -> Vec<PdrRow> {
    r.pdr_bins.iter().map(|b| PdrRow { bin_lo_m: b.lo_m, bin_hi_m: b.hi_m, pdr: b.pdr }).collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV that may have no rows; the header comes from `header`.
pub(crate) fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Mean tracking error of every receiver about every sender it heard.
pub fn write_pair_te(report: &RunReport, path: &Path) -> Result<()> {
    write_csv_with_header(path, &["sender", "receiver", "mean_te", "samples"], &report.pair_tracking_error)
}

pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Directory name of one run inside a sweep.
pub fn run_dir_name(r: &RunReport) -> String {
    format!("{}_n{}_s{}", r.protocol.name(), r.n_vehicles, r.seed)
}

/// Writes the per-run files into `dir`: timeseries, PDR bins and the JSON
/// mirror of the report.
pub fn write_run_files(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let ts = dir.join(TIMESERIES_CSV);
    write_csv_with_header::<MiRow>(&ts, &["t", "vehicle_id", "delta_ms", "flag", "aoi_v", "taoi_v"], &report.timeseries)?;
    let bins = dir.join(PDR_BINS_CSV);
    write_csv_with_header(&bins, &["bin_lo_m", "bin_hi_m", "pdr"], &pdr_rows(report))?;
    let json = dir.join(REPORT_JSON);
    fs::write(&json, report_json(report)).with_context(|| format!("cannot write {}", json.display()))?;
    Ok(vec![ts, bins, json])
}

pub fn write_summary(reports: &[RunReport], path: &Path) -> Result<()> {
    let rows: Vec<SummaryRow> = reports.iter().map(SummaryRow::from).collect();
    write_csv_with_header(
        path,
        &[
            "protocol",
            "n_vehicles",
            "seed",
            "system_aoi_s",
            "system_taoi_s",
            "collision_risk_count",
            "mean_interval_ms",
            "overall_pdr",
        ],
        &rows,
    )
}

/// Writes `summary.csv` with one row per report. A single report puts its
/// timeseries, PDR bins and `report.json` next to the summary; several
/// reports get one subdirectory each. Returns the files written.
pub fn emit_reports(reports: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        tracing::warn!(dir = %dir.display(), "no reports to emit");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let summary = dir.join(SUMMARY_CSV);
    write_summary(reports, &summary)?;
    let mut files = vec![summary];
    if let [one] = reports {
        files.extend(write_run_files(one, dir)?);
    } else {
        for r in reports {
            files.extend(write_run_files(r, &dir.join(run_dir_name(r)))?);
        }
    }
    Ok(files)
}
