use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use taoi_core::rate_control::Protocol;
use taoi_core::{run_simulation, RunReport, SimConfig};

use crate::report::{run_dir_name, write_csv, write_run_files, write_summary, SUMMARY_CSV};

pub const COMPARISON_CSV: &str = "comparison.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const PDR_BY_DISTANCE_CSV: &str = "pdr_by_distance.csv";
pub const INTERVAL_HIST_CSV: &str = "interval_hist.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    pub vehicle_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: SimConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() || self.vehicle_counts.is_empty() || self.seeds.is_empty() {
            bail!("sweep needs at least one protocol, one density and one seed");
        }
        if let Some(n) = self.vehicle_counts.iter().find(|&&n| n < 2) {
            bail!("vehicle counts must be >= 2, got {n}");
        }
        Ok(())
    }

    /// Every run of the matrix, ordered by density, then seed, then protocol.
    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &n in &self.vehicle_counts {
            for &seed in &self.seeds {
                for &protocol in &self.protocols {
                    out.push(SimConfig { vehicle_count: n, seed, protocol, ..self.base.clone() });
                }
            }
        }
        out
    }
}

/// Parses `a,b,c` lists.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        out.push(item.parse().map_err(|e| anyhow::anyhow!("bad list item {item:?}: {e}"))?);
    }
    Ok(out)
}

/// Like [`parse_list`], but items may also be half-open ranges `lo..hi`.
pub fn parse_range_list(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let lo: u64 = lo.parse().with_context(|| format!("bad range {item:?}"))?;
                let hi: u64 = hi.parse().with_context(|| format!("bad range {item:?}"))?;
                out.extend(lo..hi);
            }
            None => out.push(item.parse().with_context(|| format!("bad list item {item:?}"))?),
        }
    }
    Ok(out)
}

/// One run of the sweep, widened with one PDR column per distance bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub protocol: String,
    pub n_vehicles: usize,
    pub seed: u64,
    pub collision_risk_count: u64,
    pub mean_interval_ms: f64,
    pub overall_pdr: Option<f64>,
    pub system_aoi_s: f64,
    pub system_taoi_s: f64,
    /// Keyed by the bin's lower edge in meters.
    pub pdr: BTreeMap<u64, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub protocol: String,
    pub n_vehicles: usize,
    pub runs: usize,
    pub mean_collision_risk: f64,
    pub median_collision_risk: f64,
    pub mean_interval_ms: f64,
    pub mean_overall_pdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub protocol: String,
    pub n_vehicles: usize,
    pub bin_lo_m: f64,
    pub bin_hi_m: f64,
    pub successes: u64,
    pub opportunities: u64,
    pub pdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub protocol: String,
    pub n_vehicles: usize,
    pub bin_lo_ms: f64,
    pub bin_hi_ms: f64,
    pub count: u64,
}

pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    pub files: Vec<PathBuf>,
}

/// Runs the matrix on `jobs` worker threads. Each run writes into its own
/// subdirectory of `out`; the combined tables are written once all runs
/// are done.
pub fn run_sweep(spec: &SweepSpec, jobs: usize, out: &Path) -> Result<SweepOutcome> {
    spec.validate()?;
    let configs = spec.configs();
    for cfg in &configs {
        cfg.validate()?;
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let reports: Vec<RunReport> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let r = run_simulation(cfg)?;
                write_run_files(&r, &out.join(run_dir_name(&r)))?;
                tracing::info!(run = %run_dir_name(&r), risk = r.collision_risk_count, "run finished");
                Ok(r)
            })
            .collect::<Result<_>>()
    })?;

    let mut files = Vec::new();
    let summary = out.join(SUMMARY_CSV);
    write_summary(&reports, &summary)?;
    files.push(summary);
    let comparison = out.join(COMPARISON_CSV);
    write_comparison(&comparison_rows(&reports), &comparison)?;
    files.push(comparison);
    let aggregate = out.join(AGGREGATE_CSV);
    write_csv(&aggregate, &aggregate_rows(&reports))?;
    files.push(aggregate);
    let distance = out.join(PDR_BY_DISTANCE_CSV);
    write_csv(&distance, &distance_rows(&reports))?;
    files.push(distance);
    let hist = out.join(INTERVAL_HIST_CSV);
    write_csv(&hist, &interval_rows(&reports))?;
    files.push(hist);
    Ok(SweepOutcome { reports, files })
}

pub fn comparison_rows(reports: &[RunReport]) -> Vec<ComparisonRow> {
    reports
        .iter()
        .map(|r| ComparisonRow {
            protocol: r.protocol.name().to_string(),
            n_vehicles: r.n_vehicles,
            seed: r.seed,
            collision_risk_count: r.collision_risk_count,
            mean_interval_ms: r.mean_interval_ms,
            overall_pdr: r.overall_pdr,
            system_aoi_s: r.system_aoi,
            system_taoi_s: r.system_taoi,
            pdr: r.pdr_bins.iter().map(|b| (b.lo_m.round() as u64, b.pdr)).collect(),
        })
        .collect()
}

const COMPARISON_FIXED: [&str; 8] = [
    "protocol",
    "n_vehicles",
    "seed",
    "collision_risk_count",
    "mean_interval_ms",
    "overall_pdr",
    "system_aoi_s",
    "system_taoi_s",
];

/// Bin columns are named `pdr_<lo>m` and cover the union of bins across
/// runs; a run without traffic in a bin leaves the cell empty.
pub fn write_comparison(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut edges: Vec<u64> = rows.iter().flat_map(|r| r.pdr.keys().copied()).collect();
    edges.sort_unstable();
    edges.dedup();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<String> = COMPARISON_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(edges.iter().map(|e| format!("pdr_{e}m")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.protocol.clone(),
            r.n_vehicles.to_string(),
            r.seed.to_string(),
            r.collision_risk_count.to_string(),
            r.mean_interval_ms.to_string(),
            r.overall_pdr.map(|p| p.to_string()).unwrap_or_default(),
            r.system_aoi_s.to_string(),
            r.system_taoi_s.to_string(),
        ];
        rec.extend(edges.iter().map(|e| r.pdr.get(e).map(|p| p.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header = r.headers()?.clone();
    let edges: Vec<u64> = header
        .iter()
        .skip(COMPARISON_FIXED.len())
        .map(|h| h.trim_start_matches("pdr_").trim_end_matches('m').parse::<u64>())
        .collect::<Result<_, _>>()
        .context("bad PDR column name")?;
    let opt = |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut pdr = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            if let Some(p) = opt(&rec[COMPARISON_FIXED.len() + i])? {
                pdr.insert(*e, p);
            }
        }
        out.push(ComparisonRow {
            protocol: rec[0].to_string(),
            n_vehicles: rec[1].parse()?,
            seed: rec[2].parse()?,
            collision_risk_count: rec[3].parse()?,
            mean_interval_ms: rec[4].parse()?,
            overall_pdr: opt(&rec[5])?,
            system_aoi_s: rec[6].parse()?,
            system_taoi_s: rec[7].parse()?,
            pdr,
        });
    }
    Ok(out)
}

fn groups(reports: &[RunReport]) -> BTreeMap<(usize, &'static str), Vec<&RunReport>> {
    let mut g: BTreeMap<(usize, &'static str), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        g.entry((r.n_vehicles, r.protocol.name())).or_default().push(r);
    }
    g
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    }
}

pub fn aggregate_rows(reports: &[RunReport]) -> Vec<AggregateRow> {
    groups(reports)
        .into_iter()
        .map(|((n, protocol), runs)| {
            let k = runs.len() as f64;
            let mut risk: Vec<f64> = runs.iter().map(|r| r.collision_risk_count as f64).collect();
            let pdrs: Vec<f64> = runs.iter().filter_map(|r| r.overall_pdr).collect();
            AggregateRow {
                protocol: protocol.to_string(),
                n_vehicles: n,
                runs: runs.len(),
                mean_collision_risk: risk.iter().sum::<f64>() / k,
                median_collision_risk: median(&mut risk),
                mean_interval_ms: runs.iter().map(|r| r.mean_interval_ms).sum::<f64>() / k,
                mean_overall_pdr: (!pdrs.is_empty()).then(|| pdrs.iter().sum::<f64>() / pdrs.len() as f64),
            }
        })
        .collect()
}

/// PDR per distance bin, pooled over the runs of each protocol and density.
pub fn distance_rows(reports: &[RunReport]) -> Vec<DistanceRow> {
    let mut out = Vec::new();
    for ((n, protocol), runs) in groups(reports) {
        let mut bins: BTreeMap<u64, (f64, f64, u64, u64)> = BTreeMap::new();
        for b in runs.iter().flat_map(|r| &r.pdr_bins) {
            let e = bins.entry(b.lo_m.round() as u64).or_insert((b.lo_m, b.hi_m, 0, 0));
            e.2 += b.successes;
            e.3 += b.opportunities;
        }
        for (lo, hi, s, o) in bins.into_values() {
            out.push(DistanceRow {
                protocol: protocol.to_string(),
                n_vehicles: n,
                bin_lo_m: lo,
                bin_hi_m: hi,
                successes: s,
                opportunities: o,
                pdr: if o == 0 { 0.0 } else { s as f64 / o as f64 },
            });
        }
    }
    out
}

/// Broadcast interval histogram, pooled over the runs of each group.
pub fn interval_rows(reports: &[RunReport]) -> Vec<IntervalRow> {
    let mut out = Vec::new();
    for ((n, protocol), runs) in groups(reports) {
        let mut bins: BTreeMap<u64, (f64, f64, u64)> = BTreeMap::new();
        for b in runs.iter().flat_map(|r| &r.interval_histogram) {
            let e = bins.entry((b.lo_ms * 1000.0).round() as u64).or_insert((b.lo_ms, b.hi_ms, 0));
            e.2 += b.count;
        }
        out.extend(bins.into_values().map(|(lo, hi, count)| IntervalRow {
            protocol: protocol.to_string(),
            n_vehicles: n,
            bin_lo_ms: lo,
            bin_hi_ms: hi,
            count,
        }));
    }
    out
}
