//! The two-vehicle toy: `u` drives at constant speed (y = 2t), `v`
//! accelerates (y = t²), one broadcast per unit slot over six slots.

use std::fmt::Write as _;

use anyhow::Result;
use num_rational::Ratio;
use taoi_core::engine::ChannelMode;
use taoi_core::oracle::{replay_schedule, Objective, ReplayTables, ScheduleProblem};
use taoi_core::{run_with_table, SimConfig};

type Q = Ratio<i64>;

const TABLE_I: [(&str, [&str; 6]); 8] = [
    ("AoI_uv", ["0", "1", "0", "1", "0", "1"]),
    ("y_u", ["2", "4", "6", "8", "10", "12"]),
    ("yhat_uv", ["0", "4", "6", "8", "10", "12"]),
    ("te_uv", ["2", "0", "0", "0", "0", "0"]),
    ("AoI_vu", ["1", "0", "1", "0", "1", "0"]),
    ("y_v", ["1", "4", "9", "16", "25", "36"]),
    ("yhat_vu", ["0", "0", "8", "12", "24", "32"]),
    ("te_vu", ["1", "4", "1", "4", "1", "4"]),
];

const TABLE_II: [(&str, [&str; 6]); 8] = [
    ("AoI_uv", ["0", "1", "2", "3", "4", "5"]),
    ("y_u", ["2", "4", "6", "8", "10", "12"]),
    ("yhat_uv", ["0", "4", "6", "8", "10", "12"]),
    ("te_uv", ["2", "0", "0", "0", "0", "0"]),
    ("AoI_vu", ["1", "0", "0", "0", "0", "0"]),
    ("y_v", ["1", "4", "9", "16", "25", "36"]),
    ("yhat_vu", ["0", "0", "8", "15", "24", "35"]),
    ("te_vu", ["1", "4", "1", "1", "1", "1"]),
];

/// Expected averages: AoI_uv, AoI_vu, system AoI, te_uv, te_vu.
struct Averages {
    aoi_uv: Q,
    aoi_vu: Q,
    system_aoi: Q,
    te_uv: Q,
    te_vu: Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub what: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct TableResult {
    pub name: &'static str,
    pub file: &'static str,
    pub schedule: Vec<Vec<usize>>,
    pub layout: Vec<(String, Vec<String>)>,
    pub checks: Vec<Check>,
}

impl TableResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn csv(&self) -> String {
        table_csv(&self.layout)
    }
}

/// `quantity,t1,..,tK` followed by one line per layout row.
pub fn table_csv(layout: &[(String, Vec<String>)]) -> String {
    let k = layout.first().map_or(0, |r| r.1.len());
    let mut s = String::from("quantity");
    for i in 1..=k {
        write!(s, ",t{i}").unwrap();
    }
    s.push('\n');
    for (label, cells) in layout {
        s.push_str(label);
        for c in cells {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
    }
    s
}

fn check(what: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check { what: what.into(), ok, detail: detail.into() }
}

fn fmt_q(q: Q) -> String {
    if q.is_integer() {
        q.to_integer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn compare(
    name: &'static str,
    file: &'static str,
    schedule: Vec<Vec<usize>>,
    expected: &[(&str, [&str; 6])],
    averages: Averages,
) -> Result<TableResult> {
    let problem = ScheduleProblem::toy(6, Objective::SystemAoi);
    let tables: ReplayTables = replay_schedule(&problem, &schedule)?;
    let layout = tables.layout();
    let mut checks = Vec::new();

    if layout.len() != expected.len() {
        checks.push(check("row count", false, format!("{} rows, expected {}", layout.len(), expected.len())));
    }
    for ((label, want), (got_label, got)) in expected.iter().zip(&layout) {
        let ok = label == got_label && want.iter().eq(got.iter());
        let detail = if ok {
            want.join(" ")
        } else {
            format!("{got_label}: {} (expected {label}: {})", got.join(" "), want.join(" "))
        };
        checks.push(check(*label, ok, detail));
    }

    let exact = |what: &str, got: Option<Q>, want: Q| {
        let ok = got == Some(want);
        let got = got.map_or("missing".to_string(), fmt_q);
        check(format!("avg {what}"), ok, format!("{got} (expected {})", fmt_q(want)))
    };
    checks.push(exact("AoI_uv", tables.pair_aoi(0, 1), averages.aoi_uv));
    checks.push(exact("AoI_vu", tables.pair_aoi(1, 0), averages.aoi_vu));
    checks.push(exact("system AoI", Some(tables.system_aoi), averages.system_aoi));
    checks.push(exact("te_uv", tables.pair_te_exact(0, 1), averages.te_uv));
    checks.push(exact("te_vu", tables.pair_te_exact(1, 0), averages.te_vu));

    // The simulator in slotted mode has to agree with the exact replay.
    let cfg = SimConfig {
        vehicle_count: 2,
        duration: 6.0,
        channel_mode: ChannelMode::IdealizedSlotted,
        mobility_tick: 1.0,
        neighbor_timeout: 1e6,
        forced_schedule: Some(schedule.iter().map(|s| s.iter().map(|&u| u as u32).collect()).collect()),
        ..SimConfig::default()
    };
    let report = run_with_table(&cfg, &problem.trajectories()?)?;
    let sim_aoi = report.system_aoi;
    let sim_te = report.pair_te(1, 0).map_or(f64::NAN, |p| p.mean_te);
    let ok = (sim_aoi - to_f64(tables.system_aoi)).abs() < 1e-12 && (sim_te - to_f64(averages.te_vu)).abs() < 1e-12;
    checks.push(check("simulator", ok, format!("system AoI {sim_aoi}, te_vu {sim_te}")));

    Ok(TableResult { name, file, schedule, layout, checks })
}

/// Replays both toy schedules and diffs every cell and average against the
/// expected tables.
pub fn reproduce_tables() -> Result<Vec<TableResult>> {
    let q = |n, d| Q::new(n, d);
    let alternating = (0..6).map(|k| vec![k % 2]).collect();
    let first = compare(
        "toy table 1 (AoI schedule)",
        "table_1.csv",
        alternating,
        &TABLE_I,
        Averages { aoi_uv: q(1, 2), aoi_vu: q(1, 2), system_aoi: q(1, 2), te_uv: q(1, 3), te_vu: q(5, 2) },
    )?;

    let u_then_v = (0..6).map(|k| vec![usize::from(k > 0)]).collect();
    let mut second = compare(
        "toy table 2 (alternative schedule)",
        "table_2.csv",
        u_then_v,
        &TABLE_II,
        Averages { aoi_uv: q(5, 2), aoi_vu: q(1, 6), system_aoi: q(4, 3), te_uv: q(1, 3), te_vu: q(3, 2) },
    )?;
    // The expected system AoI 1.334 is 4/3 rounded.
    let problem = ScheduleProblem::toy(6, Objective::SystemAoi);
    let sys = to_f64(replay_schedule(&problem, &second.schedule)?.system_aoi);
    second.checks.push(check("system AoI 1.334 +- 0.001", (sys - 1.334).abs() <= 1e-3, sys.to_string()));
    Ok(vec![first, second])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_tables_match() {
        let results = reproduce_tables().unwrap();
        for r in &results {
            let failed: Vec<_> = r.checks.iter().filter(|c| !c.ok).collect();
            assert!(failed.is_empty(), "{}: {failed:?}", r.name);
        }
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let r = &reproduce_tables().unwrap()[0];
        let csv = r.csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "quantity,t1,t2,t3,t4,t5,t6");
        assert_eq!(lines[1], "AoI_uv,0,1,0,1,0,1");
        assert_eq!(lines[8], "te_vu,1,4,1,4,1,4");
    }

    #[test]
    fn a_wrong_cell_is_reported() {
        let wrong: Vec<Vec<usize>> = vec![vec![0], vec![0], vec![1], vec![0], vec![1], vec![0]];
        let r = compare(
            "probe",
            "probe.csv",
            wrong,
            &TABLE_I,
            Averages {
                aoi_uv: Q::from_integer(0),
                aoi_vu: Q::from_integer(0),
                system_aoi: Q::from_integer(0),
                te_uv: Q::from_integer(0),
                te_vu: Q::from_integer(0),
            },
        )
        .unwrap();
        assert!(!r.passed());
        assert!(r.checks.iter().any(|c| c.what == "AoI_uv" && !c.ok));
    }
}
