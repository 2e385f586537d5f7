use taoi_core::engine::{ChannelMode, QueuePolicy};
use taoi_core::mobility::{TrajectoryTable, VehicleState};
use taoi_core::oracle::{replay_schedule, Objective, ScheduleProblem};
use taoi_core::rate_control::Protocol;
use taoi_core::{run_simulation, run_with_table, SimConfig};

fn toy_config(schedule: Vec<Vec<u32>>) -> SimConfig {
    SimConfig {
        vehicle_count: 2,
        duration: 6.0,
        channel_mode: ChannelMode::IdealizedSlotted,
        mobility_tick: 1.0,
        neighbor_timeout: 1e6,
        forced_schedule: Some(schedule),
        ..SimConfig::default()
    }
}

fn toy_run(schedule: Vec<Vec<u32>>) -> taoi_core::RunReport {
    let problem = ScheduleProblem::toy(6, Objective::SystemAoi);
    let table = problem.trajectories().unwrap();
    run_with_table(&toy_config(schedule), &table).unwrap()
}

#[test]
fn slotted_alternating_schedule() {
    let r = toy_run((0..6).map(|k| vec![k % 2]).collect());
    assert_eq!(r.system_aoi, 0.5);
    assert_eq!(r.pair_te(1, 0).unwrap().mean_te, 2.5);
    assert!((r.pair_te(0, 1).unwrap().mean_te - 2.0 / 6.0).abs() < 1e-12);
}

#[test]
fn slotted_u_then_v_schedule() {
    let r = toy_run((0..6).map(|k| vec![u32::from(k > 0)]).collect());
    assert!((r.system_aoi - 4.0 / 3.0).abs() < 1e-12);
    assert!((r.system_aoi - 1.334).abs() <= 1e-3);
    assert_eq!(r.pair_te(1, 0).unwrap().mean_te, 1.5);
}

#[test]
fn engine_agrees_with_replay_on_every_schedule() {
    let problem = ScheduleProblem::toy(6, Objective::SystemAoi);
    for mask in 0u32..(1 << 6) {
        let schedule: Vec<Vec<usize>> = (0..6).map(|k| vec![((mask >> k) & 1) as usize]).collect();
        let tables = replay_schedule(&problem, &schedule).unwrap();
        let forced = schedule.iter().map(|s| s.iter().map(|&u| u as u32).collect()).collect();
        let r = toy_run(forced);
        let exact = *tables.system_aoi.numer() as f64 / *tables.system_aoi.denom() as f64;
        assert!((r.system_aoi - exact).abs() < 1e-12, "mask {mask:06b}");
        for (s, v) in [(0, 1), (1, 0)] {
            let want = tables.pair_te(s, v).unwrap();
            let got = r.pair_te(s as u32, v as u32).unwrap().mean_te;
            assert!((got - want).abs() < 1e-12, "mask {mask:06b} pair {s}->{v}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_duration_gives_an_empty_report() {
    let cfg = SimConfig { vehicle_count: 10, duration: 0.0, ..SimConfig::default() };
    let r = run_simulation(&cfg).unwrap();
    assert_eq!(r.collision_risk_count, 0);
    assert_eq!(r.frames.generated, 0);
    assert!(r.timeseries.is_empty() && r.pdr_bins.is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let one = SimConfig { vehicle_count: 1, ..SimConfig::default() };
    assert!(run_simulation(&one).is_err());
    let neg = SimConfig { duration: -1.0, ..SimConfig::default() };
    assert!(run_simulation(&neg).is_err());
    let forced = SimConfig { forced_schedule: Some(vec![vec![0]]), ..SimConfig::default() };
    assert!(run_simulation(&forced).is_err());
}

fn small(protocol: Protocol, seed: u64) -> SimConfig {
    SimConfig { vehicle_count: 30, duration: 8.0, seed, protocol, ..SimConfig::default() }
}

#[test]
fn runs_are_deterministic() {
    let cfg = small(Protocol::Taoi, 7);
    let a = run_simulation(&cfg).unwrap();
    let b = run_simulation(&cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frames_are_conserved() {
    for queue in [QueuePolicy::Replace, QueuePolicy::Fcfs] {
        for protocol in [Protocol::Fixed10Hz, Protocol::Aoi, Protocol::Taoi] {
            let cfg = SimConfig { queue, ..small(protocol, 3) };
            let r = run_simulation(&cfg).unwrap();
            assert!(r.frames.generated > 0);
            assert!(r.frames.conserved(), "{queue:?} {protocol:?}: {:?}", r.frames);
            if queue == QueuePolicy::Fcfs {
                assert_eq!(r.frames.replaced, 0);
            }
        }
    }
}

#[test]
fn report_ratios_are_bounded() {
    let r = run_simulation(&small(Protocol::Aoi, 5)).unwrap();
    assert!(r.pdr_bins.iter().all(|b| (0.0..=1.0).contains(&b.pdr) && b.successes <= b.opportunities));
    let pdr = r.overall_pdr.unwrap();
    assert!((0.0..=1.0).contains(&pdr));
    assert!(r.system_taoi <= r.system_aoi + 1e-12);
    assert!(r.system_aoi > 0.0);
}

#[test]
fn zero_threshold_makes_taoi_equal_aoi() {
    for protocol in [Protocol::Fixed10Hz, Protocol::Taoi] {
        let mut cfg = small(protocol, 11);
        cfg.safety.te_threshold = 0.0;
        let r = run_simulation(&cfg).unwrap();
        assert!((r.system_taoi - r.system_aoi).abs() < 1e-9, "{} vs {}", r.system_taoi, r.system_aoi);
    }
}

#[test]
fn higher_threshold_never_adds_risky_epochs() {
    let mut last = u64::MAX;
    for th in [0.0, 0.1, 0.3, 0.5, 1.0, 5.0] {
        let mut cfg = small(Protocol::Fixed10Hz, 2);
        cfg.safety.te_threshold = th;
        let r = run_simulation(&cfg).unwrap();
        let risky: u64 = r.vehicles.iter().map(|v| v.risky_epochs).sum();
        assert!(risky <= last, "th {th}: {risky} > {last}");
        last = risky;
    }
}

#[test]
fn protocols_share_ground_truth() {
    let a = run_simulation(&small(Protocol::Aoi, 9)).unwrap();
    let b = run_simulation(&small(Protocol::Taoi, 9)).unwrap();
    let key = |r: &taoi_core::RunReport| r.timeseries.iter().map(|m| (m.t, m.vehicle_id)).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    let self_te = |r: &taoi_core::RunReport| r.vehicles.iter().map(|v| v.max_self_te).collect::<Vec<_>>();
    assert_eq!(self_te(&a), self_te(&b));
}

fn straight_tracks(n: usize, speed: f64, spacing: f64, duration: f64, tick: f64) -> TrajectoryTable {
    let steps = (duration / tick).round() as usize;
    let tracks = (0..n)
        .map(|i| {
            (0..=steps)
                .map(|k| {
                    let t = k as f64 * tick;
                    VehicleState {
                        id: i as u32,
                        x: i as f64 * spacing + speed * t,
                        y: 0.0,
                        speed,
                        heading: 0.0,
                        lane: 0,
                        t,
                    }
                })
                .collect()
        })
        .collect();
    TrajectoryTable::from_tracks(tick, tracks).unwrap()
}

#[test]
fn constant_velocity_keeps_the_default_interval() {
    let table = straight_tracks(4, 20.0, 30.0, 10.0, 0.1);
    let cfg = SimConfig { vehicle_count: 4, duration: 10.0, protocol: Protocol::Taoi, ..SimConfig::default() };
    let r = run_with_table(&cfg, &table).unwrap();
    assert!(r.timeseries.iter().all(|m| m.flag == 0 && m.delta_ms == 100.0));
    assert_eq!(r.system_taoi, 0.0);
    assert!(r.pair_tracking_error.iter().all(|p| p.mean_te < 1e-9));
    assert_eq!(r.collision_risk_count, 0);
}

#[test]
fn fixed_protocol_keeps_100ms_while_flagging() {
    let mut cfg = small(Protocol::Fixed10Hz, 4);
    cfg.safety.te_threshold = 0.0;
    let r = run_simulation(&cfg).unwrap();
    assert!(r.timeseries.iter().all(|m| m.flag == 1 && m.delta_ms == 100.0));
}

#[test]
fn trace_must_match_vehicle_count() {
    let table = straight_tracks(3, 10.0, 30.0, 5.0, 0.1);
    let cfg = SimConfig { vehicle_count: 4, duration: 5.0, ..SimConfig::default() };
    assert!(run_with_table(&cfg, &table).is_err());
    let short = SimConfig { vehicle_count: 3, duration: 6.0, ..SimConfig::default() };
    assert!(run_with_table(&short, &table).is_err());
}

#[test]
fn generation_jitter_keeps_runs_reproducible() {
    let cfg = SimConfig { generation_jitter: 0.01, ..small(Protocol::Aoi, 6) };
    let a = run_simulation(&cfg).unwrap();
    assert_eq!(a, run_simulation(&cfg).unwrap());
    assert!(a.frames.conserved());
    let plain = run_simulation(&small(Protocol::Aoi, 6)).unwrap();
    assert_ne!(a.collision_risk_count, plain.collision_risk_count);
    let bad = SimConfig { generation_jitter: 0.5, ..small(Protocol::Aoi, 6) };
    assert!(run_simulation(&bad).is_err());
}
