use pisim::costmodel::{CostInputs, CostMode, CostModel, PhaseCosts, Protocol};
use pisim::desim::export::{write_aggregate_csv, write_runs_csv, AGGREGATE_HEADER};
use pisim::desim::{
    generate_arrivals, run, run_many, run_traced, sweep, DesimError, EventKind, OfflinePolicy, SimConfig, GB,
};
use pisim::exec::Mode;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(rate: f64, capacity: u64, horizon: f64, policy: OfflinePolicy) -> SimConfig {
    SimConfig {
        protocol: Protocol::ServerGarbler,
        arrival_rate: rate,
        horizon,
        n_runs: 4,
        client_capacity: capacity,
        policy,
        ..SimConfig::default()
    }
}

fn policy() -> impl Strategy<Value = OfflinePolicy> {
    prop_oneof![Just(OfflinePolicy::Preemptive), Just(OfflinePolicy::NonPreemptive)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn requests_are_conserved(
        offline in 1.0f64..50.0,
        online in 0.5f64..10.0,
        bundle in 1u64..5,
        capacity in 1u64..20,
        rate in 0.001f64..0.2,
        seed in any::<u64>(),
        policy in policy(),
    ) {
        prop_assume!(capacity >= bundle);
        let cost = PhaseCosts::fixed(Protocol::ServerGarbler, offline, online, bundle, 0);
        let c = SimConfig { seed, ..cfg(rate, capacity, 2_000.0, policy) };
        let (m, trace) = run_traced(&c, &cost).unwrap();
        let arrivals = trace.iter().filter(|e| e.kind == EventKind::Arrival).count() as u64;
        prop_assert_eq!(m.arrivals, arrivals);
        prop_assert_eq!(m.arrivals, m.served_within_horizon + m.censored);
        prop_assert_eq!(m.bundles_consumed, m.served_within_horizon);
        prop_assert!(m.bundles_produced >= m.bundles_consumed);
        prop_assert!(m.client_high_water <= capacity);
        prop_assert!(m.offline_busy <= c.horizon + 1e-9);
        for r in &m.records {
            prop_assert!(r.latency >= online - 1e-9);
            prop_assert!(r.online_done <= c.horizon);
            prop_assert!((r.queue_wait() + r.precompute_wait + r.online() - r.latency).abs() < 1e-6);
        }
        // FIFO service
        prop_assert!(m.records.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        prop_assert!(trace.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), policy in policy()) {
        let cost = PhaseCosts::fixed(Protocol::ServerGarbler, 20.0, 2.0, 1, 0);
        let c = SimConfig { seed, ..cfg(0.02, 3, 5_000.0, policy) };
        prop_assert_eq!(run(&c, &cost).unwrap(), run(&c, &cost).unwrap());
    }

    #[test]
    fn more_storage_never_hurts_a_light_load(seed in any::<u64>()) {
        // With arrivals sparse relative to the offline time, extra bundles can only shorten waits.
        let cost = PhaseCosts::fixed(Protocol::ServerGarbler, 30.0, 1.0, 1, 0);
        let small = run(&SimConfig { seed, ..cfg(0.002, 1, 20_000.0, OfflinePolicy::Preemptive) }, &cost).unwrap();
        let large = run(&SimConfig { seed, ..cfg(0.002, 8, 20_000.0, OfflinePolicy::Preemptive) }, &cost).unwrap();
        prop_assert_eq!(small.arrivals, large.arrivals);
        if let (Some(a), Some(b)) = (small.mean_latency, large.mean_latency) {
            prop_assert!(b <= a + 1e-9);
        }
    }
}

#[test]
fn arrival_count_tracks_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = generate_arrivals(0.5, 200_000.0, &mut rng).len() as f64;
    let sd = (0.5f64 * 200_000.0).sqrt();
    assert!((n - 100_000.0).abs() < 4.0 * sd);
}

#[test]
fn oversized_bundle_is_infeasible() {
    let cm = CostModel::shipped(CostMode::TableDirect).unwrap();
    let c = SimConfig {
        protocol: Protocol::ServerGarbler,
        model: "resnet18".into(),
        dataset: "cifar100".into(),
        ..SimConfig::default()
    };
    let cost = c.costs(&CostInputs::preset("resnet18", "c100").unwrap(), &cm).unwrap();
    match run_many(&c, &cost, Mode::Sequential) {
        Err(DesimError::ConfigInfeasible {
            bundle_bytes, capacity, ..
        }) => {
            assert!(bundle_bytes > 9 * GB);
            assert_eq!(capacity, 8 * GB);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let cost = PhaseCosts::fixed(Protocol::ClientGarbler, 40.0, 4.0, 0, 1);
    let c = SimConfig {
        n_runs: 16,
        ..cfg(0.01, GB, 20_000.0, OfflinePolicy::Preemptive)
    };
    let a = run_many(&c, &cost, Mode::Sequential).unwrap();
    let b = run_many(&c, &cost, Mode::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_flags_cells() {
    let base = SimConfig {
        horizon: 20_000.0,
        n_runs: 3,
        ..SimConfig::default()
    };
    let costs = |p: Protocol| Ok(PhaseCosts::fixed(p, 100.0, 10.0, 2 * GB, 0));
    let rows = sweep(
        &base,
        &[0.001, 0.02],
        &[GB, 4 * GB],
        &[Protocol::ServerGarbler],
        costs,
        Mode::Parallel,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].infeasible && rows[1].infeasible);
    assert!(rows[0].metrics.is_none());
    assert!(!rows[2].saturated && rows[3].saturated);
    assert!(rows[3].metrics.is_some());
    assert_eq!(
        rows.iter().map(|r| r.rate).collect::<Vec<_>>(),
        [0.001, 0.02, 0.001, 0.02]
    );
}

#[test]
fn csv_outputs_are_stable() {
    let cost = PhaseCosts::fixed(Protocol::ClientGarbler, 30.0, 3.0, 0, 1);
    let c = cfg(0.01, GB, 10_000.0, OfflinePolicy::Preemptive);
    let write = || {
        let a = run_many(&c, &cost, Mode::Parallel).unwrap();
        let mut agg = Vec::new();
        write_aggregate_csv(&mut agg, [(&c, &a)]).unwrap();
        let mut runs = Vec::new();
        write_runs_csv(&mut runs, &c, &a).unwrap();
        (agg, runs)
    };
    let (a1, r1) = write();
    let (a2, r2) = write();
    assert_eq!(a1, a2);
    assert_eq!(r1, r2);
    let text = String::from_utf8(a1).unwrap();
    assert_eq!(text.lines().next().unwrap(), AGGREGATE_HEADER.join(","));
    assert_eq!(String::from_utf8(r1).unwrap().lines().count(), 1 + c.n_runs);
}
