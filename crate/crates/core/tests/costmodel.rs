use approx::assert_relative_eq;
use pisim::costmodel::{
    apply_optimization, gc_storage, max_sustainable_rate, parse_table, phase_costs, CostInputs, CostMode, CostModel,
    CostSource, OptimizationKnobs, Protocol, DEFAULT_BANDWIDTH,
};
use proptest::prelude::*;

fn shipped(mode: CostMode) -> CostModel {
    CostModel::shipped(mode).unwrap()
}

#[test]
fn gc_storage_per_network() {
    let cm = shipped(CostMode::TableDirect);
    let gb = |m: &str, d: &str| gc_storage(&CostInputs::preset(m, d).unwrap(), &cm) as f64 / 1e9;
    assert_relative_eq!(gb("resnet32", "c100"), 5.3, max_relative = 0.05);
    assert!(gb("resnet18", "c100") > 9.0);
    assert_relative_eq!(gb("resnet18", "tiny"), 38.9, max_relative = 0.10);
}

#[test]
fn relu_knob_scales_client_storage() {
    let cm = shipped(CostMode::TableDirect);
    let inp = CostInputs::preset("resnet18", "tiny").unwrap();
    let base = gc_storage(&inp, &cm) as f64;
    let knobs = OptimizationKnobs::parse_assignments("relu=0.2").unwrap();
    let (i, m) = apply_optimization(&inp, &cm, &knobs).unwrap();
    assert_relative_eq!(gc_storage(&i, &m) as f64, base * 0.2, max_relative = 1e-6);
    let c = phase_costs(Protocol::ServerGarbler, &i, &m, DEFAULT_BANDWIDTH).unwrap();
    assert_relative_eq!(c.client_storage_delta as f64 / 1e9, 38.9 / 5.0, max_relative = 0.10);
    assert_eq!(c.source, CostSource::Rescaled);
}

#[test]
fn bandwidth_only_changes_communication_time() {
    let cm = shipped(CostMode::TableDirect);
    let inp = CostInputs::preset("resnet32", "c100").unwrap();
    let fast = phase_costs(Protocol::ClientGarbler, &inp, &cm, DEFAULT_BANDWIDTH).unwrap();
    let slow = phase_costs(Protocol::ClientGarbler, &inp, &cm, DEFAULT_BANDWIDTH / 2.0).unwrap();
    let extra = fast.offline_comm() as f64 / (DEFAULT_BANDWIDTH / 2.0) - fast.offline_comm() as f64 / DEFAULT_BANDWIDTH;
    assert_relative_eq!(slow.offline_latency - fast.offline_latency, extra, max_relative = 1e-6);
    assert!(slow.online_latency > fast.online_latency);
}

#[test]
fn flop_knob_doubles_he_term_in_scaled_mode() {
    let cm = shipped(CostMode::ComponentScaled);
    let inp = CostInputs::preset("vgg16", "c100").unwrap();
    let base = phase_costs(Protocol::ServerGarbler, &inp, &cm, DEFAULT_BANDWIDTH).unwrap();
    let knobs = OptimizationKnobs::new(1.0, 1.0, 2.0, 1.0, "flops x2").unwrap();
    let (i, m) = apply_optimization(&inp, &cm, &knobs).unwrap();
    let c = phase_costs(Protocol::ServerGarbler, &i, &m, DEFAULT_BANDWIDTH).unwrap();
    assert_relative_eq!(
        c.breakdown.he_linear,
        2.0 * base.breakdown.he_linear,
        max_relative = 1e-9
    );
}

#[test]
fn table_rejects_bad_rows() {
    let header = "protocol\tmodel\tdataset\toffline_s\tonline_s\toffline_comm_bytes\tonline_comm_bytes\tclient_storage_bytes\tserver_storage_bytes\tbandwidth_bytes_per_s\n";
    assert!(parse_table(&format!("{header}sg\tresnet32\tc100\t-1\t9.4\t-\t-\t-\t-\t1e8\n")).is_err());
    assert!(parse_table(&format!("{header}sg\tresnet32\tc100\t1\n")).is_err());
    assert!(parse_table(&format!("{header}xx\tresnet32\tc100\t1\t2\t-\t-\t-\t-\t1e8\n")).is_err());
}

proptest! {
    #[test]
    fn costs_are_monotone_in_knobs(relu in 0.05f64..1.0, flop in 0.05f64..1.0, gc in 0.1f64..1.0) {
        let cm = shipped(CostMode::ComponentScaled);
        let inp = CostInputs::preset("resnet32", "c100").unwrap();
        let base = phase_costs(Protocol::ClientGarbler, &inp, &cm, DEFAULT_BANDWIDTH).unwrap();
        let knobs = OptimizationKnobs::new(relu, gc, flop, 1.0, "p").unwrap();
        let (i, m) = apply_optimization(&inp, &cm, &knobs).unwrap();
        let c = phase_costs(Protocol::ClientGarbler, &i, &m, DEFAULT_BANDWIDTH).unwrap();
        prop_assert!(c.offline_latency <= base.offline_latency + 1e-9);
        prop_assert!(c.online_latency <= base.online_latency + 1e-9);
        prop_assert!(c.gc_bytes <= base.gc_bytes);
        prop_assert!(max_sustainable_rate(&c) >= max_sustainable_rate(&base));
    }

    #[test]
    fn knob_composition_matches_sequential_application(a in 0.1f64..1.0, b in 0.1f64..1.0) {
        let cm = shipped(CostMode::ComponentScaled);
        let inp = CostInputs::preset("resnet18", "c100").unwrap();
        let ka = OptimizationKnobs::new(a, b, 1.0, a, "a").unwrap();
        let kb = OptimizationKnobs::new(b, 1.0, a, b, "b").unwrap();
        let (i1, m1) = apply_optimization(&inp, &cm, &ka).unwrap();
        let (i2, m2) = apply_optimization(&i1, &m1, &kb).unwrap();
        let (i3, m3) = apply_optimization(&inp, &cm, &ka.compose(&kb)).unwrap();
        let c2 = phase_costs(Protocol::ServerGarbler, &i2, &m2, DEFAULT_BANDWIDTH).unwrap();
        let c3 = phase_costs(Protocol::ServerGarbler, &i3, &m3, DEFAULT_BANDWIDTH).unwrap();
        prop_assert!((c2.offline_latency - c3.offline_latency).abs() <= 1e-6 * c3.offline_latency.max(1.0));
        prop_assert!((c2.online_latency - c3.online_latency).abs() <= 1e-6 * c3.online_latency.max(1.0));
    }
}
