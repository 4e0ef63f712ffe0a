use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pisim::costmodel::{CostInputs, CostMode, CostModel, Protocol};
use pisim::desim::{run_many, SimConfig};
use pisim::exec::Mode;
use pisim::netarch::{parse_arch, Weights};
use pisim::protocol::{verify_against_plaintext, ProtocolConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOY: &str = include_str!("../../../configs/archs/toy_cnn.arch");
const MODES: [Mode; 2] = [Mode::Sequential, Mode::Parallel];

fn simulate(c: &mut Criterion) {
    let cm = CostModel::shipped(CostMode::TableDirect).unwrap();
    let cfg = SimConfig {
        protocol: Protocol::ServerGarbler,
        arrival_rate: 0.005,
        n_runs: 64,
        ..SimConfig::default()
    };
    let cost = cfg
        .costs(&CostInputs::preset("resnet32", "c100").unwrap(), &cm)
        .unwrap();
    let mut g = c.benchmark_group("run_many_64");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| run_many(black_box(&cfg), &cost, m).unwrap())
        });
    }
    g.finish();
}

fn verify(c: &mut Criterion) {
    let arch = parse_arch(TOY).unwrap();
    let w = Weights::random(&arch, 8, &mut ChaCha8Rng::seed_from_u64(1));
    let cfg = ProtocolConfig::default();
    let mut g = c.benchmark_group("verify_32_trials");
    g.sample_size(20);
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| verify_against_plaintext(Protocol::ClientGarbler, &arch, &w, 32, 7, &cfg, m).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulate, verify);
criterion_main!(benches);
