use pisim::exec::Mode;
use pisim::netarch::{parse_arch, NetworkArch, Weights};
use pisim::protocol::verify_against_plaintext;
use pisim::protocol::{
    offline_phase, online_phase, reconstruct, relu_gadget, run_inference, share, Fp, Party, PayloadKind, Phase,
    PrimeField, Protocol, ProtocolConfig, ProtocolError, Transcript, F61,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOY: &str = include_str!("../../../configs/archs/toy_cnn.arch");

type F97 = Fp<97>;

fn toy() -> (NetworkArch, Weights<i64>) {
    let arch = parse_arch(TOY).unwrap();
    let w = Weights::random(&arch, 4, &mut ChaCha8Rng::seed_from_u64(11));
    (arch, w)
}

/// Two ReLU layers and a skip, small enough for many trials.
fn residual_net() -> (NetworkArch, Weights<i64>) {
    let arch = parse_arch(
        "network name=res_toy\n\
         input name=img channels=2 height=4 width=4 classes=5\n\
         conv out=2 kernel=3 stride=1 padding=1 bias=true\n\
         relu\n\
         conv out=2 kernel=3 stride=1 padding=1\n\
         skip from=1 to=2 kind=identity\n\
         relu\n\
         avgpool global\n\
         flatten\n\
         fc out=5\n",
    )
    .unwrap();
    let w = Weights::random(&arch, 3, &mut ChaCha8Rng::seed_from_u64(5));
    (arch, w)
}

proptest! {
    #[test]
    fn share_round_trip(xs in prop::collection::vec(0u64..97, 0..32), seed in any::<u64>(), layer in 0usize..8) {
        let x: Vec<F97> = xs.iter().map(|&v| F97::from_u64(v)).collect();
        let (c, s) = share(&x, layer, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(c.party, Party::Client);
        prop_assert_eq!(s.party, Party::Server);
        prop_assert_eq!(reconstruct(&c, &s).unwrap(), x.clone());
        prop_assert_eq!(reconstruct(&s, &c).unwrap(), x);
    }

    #[test]
    fn relu_gadget_matches_oracle(vals in prop::collection::vec(-24i64..=24, 1..16), seed in any::<u64>()) {
        // safe magnitude for p = 97 is 24
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<F97> = vals.iter().map(|&v| F97::from_i128(v as i128)).collect();
        let (c, s) = share(&x, 0, &mut rng);
        let r_next: Vec<F97> = x.iter().map(|_| F97::random(&mut rng)).collect();
        let out = relu_gadget(&s.values, &c.values, &r_next).unwrap();
        for ((o, r), v) in out.iter().zip(&r_next).zip(&vals) {
            prop_assert_eq!((*o + *r).signed(), (*v).max(0) as i128);
        }
    }

    #[test]
    fn relu_gadget_refuses_large_magnitudes(v in 25i64..=48, neg in any::<bool>()) {
        let v = if neg { -v } else { v };
        let x = [F97::from_i128(v as i128)];
        let zero = [F97::from_u64(0)];
        let refused = matches!(relu_gadget(&x, &zero, &zero), Err(ProtocolError::MagnitudeOverflow { index: 0 }));
        prop_assert!(refused);
    }

    #[test]
    fn residual_net_matches_plaintext(seed in any::<u64>()) {
        let (arch, w) = residual_net();
        let cfg = ProtocolConfig::default();
        for p in [Protocol::ServerGarbler, Protocol::ClientGarbler] {
            let r = verify_against_plaintext(p, &arch, &w, 1, seed, &cfg, Mode::Sequential).unwrap();
            prop_assert_eq!(r.failures, 0);
        }
    }
}

#[test]
fn both_protocols_agree_under_shared_seed() {
    let (arch, w) = residual_net();
    let cfg = ProtocolConfig::default();
    let input = vec![
        1, -2, 3, 0, -1, 2, 2, -3, 1, 1, 0, -2, 3, 3, -1, 0, 1, 2, -2, 0, 1, 0, 0, -1, 2, 1, 1, -3, 0, 2, 1, 1,
    ];
    let sg = run_inference(Protocol::ServerGarbler, &arch, &w, &input, 9, &cfg).unwrap();
    let cg = run_inference(Protocol::ClientGarbler, &arch, &w, &input, 9, &cfg).unwrap();
    assert_eq!(sg.reconstructed_logits, cg.reconstructed_logits);
}

#[test]
fn garbled_circuits_are_stored_by_their_evaluator() {
    let (arch, w) = toy();
    let cfg = ProtocolConfig::default();
    for (p, holder) in [
        (Protocol::ServerGarbler, Party::Client),
        (Protocol::ClientGarbler, Party::Server),
    ] {
        let off = offline_phase(p, &arch, &w, 3, &cfg).unwrap();
        assert_eq!(off.bundle.owner_of_gc(), holder);
        let gc: Vec<_> = off
            .transcript
            .events
            .iter()
            .filter(|e| e.payload_kind == PayloadKind::GarbledCircuit)
            .collect();
        assert!(!gc.is_empty());
        assert!(gc
            .iter()
            .all(|e| e.receiver == holder && e.stored_by_receiver && e.phase == Phase::Offline));
    }
}

#[test]
fn transcripts_round_trip_through_jsonl() {
    let (arch, w) = toy();
    let cfg = ProtocolConfig::default();
    let input = vec![1; arch.input_shape().len()];
    let res = run_inference(Protocol::ClientGarbler, &arch, &w, &input, 1, &cfg).unwrap();
    let mut buf = Vec::new();
    res.transcript.write_jsonl(&mut buf).unwrap();
    let back = Transcript::read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, res.transcript);
}

#[test]
fn bundle_is_single_use_across_calls() {
    let (arch, w) = toy();
    let cfg = ProtocolConfig::default();
    let mut off = offline_phase(Protocol::ServerGarbler, &arch, &w, 2, &cfg).unwrap();
    let input = vec![0; arch.input_shape().len()];
    online_phase(&mut off.bundle, &input, &off.client, &off.server, &cfg).unwrap();
    assert!(off.bundle.is_consumed());
    assert!(matches!(
        online_phase(&mut off.bundle, &input, &off.client, &off.server, &cfg),
        Err(ProtocolError::BundleConsumed)
    ));
}

#[test]
fn field_element_is_61_bits() {
    assert_eq!(F61::MODULUS, (1 << 61) - 1);
}
