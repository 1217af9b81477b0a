//! Invariant checks shared by the property tests and the acceptance run.

use std::path::Path;

use edla::datasets::{parse_cifar10, parse_idx_images, parse_idx_labels};
use edla::network::{rms_normalize, BlockKind, EdlaNetwork, EdlaSpec, GlobalError};
use edla::{ActivationKind, Matrix, RngState};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

use super::oracles::edla_update_scalar;

pub type Check = std::result::Result<(), TestCaseError>;

const ACTS: [ActivationKind; 3] = [
    ActivationKind::Sigmoid,
    ActivationKind::Relu,
    ActivationKind::Identity,
];

pub fn random_net(seed: u64, n_in: usize, hidden: Vec<usize>, h: usize, o: usize, rms: bool) -> EdlaNetwork {
    let spec = EdlaSpec::new(n_in, hidden)
        .activations(ACTS[h], ACTS[o])
        .rms(rms);
    EdlaNetwork::init(&spec, &mut RngState::new(seed)).unwrap()
}

fn hidden() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..4)
}

pub type SignsCase = (u64, usize, Vec<usize>, usize, usize, bool, f64, usize);

/// Inputs in `[0, 2)` and sigmoid or ReLU hidden units, so presynaptic
/// outputs are non-negative.
pub fn signs_cases() -> impl Strategy<Value = SignsCase> {
    (any::<u64>(), 1usize..5, hidden(), 0usize..2, 0usize..3, any::<bool>(), 1e-3f64..2.0, 1usize..20)
}

pub fn signs_survive_training((seed, n_in, hidden, h, o, rms, eta, steps): SignsCase) -> Check {
    let mut net = random_net(seed, n_in, hidden, h, o, rms);
    let mut rng = RngState::with_stream(seed, 99);
    for _ in 0..steps {
        let x = Matrix::from_vec(3, n_in, rng.uniform(0.0, 2.0, 3 * n_in).unwrap()).unwrap();
        let t = rng.uniform(-1.0, 2.0, 3).unwrap();
        net.train_batch(&x, &t, eta).unwrap();
    }
    prop_assert!(net.signs_hold());
    Ok(())
}

pub type GateCase = (u64, usize, Vec<usize>, usize, bool, f64);

pub fn gate_cases() -> impl Strategy<Value = GateCase> {
    (any::<u64>(), 1usize..5, hidden(), 0usize..3, any::<bool>(), -1.0f64..2.0)
}

pub fn only_the_gated_blocks_move((seed, n_in, hidden, h, rms, t): GateCase) -> Check {
    let net = random_net(seed, n_in, hidden, h, 0, rms);
    let x = RngState::with_stream(seed, 7).uniform(0.0, 1.0, n_in).unwrap();
    let trace = net.forward(&x).unwrap();
    let err = GlobalError::new(t, trace.y);
    let deltas = net.compute_update(&trace, err, 0.5).unwrap();
    let touched = |k: BlockKind| deltas.iter().any(|d| d.block(k).iter().any(|&v| v != 0.0));
    let open_pos = [BlockKind::Pp, BlockKind::Np];
    let open_neg = [BlockKind::Nn, BlockKind::Pn];
    if err.d > 0.0 {
        prop_assert!(!open_neg.iter().any(|&k| touched(k)));
    } else if err.d < 0.0 {
        prop_assert!(!open_pos.iter().any(|&k| touched(k)));
    } else {
        prop_assert!(!BlockKind::ALL.iter().any(|&k| touched(k)));
    }
    // The sigmoid output unit always has positive φ, so its open blocks move.
    let out = deltas.last().unwrap();
    let moved = |k: BlockKind| out.block(k).iter().any(|&v| v != 0.0);
    if err.d > 0.0 {
        prop_assert!(moved(BlockKind::Pp) && moved(BlockKind::Np));
    } else if err.d < 0.0 {
        prop_assert!(moved(BlockKind::Nn) && moved(BlockKind::Pn));
    }
    Ok(())
}

fn even_len(range: std::ops::Range<f64>, len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(range, len).prop_filter("even", |v| v.len() % 2 == 0)
}

pub fn jacobian_cases() -> impl Strategy<Value = Vec<f64>> {
    even_len(-50.0..50.0, 1..16)
}

pub fn rms_jacobian_bounds(a: Vec<f64>) -> Check {
    let n = a.len() / 2;
    let out = rms_normalize(&a, n).unwrap();
    if out.rms > 0.0 {
        for (j, &r) in out.rho.iter().enumerate() {
            prop_assert!(r >= 0.0 && r <= 1.0 / out.rms, "rho[{}] = {}", j, r);
            prop_assert!(1.0 - a[j] * a[j] / (2.0 * n as f64 * out.rms * out.rms) >= -1e-15);
        }
        let s: f64 = a.iter().zip(&out.a_tilde).map(|(x, t)| x * t).sum();
        let expect = 2.0 * n as f64 * out.rms;
        prop_assert!((s - expect).abs() <= 1e-12 * expect.max(1.0), "{} vs {}", s, expect);
    }
    Ok(())
}

pub fn scale_cases() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (even_len(-10.0..10.0, 2..12), 1e-3f64..1e3)
}

pub fn rms_is_scale_invariant((a, c): (Vec<f64>, f64)) -> Check {
    if a.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let n = a.len() / 2;
    let base = rms_normalize(&a, n).unwrap();
    let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
    let out = rms_normalize(&scaled, n).unwrap();
    for (x, y) in base.a_tilde.iter().zip(&out.a_tilde) {
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
    Ok(())
}

pub type BatchCase = (u64, usize, Vec<usize>, usize, bool, usize);

pub fn batch_cases() -> impl Strategy<Value = BatchCase> {
    (any::<u64>(), 1usize..4, hidden(), 0usize..3, any::<bool>(), 1usize..6)
}

/// One batch step equals the weights plus the mean of brute-force
/// per-sample deltas.
pub fn batch_step_is_mean_of_sample_steps((seed, n_in, hidden, h, rms, k): BatchCase) -> Check {
    let net = random_net(seed, n_in, hidden, h, 0, rms);
    let mut rng = RngState::with_stream(seed, 3);
    let x = Matrix::from_vec(k, n_in, rng.uniform(0.0, 1.0, k * n_in).unwrap()).unwrap();
    let t = rng.uniform(0.0, 1.0, k).unwrap();
    let eta = 0.3;
    let per_sample: Vec<_> = (0..k).map(|i| edla_update_scalar(&net, x.row(i), t[i], eta)).collect();

    let mut got = net.clone();
    got.train_batch(&x, &t, eta).unwrap();
    for (l, layer) in got.layers().iter().enumerate() {
        for (b, kind) in BlockKind::ALL.iter().enumerate() {
            let before = net.layers()[l].block(*kind);
            let after = layer.block(*kind);
            for j in 0..after.rows() {
                for i in 0..after.cols() {
                    let mean = per_sample.iter().map(|d| d[l][b][j][i]).sum::<f64>() / k as f64;
                    let want = before.get(j, i) + mean;
                    prop_assert!(
                        (after.get(j, i) - want).abs() <= 1e-12 * want.abs().max(1.0),
                        "layer {} {} [{}][{}]", l, kind.label(), j, i
                    );
                }
            }
        }
    }
    Ok(())
}

pub type IdxCase = (u32, u32, prop::sample::Index);

pub fn idx_cases() -> impl Strategy<Value = IdxCase> {
    (1u32..4, 1u32..5, any::<prop::sample::Index>())
}

pub fn idx_truncation_is_rejected((n, side, cut): IdxCase) -> Check {
    let mut img = Vec::new();
    for w in [2051u32, n, side, side] {
        img.extend(w.to_be_bytes());
    }
    img.extend(vec![7u8; (n * side * side) as usize]);
    let p = Path::new("mem");
    prop_assert!(parse_idx_images(&img, p).is_ok());
    prop_assert!(parse_idx_images(&img[..cut.index(img.len())], p).is_err());
    let mut extended = img.clone();
    extended.push(0);
    prop_assert!(parse_idx_images(&extended, p).is_err());

    let mut lab = Vec::new();
    lab.extend(2049u32.to_be_bytes());
    lab.extend(n.to_be_bytes());
    lab.extend(vec![1u8; n as usize]);
    prop_assert!(parse_idx_labels(&lab, p).is_ok());
    prop_assert!(parse_idx_labels(&lab[..cut.index(lab.len())], p).is_err());
    Ok(())
}

pub fn cifar_cases() -> impl Strategy<Value = (usize, usize)> {
    (1usize..3, 1usize..3073)
}

pub fn cifar_partial_records_are_rejected((records, cut): (usize, usize)) -> Check {
    let bytes = vec![3u8; records * 3073];
    let p = Path::new("mem");
    prop_assert!(parse_cifar10(&bytes, p).is_ok());
    prop_assert!(parse_cifar10(&bytes[..bytes.len() - cut], p).is_err());
    Ok(())
}

fn run<S: Strategy>(strategy: S, cases: u32, check: impl Fn(S::Value) -> Check) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, check)
        .map_err(|e| e.to_string())
}

/// Every check above with a fixed RNG, `cases` cases each.
pub fn run_suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("sign preservation", run(signs_cases(), cases, signs_survive_training)),
        ("gating exclusivity", run(gate_cases(), cases, only_the_gated_blocks_move)),
        ("rms jacobian bounds", run(jacobian_cases(), cases, rms_jacobian_bounds)),
        ("rms scale invariance", run(scale_cases(), cases, rms_is_scale_invariant)),
        ("batch mean vs per-sample oracle", run(batch_cases(), cases, batch_step_is_mean_of_sample_steps)),
        ("idx byte validation", run(idx_cases(), cases, idx_truncation_is_rejected)),
        ("cifar byte validation", run(cifar_cases(), cases, cifar_partial_records_are_rejected)),
    ]
}
