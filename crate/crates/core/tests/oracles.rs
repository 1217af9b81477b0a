mod support;

use edla::mlp::softmax_cross_entropy;
use edla::network::{BlockKind, EdlaNetwork, EdlaSpec, GlobalError};
use edla::{ActivationKind, RngState};
use proptest::prelude::*;
use support::gradients::{edla_output_layer_worst, mlp_case_worst};
use support::oracles::*;

const ACTS: [ActivationKind; 3] = [
    ActivationKind::Sigmoid,
    ActivationKind::Relu,
    ActivationKind::Identity,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn update_matches_scalar_loop(
        seed in any::<u64>(),
        n_in in 1usize..4,
        hidden in prop::collection::vec(1usize..3, 1..3),
        h in 0usize..3,
        o in 0usize..3,
        rms in any::<bool>(),
        t in -1.0f64..2.0,
        eta in 1e-3f64..3.0,
    ) {
        let spec = EdlaSpec::new(n_in, hidden).activations(ACTS[h], ACTS[o]).rms(rms);
        let net = EdlaNetwork::init(&spec, &mut RngState::new(seed)).unwrap();
        let x = RngState::with_stream(seed, 1).uniform(-1.0, 1.0, n_in).unwrap();
        let tr = net.forward(&x).unwrap();
        let got = net.compute_update(&tr, GlobalError::new(t, tr.y), eta).unwrap();
        let want = edla_update_scalar(&net, &x, t, eta);
        for (g, w) in got.iter().zip(&want) {
            for (b, kind) in BlockKind::ALL.iter().enumerate() {
                let m = g.block(*kind);
                for (j, row) in w[b].iter().enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        prop_assert!((m.get(j, i) - v).abs() <= 1e-12, "{} [{}][{}]", kind.label(), j, i);
                    }
                }
            }
        }
    }

    #[test]
    fn forward_matches_scalar_loop(
        seed in any::<u64>(),
        n_in in 1usize..5,
        hidden in prop::collection::vec(1usize..4, 1..4),
        h in 0usize..3,
        rms in any::<bool>(),
    ) {
        let spec = EdlaSpec::new(n_in, hidden).activations(ACTS[h], ActivationKind::Identity).rms(rms);
        let net = EdlaNetwork::init(&spec, &mut RngState::new(seed)).unwrap();
        let x = RngState::with_stream(seed, 1).uniform(0.0, 1.0, n_in).unwrap();
        let tr = net.forward(&x).unwrap();
        for (lt, (phi, z)) in tr.layers.iter().zip(edla_forward_scalar(&net, &x)) {
            for (a, b) in lt.z.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            for (a, b) in lt.phi.iter().zip(&phi) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn output_layer_update_is_a_gradient_step() {
    for seed in 0..10 {
        for offset in [0.3, -0.3] {
            let worst = edla_output_layer_worst(seed, offset);
            assert!(worst < 1e-6, "seed {seed} offset {offset}: {worst}");
        }
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for case in 0..20u64 {
        let worst = mlp_case_worst(case);
        assert!(worst < 1e-5, "case {case}: {worst}");
    }
}

#[test]
fn double_double_helpers_are_accurate() {
    use twofloat::TwoFloat;
    for &v in &[-20.0f64, -1.5, -1e-3, 0.0, 0.5, 3.0, 40.0] {
        let x = TwoFloat::from(v);
        let back = dd_ln(dd_exp(x));
        assert!((back - x).hi().abs() <= 1e-28 * v.abs().max(1.0), "{v}");
        assert!((dd_exp(x).hi() - v.exp()).abs() <= 2.0 * f64::EPSILON * v.exp());
    }
}

proptest! {
    #[test]
    fn softmax_gradient_sums_to_zero(logits in prop::collection::vec(-30.0f64..30.0, 2..12), pick in any::<prop::sample::Index>()) {
        let label = pick.index(logits.len());
        let (loss, g) = softmax_cross_entropy(&logits, label).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}
