//! Gradient checks against finite differences, reporting the worst relative
//! error seen.

use edla::mlp::{mlp_backward, mlp_forward, softmax_cross_entropy, squared_error, MlpNetwork};
use edla::network::{BlockKind, EdlaNetwork, EdlaSpec, GlobalError};
use edla::{Matrix, RngState};

use super::oracles::{mlp_fd_gradients_dd, rel_err, MlpLoss, SMOOTH};

/// Output-layer EDLA deltas against `−η·∂E/∂w` for `E = ½(y − t)²` on the
/// blocks the gate opens.
pub fn edla_output_layer_worst(seed: u64, target_offset: f64) -> f64 {
    let eta = 0.7;
    let spec = EdlaSpec::new(3, vec![4]);
    let net = EdlaNetwork::init(&spec, &mut RngState::new(seed)).unwrap();
    let x = RngState::with_stream(seed, 5).uniform(0.0, 1.0, 3).unwrap();
    let tr = net.forward(&x).unwrap();
    let t = tr.y + target_offset;
    let deltas = net.compute_update(&tr, GlobalError::new(t, tr.y), eta).unwrap();
    let block = if target_offset > 0.0 { BlockKind::Pp } else { BlockKind::Pn };
    let out = net.layers().len() - 1;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.layers()[out].block(block).cols() {
        let mut probe = net.clone();
        let w0 = probe.layers()[out].block(block).get(0, i);
        let loss = |p: &EdlaNetwork| 0.5 * (p.predict(&x).unwrap() - t).powi(2);
        probe.layers_mut()[out].block_mut(block).set(0, i, w0 + h);
        let up = loss(&probe);
        probe.layers_mut()[out].block_mut(block).set(0, i, w0 - h);
        let down = loss(&probe);
        let step = -eta * (up - down) / (2.0 * h);
        worst = worst.max(rel_err(deltas[out].block(block).get(0, i), step));
    }
    worst
}

/// Backprop gradients of a random MLP under cross-entropy and of a
/// single-output one under squared error.
pub fn mlp_case_worst(case: u64) -> f64 {
    let mut rng = RngState::new(1000 + case);
    let depth = 1 + rng.below(3) as usize;
    let hidden: Vec<usize> = (0..depth - 1).map(|_| 1 + rng.below(8) as usize).collect();
    let n_in = 1 + rng.below(8) as usize;
    let n_out = 2 + rng.below(4) as usize;
    let act = SMOOTH[case as usize % 2];
    let mut worst: f64 = 0.0;
    let mut compare = |grads: Vec<Matrix>, fd: Vec<Vec<f64>>| {
        for (g, f) in grads.iter().zip(&fd) {
            for (a, b) in g.iter().zip(f) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
    };

    let net = MlpNetwork::init(n_in, &hidden, n_out, act, &mut rng).unwrap();
    let x = rng.uniform(-1.0, 1.0, n_in).unwrap();
    let label = rng.below(n_out as u64) as usize;
    let tr = mlp_forward(&net, &x).unwrap();
    let (_, g_out) = softmax_cross_entropy(tr.output(), label).unwrap();
    compare(
        mlp_backward(&net, &tr, &g_out).unwrap(),
        mlp_fd_gradients_dd(&net, &x, &MlpLoss::Ce(label), 1e-6),
    );

    let single = MlpNetwork::init(n_in, &hidden, 1, act, &mut rng).unwrap();
    let t = rng.next_f64();
    let tr = mlp_forward(&single, &x).unwrap();
    let (_, g) = squared_error(tr.output()[0], t);
    compare(
        mlp_backward(&single, &tr, &[g]).unwrap(),
        mlp_fd_gradients_dd(&single, &x, &MlpLoss::Mse(t), 1e-6),
    );
    worst
}
