//! Independent scalar-loop references used by several test targets.
#![allow(dead_code)]

use edla::mlp::MlpNetwork;
use edla::network::{BlockKind, EdlaNetwork};
use edla::ActivationKind;
use twofloat::TwoFloat;

/// Scalar forward pass returning, per layer, `(phi, z)` over
/// `[positive units..., negative units...]`.
pub fn edla_forward_scalar(net: &EdlaNetwork, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n_layers = net.layers().len();
    let mut zp: Vec<f64> = x.to_vec();
    let mut zn: Vec<f64> = x.to_vec();
    let mut out = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let n = layer.n_post();
        let m = zp.len();
        let mut a = vec![0.0; 2 * n];
        for j in 0..n {
            let mut ap = layer.block(BlockKind::Pp).get(j, m) + layer.block(BlockKind::Pn).get(j, m);
            let mut an = layer.block(BlockKind::Np).get(j, m) + layer.block(BlockKind::Nn).get(j, m);
            for i in 0..m {
                ap += layer.block(BlockKind::Pp).get(j, i) * zp[i];
                ap += layer.block(BlockKind::Pn).get(j, i) * zn[i];
                an += layer.block(BlockKind::Np).get(j, i) * zp[i];
                an += layer.block(BlockKind::Nn).get(j, i) * zn[i];
            }
            a[j] = ap;
            a[n + j] = an;
        }
        let hidden = l + 1 < n_layers;
        let g = if hidden {
            net.hidden_activation()
        } else {
            net.output_activation()
        };
        let mut a_t = a.clone();
        let mut rho = vec![1.0; 2 * n];
        if hidden && net.rms_enabled() {
            let mut ss = 0.0;
            for v in &a {
                ss += v * v;
            }
            let rms = (ss / (2 * n) as f64).sqrt();
            if rms > 0.0 {
                for j in 0..2 * n {
                    a_t[j] = a[j] / rms;
                    rho[j] = (1.0 / rms) * (1.0 - a[j] * a[j] / (2.0 * n as f64 * rms * rms));
                }
            }
        }
        let z: Vec<f64> = a_t.iter().map(|&v| g.apply(v)).collect();
        let phi: Vec<f64> = (0..2 * n).map(|j| g.derivative(a_t[j]) * rho[j]).collect();
        zp = z[..n].to_vec();
        zn = z[n..].to_vec();
        out.push((phi, z));
    }
    out
}

/// Per layer, deltas of `[pp, pn, np, nn]` as nested `[j][i]` vectors with
/// the bias in the last column.
pub fn edla_update_scalar(net: &EdlaNetwork, x: &[f64], t: f64, eta: f64) -> Vec<[Vec<Vec<f64>>; 4]> {
    let fwd = edla_forward_scalar(net, x);
    let y = fwd.last().unwrap().1[0];
    let d = t - y;
    let dp = if d > 0.0 { d } else { 0.0 };
    let dm = if d < 0.0 { -d } else { 0.0 };
    let mut res = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let n = layer.n_post();
        let (zp, zn): (Vec<f64>, Vec<f64>) = if l == 0 {
            (x.to_vec(), x.to_vec())
        } else {
            let z = &fwd[l - 1].1;
            (z[..z.len() / 2].to_vec(), z[z.len() / 2..].to_vec())
        };
        let m = zp.len();
        let phi = &fwd[l].0;
        let mut pp = vec![vec![0.0; m + 1]; n];
        let mut pn = pp.clone();
        let mut np = pp.clone();
        let mut nn = pp.clone();
        for j in 0..n {
            for i in 0..=m {
                let (up, un) = if i == m { (1.0, 1.0) } else { (zp[i], zn[i]) };
                pp[j][i] = eta * dp * phi[j] * up;
                np[j][i] = -eta * dp * phi[n + j] * up;
                nn[j][i] = eta * dm * phi[n + j] * un;
                pn[j][i] = -eta * dm * phi[j] * un;
            }
        }
        res.push([pp, pn, np, nn]);
    }
    res
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub enum MlpLoss {
    /// `(y - t)²` on one output.
    Mse(f64),
    /// Softmax cross-entropy on this label.
    Ce(usize),
}

/// Double-double `exp`: range reduction by `ln 2`, a scaled Taylor series and
/// repeated squaring. Accurate to roughly 1e-30 relative for `|x| < 700`.
pub fn dd_exp(x: TwoFloat) -> TwoFloat {
    let k = (x.hi() / std::f64::consts::LN_2).round();
    let r = (x - twofloat::consts::LN_2 * k) / 1024.0;
    let mut term = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(1.0);
    for n in 1..30 {
        term = term * r / n as f64;
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

/// Double-double natural log by Newton steps on `exp`.
pub fn dd_ln(x: TwoFloat) -> TwoFloat {
    let mut y = TwoFloat::from(x.hi().ln());
    for _ in 0..3 {
        y = y + x * dd_exp(-y) - 1.0;
    }
    y
}

fn dd_act(kind: ActivationKind, a: TwoFloat) -> TwoFloat {
    match kind {
        ActivationKind::Sigmoid => TwoFloat::from(1.0) / (dd_exp(-a) + 1.0),
        ActivationKind::Relu => {
            if a.hi() > 0.0 {
                a
            } else {
                TwoFloat::from(0.0)
            }
        }
        ActivationKind::Identity => a,
    }
}

/// Loss in double-double with weight `(layer, index)` replaced by `w`.
fn mlp_loss_dd(net: &MlpNetwork, x: &[f64], loss: &MlpLoss, at: (usize, usize), w: TwoFloat) -> TwoFloat {
    let mut z: Vec<TwoFloat> = x.iter().map(|&v| TwoFloat::from(v)).collect();
    let n = net.layers().len();
    for (l, m) in net.layers().iter().enumerate() {
        let cols = m.cols();
        let weight = |j: usize, i: usize| {
            if (l, j * cols + i) == at {
                w
            } else {
                TwoFloat::from(m.get(j, i))
            }
        };
        let a: Vec<TwoFloat> = (0..m.rows())
            .map(|j| {
                let mut s = weight(j, cols - 1);
                for (i, &zi) in z.iter().enumerate() {
                    s += weight(j, i) * zi;
                }
                s
            })
            .collect();
        z = if l + 1 < n {
            a.into_iter().map(|v| dd_act(net.hidden_activation(), v)).collect()
        } else {
            a
        };
    }
    match loss {
        MlpLoss::Mse(t) => {
            let r = z[0] - *t;
            r * r
        }
        MlpLoss::Ce(c) => {
            let mut s = TwoFloat::from(0.0);
            for &v in &z {
                s += dd_exp(v);
            }
            dd_ln(s) - z[*c]
        }
    }
}

/// Central differences with step `h` for every weight, the loss evaluated
/// in double-double so the quotient is free of cancellation noise.
pub fn mlp_fd_gradients_dd(net: &MlpNetwork, x: &[f64], loss: &MlpLoss, h: f64) -> Vec<Vec<f64>> {
    (0..net.layers().len())
        .map(|l| {
            (0..net.layers()[l].as_slice().len())
                .map(|i| {
                    let w0 = TwoFloat::from(net.layers()[l].as_slice()[i]);
                    let up = mlp_loss_dd(net, x, loss, (l, i), w0 + h);
                    let down = mlp_loss_dd(net, x, loss, (l, i), w0 - h);
                    ((up - down) / (2.0 * h)).hi()
                })
                .collect()
        })
        .collect()
}

/// Activations whose derivative is smooth enough for finite differences.
pub const SMOOTH: [ActivationKind; 2] = [ActivationKind::Sigmoid, ActivationKind::Identity];
