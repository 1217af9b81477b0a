//! Dense multilayer perceptron trained by backpropagation with AdamW.

use crate::activation::ActivationKind;
use crate::diagnostics::{self, ParamCount, RunRecord, DEAD_SAMPLE_FRACTION, DEAD_THRESHOLD};
use crate::error::{EdlaError, Result};
use crate::multiclass::argmax;
use crate::tensor::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Per-sample `(y - t)²` on a single identity output.
    Mse,
    /// Softmax cross-entropy on logits.
    CrossEntropy,
}

/// Weight matrices are `n_out x (n_in + 1)`, the last column being the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Matrix>,
    hidden_activation: ActivationKind,
}

impl MlpNetwork {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization, layer by
    /// layer, row-major, bias included.
    pub fn init(
        n_in: usize,
        hidden_sizes: &[usize],
        n_out: usize,
        hidden_activation: ActivationKind,
        rng: &mut RngState,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 || hidden_sizes.contains(&0) {
            return Err(EdlaError::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let mut layers = Vec::with_capacity(hidden_sizes.len() + 1);
        let mut n_pre = n_in;
        for &n_post in hidden_sizes.iter().chain(std::iter::once(&n_out)) {
            let bound = 1.0 / (n_pre as f64).sqrt();
            let data = rng.uniform(-bound, bound, n_post * (n_pre + 1))?;
            layers.push(Matrix::from_vec(n_post, n_pre + 1, data)?);
            n_pre = n_post;
        }
        Ok(Self {
            layers,
            hidden_activation,
        })
    }

    pub fn from_layers(layers: Vec<Matrix>, hidden_activation: ActivationKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(EdlaError::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[1].cols() != w[0].rows() + 1 {
                return Err(EdlaError::Shape(format!(
                    "layer of {} units feeds a {}x{} matrix",
                    w[0].rows(),
                    w[1].rows(),
                    w[1].cols()
                )));
            }
        }
        if layers[0].cols() < 2 {
            return Err(EdlaError::Shape("first layer has no inputs".into()));
        }
        Ok(Self {
            layers,
            hidden_activation,
        })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> ActivationKind {
        self.hidden_activation
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].cols() - 1
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("non-empty").rows()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Matrix::rows).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }
}

impl ParamCount for MlpNetwork {
    fn param_count(&self) -> usize {
        self.n_params()
    }
}

/// Forward quantities: `z[0]` is the input, `z[l]` the output of layer `l`;
/// `a[l]` the pre-activation of layer `l + 1`. The output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    pub a: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.z.last().expect("non-empty")
    }
}

fn affine(w: &Matrix, z: &[f64]) -> Vec<f64> {
    let m = z.len();
    (0..w.rows())
        .map(|j| {
            let row = w.row(j);
            crate::tensor::dot(&row[..m], z) + row[m]
        })
        .collect()
}

pub fn mlp_forward(net: &MlpNetwork, x: &[f64]) -> Result<MlpTrace> {
    if x.len() != net.n_in() {
        return Err(EdlaError::Shape(format!(
            "input of length {}, network expects {}",
            x.len(),
            net.n_in()
        )));
    }
    let n = net.layers.len();
    let mut a = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n + 1);
    z.push(x.to_vec());
    for (l, w) in net.layers.iter().enumerate() {
        let pre = affine(w, &z[l]);
        let post = if l + 1 < n {
            pre.iter().map(|&v| net.hidden_activation.apply(v)).collect()
        } else {
            pre.clone()
        };
        a.push(pre);
        z.push(post);
    }
    Ok(MlpTrace { a, z })
}

/// `∂E/∂w` for every layer given `∂E/∂y` at the linear output.
pub fn mlp_backward(net: &MlpNetwork, trace: &MlpTrace, grad_out: &[f64]) -> Result<Vec<Matrix>> {
    if grad_out.len() != net.n_out() || trace.z.len() != net.layers.len() + 1 {
        return Err(EdlaError::Shape("trace or output gradient does not match the network".into()));
    }
    let mut grads: Vec<Matrix> = net
        .layers
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut delta = grad_out.to_vec();
    for l in (0..net.layers.len()).rev() {
        let zin = &trace.z[l];
        let g = &mut grads[l];
        for (j, &dj) in delta.iter().enumerate() {
            let row = g.row_mut(j);
            for (r, &zi) in row.iter_mut().zip(zin) {
                *r = dj * zi;
            }
            row[zin.len()] = dj;
        }
        if l > 0 {
            let w = &net.layers[l];
            let act = net.hidden_activation;
            delta = (0..zin.len())
                .map(|i| {
                    let back: f64 = delta.iter().enumerate().map(|(k, &dk)| dk * w.get(k, i)).sum();
                    act.derivative(trace.a[l - 1][i]) * back
                })
                .collect();
        }
    }
    Ok(grads)
}

/// `(−log softmax(logits)[label], softmax − onehot)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 || label >= logits.len() {
        return Err(EdlaError::InvalidArgument(format!(
            "label {label} with {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// `((y - t)², 2(y - t))`.
pub fn squared_error(y: f64, t: f64) -> (f64, f64) {
    let r = y - t;
    (r * r, 2.0 * r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWState {
    /// Fresh state shaped like `params` with `β1 = 0.9`, `β2 = 0.999`,
    /// `ε = 1e-8` and no weight decay.
    pub fn new(params: &[Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

pub fn adamw_step(params: &mut [Matrix], grads: &[Matrix], state: &mut AdamWState, lr: f64) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.m.len()
        || params
            .iter()
            .zip(grads)
            .zip(&state.m)
            .any(|((p, g), m)| p.shape() != g.shape() || p.shape() != m.shape())
    {
        return Err(EdlaError::Shape("parameter, gradient and state shapes differ".into()));
    }
    if !(lr > 0.0) {
        return Err(EdlaError::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = if c1 > 0.0 { *m / c1 } else { *m };
            let v_hat = if c2 > 0.0 { *v / c2 } else { *v };
            *p -= lr * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * *p);
        }
    }
    Ok(())
}

/// Targets for [`mlp_fit`].
#[derive(Debug, Clone, Copy)]
pub enum MlpTargets<'a> {
    Regression(&'a [f64]),
    Classes(&'a [usize]),
}

impl MlpTargets<'_> {
    fn len(&self) -> usize {
        match self {
            MlpTargets::Regression(t) => t.len(),
            MlpTargets::Classes(t) => t.len(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpSamples<'a> {
    pub x: &'a Matrix,
    pub targets: MlpTargets<'a>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpFitOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
}

/// Loss and output gradient for one sample.
fn sample_loss(loss: LossKind, out: &[f64], targets: MlpTargets<'_>, i: usize) -> Result<(f64, Vec<f64>)> {
    match (loss, targets) {
        (LossKind::Mse, MlpTargets::Regression(t)) => {
            let (l, g) = squared_error(out[0], t[i]);
            Ok((l, vec![g]))
        }
        (LossKind::CrossEntropy, MlpTargets::Classes(c)) => softmax_cross_entropy(out, c[i]),
        _ => Err(EdlaError::InvalidArgument(
            "MSE needs real targets and cross-entropy needs class labels".into(),
        )),
    }
}

/// Mean loss over `data`.
pub fn mlp_loss(net: &MlpNetwork, data: MlpSamples<'_>, loss: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.x.rows() {
        let tr = mlp_forward(net, data.x.row(i))?;
        total += sample_loss(loss, tr.output(), data.targets, i)?.0;
    }
    Ok(total / data.x.rows() as f64)
}

/// Accuracy (classes) or MAE (regression) of `net` on `data`.
pub fn mlp_metric(net: &MlpNetwork, data: MlpSamples<'_>) -> Result<f64> {
    let outs: Vec<Vec<f64>> = (0..data.x.rows())
        .map(|i| mlp_forward(net, data.x.row(i)).map(|t| t.output().to_vec()))
        .collect::<Result<_>>()?;
    if outs.iter().flatten().any(|v| !v.is_finite()) {
        return Ok(f64::NAN);
    }
    match data.targets {
        MlpTargets::Regression(t) => {
            let y: Vec<f64> = outs.iter().map(|o| o[0]).collect();
            diagnostics::metric_mae(&y, t)
        }
        MlpTargets::Classes(c) => {
            let p: Vec<usize> = outs.iter().map(|o| argmax(o)).collect();
            diagnostics::metric_accuracy(&p, c)
        }
    }
}

/// Mini-batch AdamW training with the mean gradient per batch. Divergence
/// (non-finite loss or weights) is recorded and stops training.
pub fn mlp_fit(
    net: &mut MlpNetwork,
    train: MlpSamples<'_>,
    test: Option<MlpSamples<'_>>,
    opts: &MlpFitOptions,
    rng: &mut RngState,
) -> Result<Vec<RunRecord>> {
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(EdlaError::InvalidArgument("epochs and batch_size must be at least 1".into()));
    }
    let n = train.x.rows();
    if n == 0 || n != train.targets.len() || train.x.cols() != net.n_in() {
        return Err(EdlaError::Shape("training data does not match the network".into()));
    }
    let mut state = AdamWState::new(&net.layers);
    let mut records = Vec::with_capacity(opts.epochs);
    let n_layers = net.layers.len();
    let hidden_units: usize = net.hidden_sizes().iter().sum();

    for epoch in 1..=opts.epochs {
        let order = rng.permutation(n);
        let mut per_layer_max = vec![0.0f64; n_layers + 1];
        let (mut act_max, mut act_sum, mut act_count) = (0.0f64, 0.0, 0usize);
        let mut silent = vec![0usize; hidden_units];
        let (mut upd_max, mut upd_mean_sum, mut n_batches) = (0.0f64, 0.0, 0usize);
        let mut diverged = false;

        'batches: for idx in order.chunks(opts.batch_size) {
            let mut acc: Vec<Matrix> = net
                .layers
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect();
            for &i in idx {
                let tr = mlp_forward(net, train.x.row(i))?;
                for &v in &tr.z[0] {
                    per_layer_max[0] = per_layer_max[0].max(v);
                }
                let mut unit = 0;
                for (l, z) in tr.z.iter().enumerate().skip(1) {
                    for &v in z {
                        per_layer_max[l] = per_layer_max[l].max(v);
                        act_max = act_max.max(v);
                        act_sum += v;
                        act_count += 1;
                        if l < n_layers {
                            if v < DEAD_THRESHOLD {
                                silent[unit] += 1;
                            }
                            unit += 1;
                        }
                    }
                }
                let (loss, g) = sample_loss(opts.loss, tr.output(), train.targets, i)?;
                if !loss.is_finite() {
                    diverged = true;
                    break 'batches;
                }
                for (a, g) in acc.iter_mut().zip(mlp_backward(net, &tr, &g)?) {
                    a.add_scaled(1.0, &g)?;
                }
            }
            let inv = 1.0 / idx.len() as f64;
            acc.iter_mut().for_each(|a| a.scale(inv));
            let before = net.layers.clone();
            adamw_step(&mut net.layers, &acc, &mut state, opts.lr)?;
            let (mut m, mut s, mut c) = (0.0f64, 0.0, 0usize);
            for (w, b) in net.layers.iter().zip(&before) {
                for (x, y) in w.iter().zip(b.iter()) {
                    let d = (x - y).abs();
                    m = m.max(d);
                    s += d;
                    c += 1;
                }
            }
            if !(m.is_finite() && s.is_finite()) {
                net.layers = before;
                diverged = true;
                break;
            }
            upd_max = upd_max.max(m);
            upd_mean_sum += s / c as f64;
            n_batches += 1;
        }

        let train_metric = mlp_metric(net, train)?;
        let test_metric = test.map(|t| mlp_metric(net, t)).transpose()?;
        let samples = n.min(order.len());
        let dead = if hidden_units == 0 {
            0.0
        } else {
            let dead = silent
                .iter()
                .filter(|&&c| c as f64 > DEAD_SAMPLE_FRACTION * samples as f64)
                .count();
            dead as f64 / hidden_units as f64
        };
        records.push(RunRecord {
            epoch,
            train_metric,
            test_metric,
            max_activation: act_max,
            mean_activation: if act_count == 0 { 0.0 } else { act_sum / act_count as f64 },
            per_layer_max_activation: per_layer_max,
            max_abs_update: if diverged { f64::NAN } else { upd_max },
            mean_abs_update: if diverged || n_batches == 0 {
                f64::NAN
            } else {
                upd_mean_sum / n_batches as f64
            },
            dead_unit_fraction: dead,
            diverged,
        });
        if diverged {
            break;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_output() {
        let layers = vec![Matrix::zeros(3, 3), Matrix::zeros(1, 4)];
        let net = MlpNetwork::from_layers(layers, ActivationKind::Sigmoid).unwrap();
        let tr = mlp_forward(&net, &[0.3, -2.0]).unwrap();
        assert_eq!(tr.z[1], vec![0.5; 3]);
        assert_eq!(tr.output(), &[0.0]);
    }

    #[test]
    fn single_linear_layer() {
        let net = MlpNetwork::from_layers(
            vec![Matrix::from_vec(1, 2, vec![2.0, 1.0]).unwrap()],
            ActivationKind::Sigmoid,
        )
        .unwrap();
        assert_eq!(mlp_forward(&net, &[3.0]).unwrap().output(), &[7.0]);

        let net = MlpNetwork::from_layers(
            vec![Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap()],
            ActivationKind::Sigmoid,
        )
        .unwrap();
        let tr = mlp_forward(&net, &[3.0]).unwrap();
        // E = ½(y − t)², t = 0, so ∂E/∂y = y.
        let g = mlp_backward(&net, &tr, &[tr.output()[0]]).unwrap();
        assert_eq!(g[0].get(0, 0), 9.0);
        assert_eq!(g[0].get(0, 1), 3.0);
        let zero = mlp_backward(&net, &tr, &[0.0]).unwrap();
        assert!(zero[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, g) = softmax_cross_entropy(&[0.0; 10], 4).unwrap();
        assert!((l - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);

        let (l, g) = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!((l - 0.40760596444438046).abs() < 1e-12);
        let expect = [0.09003057317038046, 0.24472847105479764, -0.3347590442251782];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }

        let (l, _) = softmax_cross_entropy(&[1000.0, 0.0, -1000.0], 0).unwrap();
        assert!(l >= 0.0 && l < 1e-300);
        assert!(softmax_cross_entropy(&[1.0], 0).is_err());
        assert!(softmax_cross_entropy(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn adamw_examples() {
        let mut p = vec![Matrix::zeros(1, 1)];
        let mut s = AdamWState::new(&p);
        adamw_step(&mut p, &[Matrix::zeros(1, 1)], &mut s, 0.1).unwrap();
        assert_eq!(p[0].get(0, 0), 0.0);
        assert_eq!(s.t, 1);

        let mut p = vec![Matrix::zeros(1, 1)];
        let mut s = AdamWState::new(&p);
        let g = [Matrix::from_vec(1, 1, vec![1.0]).unwrap()];
        adamw_step(&mut p, &g, &mut s, 0.1).unwrap();
        let d1 = p[0].get(0, 0);
        assert!((d1 - -0.09999999900000002).abs() < 1e-15);
        adamw_step(&mut p, &g, &mut s, 0.1).unwrap();
        let d2 = p[0].get(0, 0) - d1;
        assert!((d2 - -0.09999999899999931).abs() < 1e-15);
        assert!(d2.abs() <= d1.abs() * (1.0 + 1e-12));
        assert!(adamw_step(&mut p, &g, &mut s, 0.0).is_err());
    }

    #[test]
    fn adamw_without_momentum_is_sign_sgd() {
        let mut p = vec![Matrix::zeros(1, 3)];
        let mut s = AdamWState::new(&p);
        s.beta1 = 0.0;
        s.beta2 = 0.0;
        let g = [Matrix::from_vec(1, 3, vec![2.0, -0.5, 1e-3]).unwrap()];
        adamw_step(&mut p, &g, &mut s, 0.1).unwrap();
        for (p, &g) in p[0].iter().zip(g[0].as_slice()) {
            assert!((p - -0.1 * g / (g.abs() + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn init_bounds_and_counts() {
        let net = MlpNetwork::init(4, &[9], 2, ActivationKind::Relu, &mut RngState::new(1)).unwrap();
        assert_eq!(net.n_params(), 9 * 5 + 2 * 10);
        assert!(net.layers()[0].iter().all(|v| v.abs() <= 0.5));
        assert!(net.layers()[1].iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert!(MlpNetwork::init(0, &[1], 1, ActivationKind::Relu, &mut RngState::new(1)).is_err());
    }

    #[test]
    fn fit_reduces_loss_on_toy_set() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]])
            .unwrap();
        let t = [0.0, 1.0, 1.0, 2.0];
        let mut rng = RngState::new(4);
        let mut net = MlpNetwork::init(2, &[4], 1, ActivationKind::Sigmoid, &mut rng).unwrap();
        let data = MlpSamples {
            x: &x,
            targets: MlpTargets::Regression(&t),
        };
        let before = mlp_loss(&net, data, LossKind::Mse).unwrap();
        let opts = MlpFitOptions {
            lr: 1e-3,
            epochs: 1,
            batch_size: 4,
            loss: LossKind::Mse,
        };
        let recs = mlp_fit(&mut net, data, None, &opts, &mut rng).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(mlp_loss(&net, data, LossKind::Mse).unwrap() < before);
    }

    #[test]
    fn mismatched_loss_and_targets_are_rejected() {
        let x = Matrix::zeros(2, 2);
        let mut rng = RngState::new(0);
        let mut net = MlpNetwork::init(2, &[2], 1, ActivationKind::Sigmoid, &mut rng).unwrap();
        let opts = MlpFitOptions {
            lr: 1e-3,
            epochs: 1,
            batch_size: 1,
            loss: LossKind::CrossEntropy,
        };
        let data = MlpSamples {
            x: &x,
            targets: MlpTargets::Regression(&[0.0, 1.0]),
        };
        assert!(mlp_fit(&mut net, data, None, &opts, &mut rng).is_err());
    }
}
