//! Single-output EDLA network.
//!
//! Every layer holds a positive and a negative sublayer. Each postsynaptic
//! sublayer receives four weight blocks, named by (postsynaptic type,
//! presynaptic type) as in `w^{pp}`, `w^{pn}`, `w^{np}`, `w^{nn}`:
//!
//! ```text
//! a_p = W_pp · [z_p; 1] + W_pn · [z_n; 1]
//! a_n = W_np · [z_p; 1] + W_nn · [z_n; 1]
//! ```
//!
//! Same-type blocks (`pp`, `nn`) are excitatory and stay `>= 0`; cross-type
//! blocks (`pn`, `np`) are inhibitory and stay `<= 0`. The trailing column
//! of every block is the weight from a constant-1 bias unit appended to the
//! presynaptic sublayer. At the input both sublayers carry `x`.
//!
//! The last layer is a full layer with one positive and one negative unit;
//! the network output `y` is the positive unit.
//!
//! Training broadcasts the scalar error `d = t - y`. When `d > 0` only the
//! blocks fed by positive units (`pp`, `np`) move, when `d < 0` only those fed
//! by negative units (`nn`, `pn`), always in the direction that grows the
//! weight's magnitude along its type sign.

use crate::activation::ActivationKind;
use crate::diagnostics::ActivationStats;
use crate::error::{EdlaError, Result};
use crate::tensor::{Matrix, RngState};

/// Gain of the RMS normalization; fixed, not learned.
pub const RMS_GAIN: f64 = 1.0;

/// One of the four connection types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// positive → positive (excitatory)
    Pp,
    /// negative → positive (inhibitory)
    Pn,
    /// positive → negative (inhibitory)
    Np,
    /// negative → negative (excitatory)
    Nn,
}

impl BlockKind {
    pub const ALL: [BlockKind; 4] = [BlockKind::Pp, BlockKind::Pn, BlockKind::Np, BlockKind::Nn];

    /// `+1` for excitatory blocks, `-1` for inhibitory ones.
    pub fn sign(self) -> f64 {
        match self {
            BlockKind::Pp | BlockKind::Nn => 1.0,
            BlockKind::Pn | BlockKind::Np => -1.0,
        }
    }

    /// Heatmap label: presynaptic type first, then postsynaptic type.
    pub fn label(self) -> &'static str {
        match self {
            BlockKind::Pp => "P-P",
            BlockKind::Pn => "N-P",
            BlockKind::Np => "P-N",
            BlockKind::Nn => "N-N",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            BlockKind::Pp => "pp",
            BlockKind::Pn => "pn",
            BlockKind::Np => "np",
            BlockKind::Nn => "nn",
        }
    }
}

/// Weight blocks of one layer, each `n_post x (n_pre + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdlaLayer {
    pub pp: Matrix,
    pub pn: Matrix,
    pub np: Matrix,
    pub nn: Matrix,
}

impl EdlaLayer {
    pub fn zeros(n_post: usize, n_pre: usize) -> Self {
        let m = Matrix::zeros(n_post, n_pre + 1);
        Self {
            pp: m.clone(),
            pn: m.clone(),
            np: m.clone(),
            nn: m,
        }
    }

    /// Units per postsynaptic sublayer.
    pub fn n_post(&self) -> usize {
        self.pp.rows()
    }

    /// Units per presynaptic sublayer, excluding the bias unit.
    pub fn n_pre(&self) -> usize {
        self.pp.cols() - 1
    }

    pub fn block(&self, kind: BlockKind) -> &Matrix {
        match kind {
            BlockKind::Pp => &self.pp,
            BlockKind::Pn => &self.pn,
            BlockKind::Np => &self.np,
            BlockKind::Nn => &self.nn,
        }
    }

    pub fn block_mut(&mut self, kind: BlockKind) -> &mut Matrix {
        match kind {
            BlockKind::Pp => &mut self.pp,
            BlockKind::Pn => &mut self.pn,
            BlockKind::Np => &mut self.np,
            BlockKind::Nn => &mut self.nn,
        }
    }

    pub fn n_params(&self) -> usize {
        4 * self.pp.rows() * self.pp.cols()
    }

    fn same_shape(&self, other: &EdlaLayer) -> bool {
        BlockKind::ALL
            .iter()
            .all(|&k| self.block(k).shape() == other.block(k).shape())
    }

    /// Pre-activations `[a_p; a_n]` for presynaptic outputs `zp`, `zn`.
    fn preactivate(&self, zp: &[f64], zn: &[f64], a: &mut [f64]) {
        let n = self.n_post();
        let m = self.n_pre();
        let (ap, an) = a.split_at_mut(n);
        for j in 0..n {
            ap[j] = affine(self.pp.row(j), zp, m) + affine(self.pn.row(j), zn, m);
            an[j] = affine(self.np.row(j), zp, m) + affine(self.nn.row(j), zn, m);
        }
    }
}

/// `w[..m]·z + w[m]` (the last weight multiplies the bias unit).
#[inline]
fn affine(w: &[f64], z: &[f64], m: usize) -> f64 {
    crate::tensor::dot(&w[..m], z) + w[m]
}

/// `row[..m] += s·z; row[m] += s`.
#[inline]
fn add_affine(row: &mut [f64], s: f64, z: &[f64]) {
    let m = z.len();
    for (w, &zi) in row[..m].iter_mut().zip(z) {
        *w += s * zi;
    }
    row[m] += s;
}

/// Shape and activation choices for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct EdlaSpec {
    pub n_in: usize,
    /// Units per sublayer for each hidden layer.
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
    pub rms_enabled: bool,
    /// Half-width `IS` of the uniform initialization interval.
    pub init_scale: f64,
}

impl EdlaSpec {
    pub fn new(n_in: usize, hidden_sizes: Vec<usize>) -> Self {
        Self {
            n_in,
            hidden_sizes,
            hidden_activation: ActivationKind::Sigmoid,
            output_activation: ActivationKind::Sigmoid,
            rms_enabled: false,
            init_scale: 1.0,
        }
    }

    pub fn activations(mut self, hidden: ActivationKind, output: ActivationKind) -> Self {
        self.hidden_activation = hidden;
        self.output_activation = output;
        self
    }

    pub fn rms(mut self, enabled: bool) -> Self {
        self.rms_enabled = enabled;
        self
    }

    pub fn init_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_in == 0 {
            return Err(EdlaError::InvalidArgument("n_in must be at least 1".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(EdlaError::InvalidArgument(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(EdlaError::InvalidArgument(
                "hidden layer widths must be at least 1".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(EdlaError::InvalidArgument(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdlaNetwork {
    n_in: usize,
    hidden_sizes: Vec<usize>,
    /// `L` hidden layers followed by the output layer.
    layers: Vec<EdlaLayer>,
    hidden_activation: ActivationKind,
    output_activation: ActivationKind,
    rms_enabled: bool,
    gamma: f64,
    init_scale: f64,
}

impl EdlaNetwork {
    /// Sample a sign-consistent network.
    ///
    /// Excitatory blocks draw from `U[0, IS)`, inhibitory ones from
    /// `U[-IS, 0]`. Draw order: layers first to last, blocks `pp, pn, np, nn`,
    /// row-major within a block (bias column included).
    pub fn init(spec: &EdlaSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.hidden_sizes.len() + 1);
        let mut n_pre = spec.n_in;
        for &n_post in spec.hidden_sizes.iter().chain(std::iter::once(&1)) {
            let mut layer = EdlaLayer::zeros(n_post, n_pre);
            for kind in BlockKind::ALL {
                let sign = kind.sign();
                for w in layer.block_mut(kind).as_mut_slice() {
                    *w = sign * spec.init_scale * rng.next_f64();
                }
            }
            layers.push(layer);
            n_pre = n_post;
        }
        Ok(Self::from_parts(spec, layers))
    }

    pub(crate) fn from_parts(spec: &EdlaSpec, layers: Vec<EdlaLayer>) -> Self {
        Self {
            n_in: spec.n_in,
            hidden_sizes: spec.hidden_sizes.clone(),
            layers,
            hidden_activation: spec.hidden_activation,
            output_activation: spec.output_activation,
            rms_enabled: spec.rms_enabled,
            gamma: RMS_GAIN,
            init_scale: spec.init_scale,
        }
    }

    /// Build a network from explicit layers, checking shapes and signs.
    pub fn from_layers(spec: &EdlaSpec, layers: Vec<EdlaLayer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.hidden_sizes.len() + 1 {
            return Err(EdlaError::Shape(format!(
                "{} layers given for {} hidden layers",
                layers.len(),
                spec.hidden_sizes.len()
            )));
        }
        let mut n_pre = spec.n_in;
        for (l, (layer, &n_post)) in layers
            .iter()
            .zip(spec.hidden_sizes.iter().chain(std::iter::once(&1)))
            .enumerate()
        {
            for kind in BlockKind::ALL {
                if layer.block(kind).shape() != (n_post, n_pre + 1) {
                    return Err(EdlaError::Shape(format!(
                        "layer {} block {} is {:?}, expected {:?}",
                        l + 1,
                        kind.short(),
                        layer.block(kind).shape(),
                        (n_post, n_pre + 1)
                    )));
                }
            }
            n_pre = n_post;
        }
        let net = Self::from_parts(spec, layers);
        if !net.signs_hold() {
            return Err(EdlaError::InvalidArgument(
                "weights violate the excitatory/inhibitory sign constraints".into(),
            ));
        }
        Ok(net)
    }

    pub fn spec(&self) -> EdlaSpec {
        EdlaSpec {
            n_in: self.n_in,
            hidden_sizes: self.hidden_sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            rms_enabled: self.rms_enabled,
            init_scale: self.init_scale,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.hidden_sizes.len()
    }

    pub fn layers(&self) -> &[EdlaLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [EdlaLayer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> ActivationKind {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> ActivationKind {
        self.output_activation
    }

    pub fn rms_enabled(&self) -> bool {
        self.rms_enabled
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale
    }

    /// Stored weights including bias columns.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(EdlaLayer::n_params).sum()
    }

    pub fn signs_hold(&self) -> bool {
        self.layers.iter().all(|layer| {
            layer.pp.iter().all(|&w| w >= 0.0)
                && layer.nn.iter().all(|&w| w >= 0.0)
                && layer.pn.iter().all(|&w| w <= 0.0)
                && layer.np.iter().all(|&w| w <= 0.0)
        })
    }

    fn activation_for(&self, l: usize) -> ActivationKind {
        if l + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Forward pass keeping everything the update rule needs.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.n_in {
            return Err(EdlaError::Shape(format!(
                "input of length {} for a network with {} inputs",
                x.len(),
                self.n_in
            )));
        }
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let mut finite = x.iter().all(|v| v.is_finite());
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.n_post();
            let mut a = vec![0.0; 2 * n];
            {
                let (zp, zn) = match layers.last() {
                    Some(prev) => prev.z.split_at(prev.z.len() / 2),
                    None => (x, x),
                };
                layer.preactivate(zp, zn, &mut a);
            }
            let normalize = self.rms_enabled && l + 1 < self.layers.len();
            let (a_tilde, rho) = if normalize {
                let out = rms_normalize_with_gain(&a, n, self.gamma);
                (out.a_tilde, out.rho)
            } else {
                (a.clone(), vec![1.0; 2 * n])
            };
            let g = self.activation_for(l);
            let z: Vec<f64> = a_tilde.iter().map(|&v| g.apply(v)).collect();
            let phi: Vec<f64> = a_tilde
                .iter()
                .zip(&rho)
                .map(|(&v, &r)| g.derivative(v) * r)
                .collect();
            finite &= z.iter().chain(&a).chain(&phi).all(|v| v.is_finite());
            layers.push(LayerTrace {
                a,
                a_tilde,
                rho,
                z,
                phi,
            });
        }
        let y = layers.last().map_or(f64::NAN, |t| t.z[0]);
        Ok(ForwardTrace {
            input: x.to_vec(),
            layers,
            y,
            finite: finite && y.is_finite(),
        })
    }

    /// Network output `y` for `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.y)
    }

    /// Weight deltas for one sample, already scaled by `eta`.
    pub fn compute_update(
        &self,
        trace: &ForwardTrace,
        err: GlobalError,
        eta: f64,
    ) -> Result<Vec<EdlaLayer>> {
        self.check_trace(trace)?;
        let mut deltas: Vec<EdlaLayer> = self
            .layers
            .iter()
            .map(|l| EdlaLayer::zeros(l.n_post(), l.n_pre()))
            .collect();
        accumulate_update(trace, err, eta, &mut deltas);
        Ok(deltas)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let ok = trace.input.len() == self.n_in
            && trace.layers.len() == self.layers.len()
            && trace
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(t, l)| t.z.len() == 2 * l.n_post() && t.phi.len() == 2 * l.n_post());
        if ok {
            Ok(())
        } else {
            Err(EdlaError::Shape(
                "forward trace does not match the network shape".into(),
            ))
        }
    }

    /// Add `deltas` to the weights.
    pub fn apply_update(&mut self, deltas: &[EdlaLayer]) -> Result<()> {
        if deltas.len() != self.layers.len()
            || !deltas.iter().zip(&self.layers).all(|(d, l)| d.same_shape(l))
        {
            return Err(EdlaError::Shape("update does not match network shape".into()));
        }
        for (layer, d) in self.layers.iter_mut().zip(deltas) {
            for kind in BlockKind::ALL {
                layer.block_mut(kind).add_scaled(1.0, d.block(kind))?;
            }
        }
        Ok(())
    }

    /// One mini-batch step over all rows of `xs`.
    ///
    /// Per-sample deltas are summed in row order, divided by the batch size
    /// and applied once. If any activation or delta is non-finite the batch is
    /// abandoned and the weights are left untouched.
    pub fn train_batch(&mut self, xs: &Matrix, ts: &[f64], eta: f64) -> Result<BatchStats> {
        if xs.rows() != ts.len() || ts.is_empty() {
            return Err(EdlaError::Shape(format!(
                "batch of {} inputs and {} targets",
                xs.rows(),
                ts.len()
            )));
        }
        if xs.cols() != self.n_in {
            return Err(EdlaError::Shape(format!(
                "batch inputs have {} features, network expects {}",
                xs.cols(),
                self.n_in
            )));
        }
        let idx: Vec<usize> = (0..xs.rows()).collect();
        let mut stats = ActivationStats::new(self);
        let mut acc = self.zero_deltas();
        Ok(self.train_indices(xs, ts, &idx, eta, &mut acc, &mut stats))
    }

    pub(crate) fn zero_deltas(&self) -> Vec<EdlaLayer> {
        self.layers
            .iter()
            .map(|l| EdlaLayer::zeros(l.n_post(), l.n_pre()))
            .collect()
    }

    /// Mini-batch step over `idx` rows. `acc` is scratch space shaped like
    /// the network; `stats` collects activation statistics of the batch.
    pub(crate) fn train_indices(
        &mut self,
        xs: &Matrix,
        ts: &[f64],
        idx: &[usize],
        eta: f64,
        acc: &mut [EdlaLayer],
        stats: &mut ActivationStats,
    ) -> BatchStats {
        for d in acc.iter_mut() {
            for kind in BlockKind::ALL {
                d.block_mut(kind).fill(0.0);
            }
        }
        let mut abs_err = 0.0;
        for &i in idx {
            let trace = match self.forward(xs.row(i)) {
                Ok(t) => t,
                Err(_) => return BatchStats::diverged(idx.len()),
            };
            if !trace.finite {
                return BatchStats::diverged(idx.len());
            }
            stats.observe(&trace);
            let err = GlobalError::new(ts[i], trace.y);
            abs_err += err.d.abs();
            accumulate_update(&trace, err, eta, acc);
        }
        let inv = 1.0 / idx.len() as f64;
        let mut max_abs = 0.0f64;
        let mut sum_abs = 0.0;
        let mut count = 0usize;
        for d in acc.iter_mut() {
            for kind in BlockKind::ALL {
                let m = d.block_mut(kind);
                m.scale(inv);
                for &v in m.iter() {
                    max_abs = max_abs.max(v.abs());
                    sum_abs += v.abs();
                }
                count += m.as_slice().len();
            }
        }
        if !(max_abs.is_finite() && sum_abs.is_finite()) {
            return BatchStats::diverged(idx.len());
        }
        let mut weights_finite = true;
        for (layer, d) in self.layers.iter_mut().zip(acc.iter()) {
            for kind in BlockKind::ALL {
                let w = layer.block_mut(kind).as_mut_slice();
                for (w, &dw) in w.iter_mut().zip(d.block(kind).as_slice()) {
                    *w += dw;
                    weights_finite &= w.is_finite();
                }
            }
        }
        BatchStats {
            n_samples: idx.len(),
            mean_abs_error: abs_err * inv,
            max_abs_update: max_abs,
            mean_abs_update: sum_abs / count as f64,
            diverged: !weights_finite,
        }
    }
}

/// Add one sample's `eta`-scaled deltas into `acc`.
///
/// `d > 0` feeds `pp` (+) and `np` (−) from the positive presynaptic units;
/// `d < 0` feeds `nn` (+) and `pn` (−) from the negative ones. The gate is the
/// connection type rather than `sign(w)`, so weights sitting exactly at zero
/// still learn.
pub(crate) fn accumulate_update(
    trace: &ForwardTrace,
    err: GlobalError,
    eta: f64,
    acc: &mut [EdlaLayer],
) {
    let (gate, positive_side) = if err.d_plus > 0.0 {
        (err.d_plus, true)
    } else if err.d_minus > 0.0 {
        (err.d_minus, false)
    } else {
        return;
    };
    let step = eta * gate;
    for (l, delta) in acc.iter_mut().enumerate() {
        let t = &trace.layers[l];
        let n = delta.n_post();
        let (phi_p, phi_n) = t.phi.split_at(n);
        let (zp, zn) = trace.presynaptic(l);
        if positive_side {
            for j in 0..n {
                add_affine(delta.pp.row_mut(j), step * phi_p[j], zp);
                add_affine(delta.np.row_mut(j), -step * phi_n[j], zp);
            }
        } else {
            for j in 0..n {
                add_affine(delta.nn.row_mut(j), step * phi_n[j], zn);
                add_affine(delta.pn.row_mut(j), -step * phi_p[j], zn);
            }
        }
    }
}

/// Per-layer quantities of one forward pass, each over `[positive; negative]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub a: Vec<f64>,
    pub a_tilde: Vec<f64>,
    /// Diagonal of `∂ã/∂a`.
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    /// `g'(ã) ⊙ ρ`.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    pub y: f64,
    /// False if any pre-activation, activation or gain came out non-finite.
    pub finite: bool,
}

impl ForwardTrace {
    /// Presynaptic `(positive, negative)` outputs feeding layer `l` (0-based),
    /// without the bias unit.
    pub fn presynaptic(&self, l: usize) -> (&[f64], &[f64]) {
        if l == 0 {
            (&self.input, &self.input)
        } else {
            let z = &self.layers[l - 1].z;
            z.split_at(z.len() / 2)
        }
    }
}

/// Scalar error broadcast to every layer, split into its gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalError {
    pub d: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

impl GlobalError {
    /// `d = t - y`, the negative derivative of `½(y - t)²` w.r.t. `y`.
    pub fn new(target: f64, output: f64) -> Self {
        let d = target - output;
        Self {
            d,
            d_plus: d.max(0.0),
            d_minus: (-d).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub n_samples: usize,
    /// Mean `|t - y|` over the batch, measured before the update.
    pub mean_abs_error: f64,
    pub max_abs_update: f64,
    /// Mean `|Δw|` over every stored weight.
    pub mean_abs_update: f64,
    pub diverged: bool,
}

impl BatchStats {
    fn diverged(n_samples: usize) -> Self {
        Self {
            n_samples,
            mean_abs_error: f64::NAN,
            max_abs_update: f64::NAN,
            mean_abs_update: f64::NAN,
            diverged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsOutput {
    pub rms: f64,
    pub a_tilde: Vec<f64>,
    pub rho: Vec<f64>,
}

/// RMS-normalize a full layer of `2·n_hid` pre-activations.
///
/// `RMS = sqrt(Σa²/(2·n_hid))`, `ã = γ·a/RMS` and
/// `ρ_j = (γ/RMS)·(1 − a_j²/(2·n_hid·RMS²))`. An all-zero layer is passed
/// through unchanged with `ρ = 1`.
pub fn rms_normalize(a: &[f64], n_hid: usize) -> Result<RmsOutput> {
    if n_hid == 0 || a.len() != 2 * n_hid {
        return Err(EdlaError::Shape(format!(
            "rms_normalize: {} pre-activations for n_hid = {n_hid}",
            a.len()
        )));
    }
    Ok(rms_normalize_with_gain(a, n_hid, RMS_GAIN))
}

fn rms_normalize_with_gain(a: &[f64], n_hid: usize, gamma: f64) -> RmsOutput {
    let width = (2 * n_hid) as f64;
    let sum_sq: f64 = a.iter().map(|v| v * v).sum();
    let rms = (sum_sq / width).sqrt();
    if rms == 0.0 {
        return RmsOutput {
            rms,
            a_tilde: a.to_vec(),
            rho: vec![1.0; a.len()],
        };
    }
    let inv = 1.0 / rms;
    let a_tilde = a.iter().map(|&v| v * inv * gamma).collect();
    let rho = a
        .iter()
        // Clamped because rounding can push 1 - a²/Σa² just below zero.
        .map(|&v| gamma * inv * (1.0 - v * v / (width * rms * rms)).max(0.0))
        .collect();
    RmsOutput { rms, a_tilde, rho }
}
