//! Performance metrics, internal-dynamics statistics, parameter counts and
//! weight exports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{EdlaError, Result};
use crate::network::{BlockKind, EdlaNetwork, ForwardTrace};
use crate::tensor::Matrix;

/// Activation below which a hidden unit counts as silent for a sample.
pub const DEAD_THRESHOLD: f64 = 0.01;
/// A unit is dead when it is silent on more than this fraction of samples.
pub const DEAD_SAMPLE_FRACTION: f64 = 0.95;
/// Offset added before taking log10 of per-layer maxima for display.
pub const LOG_EPS: f64 = 1e-12;

/// Fraction of units whose activation is below `threshold` on more than
/// `sample_fraction` of the samples.
///
/// `activations[s][u]` is the post-activation of unit `u` on sample `s`.
pub fn dead_unit_fraction(
    activations: &[Vec<f64>],
    threshold: f64,
    sample_fraction: f64,
) -> Result<f64> {
    let n_units = activations.first().map_or(0, Vec::len);
    if activations.is_empty() || n_units == 0 {
        return Err(EdlaError::InvalidArgument(
            "dead_unit_fraction needs at least one sample and one unit".into(),
        ));
    }
    let mut silent = vec![0usize; n_units];
    for row in activations {
        if row.len() != n_units {
            return Err(EdlaError::Shape("ragged activation table".into()));
        }
        for (c, &a) in silent.iter_mut().zip(row) {
            if a < threshold {
                *c += 1;
            }
        }
    }
    Ok(fraction_dead(&silent, activations.len(), sample_fraction))
}

fn fraction_dead(silent: &[usize], n_samples: usize, sample_fraction: f64) -> f64 {
    if silent.is_empty() || n_samples == 0 {
        return 0.0;
    }
    let dead = silent
        .iter()
        .filter(|&&c| c as f64 > sample_fraction * n_samples as f64)
        .count();
    dead as f64 / silent.len() as f64
}

/// Maximum and mean post-activation over hidden and output layers, plus the
/// per-layer maxima indexed `0` = input, `1..=L` = hidden, `L+1` = output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSummary {
    pub max: f64,
    pub mean: f64,
    pub per_layer_max: Vec<f64>,
}

/// Summarize a set of traces. An empty set yields zeros sized for `depth`
/// hidden layers.
pub fn activation_stats(traces: &[ForwardTrace], depth: usize) -> ActivationSummary {
    let mut per_layer_max = vec![0.0f64; depth + 2];
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in traces {
        for &x in &t.input {
            per_layer_max[0] = per_layer_max[0].max(x);
        }
        for (l, lt) in t.layers.iter().enumerate() {
            for &z in &lt.z {
                per_layer_max[l + 1] = per_layer_max[l + 1].max(z);
                max = max.max(z);
                sum += z;
                count += 1;
            }
        }
    }
    ActivationSummary {
        max,
        mean: if count == 0 { 0.0 } else { sum / count as f64 },
        per_layer_max,
    }
}

/// Streaming counterpart of [`activation_stats`] and [`dead_unit_fraction`]
/// (over hidden units), fed one trace at a time during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStats {
    per_layer_max: Vec<f64>,
    max: f64,
    sum: f64,
    count: usize,
    silent: Vec<usize>,
    n_samples: usize,
}

impl ActivationStats {
    pub fn new(net: &EdlaNetwork) -> Self {
        let hidden_units: usize = net.hidden_sizes().iter().map(|n| 2 * n).sum();
        Self {
            per_layer_max: vec![0.0; net.depth() + 2],
            max: 0.0,
            sum: 0.0,
            count: 0,
            silent: vec![0; hidden_units],
            n_samples: 0,
        }
    }

    pub fn observe(&mut self, trace: &ForwardTrace) {
        for &x in &trace.input {
            self.per_layer_max[0] = self.per_layer_max[0].max(x);
        }
        let depth = trace.layers.len() - 1;
        let mut unit = 0;
        for (l, lt) in trace.layers.iter().enumerate() {
            for &z in &lt.z {
                self.per_layer_max[l + 1] = self.per_layer_max[l + 1].max(z);
                self.max = self.max.max(z);
                self.sum += z;
                self.count += 1;
                if l < depth {
                    if z < DEAD_THRESHOLD {
                        self.silent[unit] += 1;
                    }
                    unit += 1;
                }
            }
        }
        self.n_samples += 1;
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn summary(&self) -> ActivationSummary {
        ActivationSummary {
            max: self.max,
            mean: if self.count == 0 {
                0.0
            } else {
                self.sum / self.count as f64
            },
            per_layer_max: self.per_layer_max.clone(),
        }
    }

    pub fn dead_unit_fraction(&self) -> f64 {
        fraction_dead(&self.silent, self.n_samples, DEAD_SAMPLE_FRACTION)
    }
}

/// One epoch of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    pub max_activation: f64,
    pub mean_activation: f64,
    /// Index 0 = input, then hidden layers, last = output.
    pub per_layer_max_activation: Vec<f64>,
    pub max_abs_update: f64,
    pub mean_abs_update: f64,
    pub dead_unit_fraction: f64,
    pub diverged: bool,
}

impl RunRecord {
    /// CSV header for `n_layers` per-layer maxima (`L + 2`).
    pub fn csv_header(n_layers: usize) -> String {
        let mut h = String::from(
            "epoch,train_metric,test_metric,max_activation,mean_activation,\
             max_abs_update,mean_abs_update,dead_unit_fraction,diverged",
        );
        for l in 0..n_layers {
            let _ = write!(h, ",layer_max_{l}");
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            fmt_f64(self.train_metric),
            self.test_metric.map_or_else(String::new, fmt_f64),
            fmt_f64(self.max_activation),
            fmt_f64(self.mean_activation),
            fmt_f64(self.max_abs_update),
            fmt_f64(self.mean_abs_update),
            fmt_f64(self.dead_unit_fraction),
            u8::from(self.diverged)
        );
        for &m in &self.per_layer_max_activation {
            r.push(',');
            r.push_str(&fmt_f64(m));
        }
        r
    }
}

/// Shortest round-trip representation; `NaN`/`inf` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

/// `log10(x + ε)` as used when plotting per-layer maxima and update sizes.
pub fn log10_eps(x: f64) -> f64 {
    (x + LOG_EPS).log10()
}

pub fn write_run_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let n_layers = records.first().map_or(0, |r| r.per_layer_max_activation.len());
    let mut s = RunRecord::csv_header(n_layers);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| EdlaError::io(path, e))
}

pub fn metric_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn metric_mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(preds.len(), targets.len())?;
    let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / preds.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(EdlaError::Shape(format!(
            "metric over {a} predictions and {b} references"
        )));
    }
    Ok(())
}

/// First 1-based epoch whose metric reaches `theta`.
pub fn epoch_to_threshold(series: &[f64], theta: f64) -> Option<usize> {
    series.iter().position(|&m| m >= theta).map(|i| i + 1)
}

/// Mean reach epoch over the trials that reached the threshold.
pub fn mean_reach_epoch(reached: &[Option<usize>]) -> Option<f64> {
    let hit: Vec<f64> = reached.iter().flatten().map(|&e| e as f64).collect();
    if hit.is_empty() {
        None
    } else {
        Some(hit.iter().sum::<f64>() / hit.len() as f64)
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Bias-free EDLA parameter count for `n_out` parallel networks with `L`
/// hidden layers of `n_hid` units per sublayer:
/// `2·n_out·n_hid·(2·n_in + 2·(L−1)·n_hid + 1)`.
pub fn count_params_edla_formula(n_in: usize, n_hid: usize, depth: usize, n_out: usize) -> usize {
    assert!(depth >= 1, "depth must be at least 1");
    2 * n_out * n_hid * (2 * n_in + 2 * (depth - 1) * n_hid + 1)
}

/// Bias-free MLP parameter count `m·(n_in + (L−1)·m + n_out)`.
pub fn count_params_mlp_formula(n_in: usize, m_hid: usize, depth: usize, n_out: usize) -> usize {
    assert!(depth >= 1, "depth must be at least 1");
    m_hid * (n_in + (depth - 1) * m_hid + n_out)
}

/// Exact stored-weight count of `n_out` parallel EDLA networks, bias
/// columns and both output units included.
pub fn edla_param_count(n_in: usize, hidden_sizes: &[usize], n_out: usize) -> usize {
    let mut n_pre = n_in;
    let mut total = 0;
    for &n_post in hidden_sizes.iter().chain(std::iter::once(&1)) {
        total += 4 * n_post * (n_pre + 1);
        n_pre = n_post;
    }
    total * n_out
}

/// Exact dense-MLP weight count including biases.
pub fn mlp_param_count(n_in: usize, hidden_sizes: &[usize], n_out: usize) -> usize {
    let mut n_pre = n_in;
    let mut total = 0;
    for &n_post in hidden_sizes.iter().chain(std::iter::once(&n_out)) {
        total += n_post * (n_pre + 1);
        n_pre = n_post;
    }
    total
}

/// Anything whose stored weights can be enumerated.
pub trait ParamCount {
    fn param_count(&self) -> usize;
}

impl ParamCount for EdlaNetwork {
    fn param_count(&self) -> usize {
        self.n_params()
    }
}

/// Exact count of stored parameters.
pub fn count_params_exact(model: &impl ParamCount) -> usize {
    model.param_count()
}

/// Compact count as printed in comparison tables: `7.2k`, `503.1k`, `3.96M`.
pub fn format_count(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}k", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

/// Incoming weights of one layer, one grid per postsynaptic unit and block.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub layer: usize,
    pub height: usize,
    pub width: usize,
    /// `(block, grids)`; `grids[j]` is the `height x width` grid for unit `j`.
    pub blocks: Vec<(BlockKind, Vec<Matrix>)>,
}

/// Reshape the weights entering `layer` (0-based) onto the presynaptic
/// geometry. Bias weights are dropped. Without an explicit `shape` the
/// presynaptic width must be a perfect square.
pub fn export_weight_heatmap(
    net: &EdlaNetwork,
    layer: usize,
    shape: Option<(usize, usize)>,
) -> Result<Heatmap> {
    let l = net.layers().get(layer).ok_or_else(|| {
        EdlaError::InvalidArgument(format!(
            "layer {layer} does not exist ({} layers)",
            net.layers().len()
        ))
    })?;
    let n_pre = l.n_pre();
    let (height, width) = match shape {
        Some((h, w)) if h * w == n_pre => (h, w),
        Some((h, w)) => {
            return Err(EdlaError::Shape(format!(
                "{h}x{w} grid cannot hold {n_pre} presynaptic weights"
            )))
        }
        None => {
            let side = (n_pre as f64).sqrt().round() as usize;
            if side * side != n_pre {
                return Err(EdlaError::Shape(format!(
                    "{n_pre} presynaptic units are not a square grid; pass an explicit shape"
                )));
            }
            (side, side)
        }
    };
    let blocks = BlockKind::ALL
        .iter()
        .map(|&k| {
            let m = l.block(k);
            let grids = (0..m.rows())
                .map(|j| {
                    Matrix::from_vec(height, width, m.row(j)[..n_pre].to_vec())
                        .expect("grid size checked above")
                })
                .collect();
            (k, grids)
        })
        .collect();
    Ok(Heatmap {
        layer,
        height,
        width,
        blocks,
    })
}

impl Heatmap {
    /// One file per block, `layer{l}_{block}.csv`, holding
    /// `unit,row,c0,..,c{w-1}` lines.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| EdlaError::io(dir, e))?;
        let mut paths = Vec::new();
        for (kind, grids) in &self.blocks {
            let path = dir.join(format!("layer{}_{}.csv", self.layer, kind.short()));
            let mut s = String::from("unit,row");
            for c in 0..self.width {
                let _ = write!(s, ",c{c}");
            }
            s.push('\n');
            for (j, g) in grids.iter().enumerate() {
                for r in 0..g.rows() {
                    let _ = write!(s, "{j},{r}");
                    for &v in g.row(r) {
                        s.push(',');
                        s.push_str(&fmt_f64(v));
                    }
                    s.push('\n');
                }
            }
            std::fs::write(&path, s).map_err(|e| EdlaError::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Histogram of one weight block over all layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHistogram {
    pub kind: BlockKind,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Per-block weight histograms with `bins` equal-width bins spanning each
/// block's own range.
pub fn weight_histograms(net: &EdlaNetwork, bins: usize) -> Vec<BlockHistogram> {
    let bins = bins.max(1);
    BlockKind::ALL
        .iter()
        .map(|&kind| {
            let values: Vec<f64> = net
                .layers()
                .iter()
                .flat_map(|l| l.block(kind).iter().copied())
                .collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo, lo)
            } else {
                (0.0, 0.0)
            };
            let width = (hi - lo) / bins as f64;
            let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
            let mut counts = vec![0usize; bins];
            for v in values {
                let b = if width > 0.0 {
                    (((v - lo) / width) as usize).min(bins - 1)
                } else {
                    0
                };
                counts[b] += 1;
            }
            BlockHistogram {
                kind,
                edges,
                counts,
            }
        })
        .collect()
}

pub fn write_histograms_csv(path: &Path, hists: &[BlockHistogram]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| EdlaError::io(path, e))?;
    let mut s = String::from("block,bin_lo,bin_hi,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                h.kind.short(),
                fmt_f64(h.edges[i]),
                fmt_f64(h.edges[i + 1]),
                c
            );
        }
    }
    f.write_all(s.as_bytes()).map_err(|e| EdlaError::io(path, e))
}
