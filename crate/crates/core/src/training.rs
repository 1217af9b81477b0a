//! Epoch loop for a single EDLA network.

use crate::diagnostics::{self, ActivationStats, RunRecord};
use crate::error::{EdlaError, Result};
use crate::network::EdlaNetwork;
use crate::tensor::{Matrix, RngState};

/// How a single-output network is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Mean absolute error of the raw output.
    Mae,
    /// Binary accuracy: predict 1 when `y > threshold` (so `y == threshold`
    /// predicts 0), compared with `t > 0.5`.
    Accuracy { threshold: f64 },
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Accuracy { .. } => "accuracy",
        }
    }

    /// Score raw outputs. Any non-finite output makes the score `NaN`.
    pub fn score(self, outputs: &[f64], targets: &[f64]) -> Result<f64> {
        if outputs.iter().any(|y| !y.is_finite()) {
            return Ok(f64::NAN);
        }
        match self {
            Metric::Mae => diagnostics::metric_mae(outputs, targets),
            Metric::Accuracy { threshold } => {
                let p: Vec<usize> = outputs.iter().map(|&y| usize::from(y > threshold)).collect();
                let l: Vec<usize> = targets.iter().map(|&t| usize::from(t > 0.5)).collect();
                diagnostics::metric_accuracy(&p, &l)
            }
        }
    }

    /// Whether larger scores are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub metric: Metric,
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(EdlaError::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EdlaError::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(EdlaError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Inputs and real-valued targets.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub x: &'a Matrix,
    pub t: &'a [f64],
}

impl<'a> Samples<'a> {
    pub fn new(x: &'a Matrix, t: &'a [f64]) -> Result<Self> {
        if x.rows() != t.len() || t.is_empty() {
            return Err(EdlaError::Shape(format!(
                "{} inputs and {} targets",
                x.rows(),
                t.len()
            )));
        }
        Ok(Self { x, t })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Training-side dynamics of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub activations: ActivationStats,
    pub max_abs_update: f64,
    /// Mean over batches of the per-batch mean `|Δw|`.
    pub mean_abs_update: f64,
    pub n_batches: usize,
    pub diverged: bool,
}

/// One pass over `data` in a Fisher–Yates order drawn from `rng`, stepping
/// once per mini-batch. Stops at the first diverged batch.
pub fn train_epoch(
    net: &mut EdlaNetwork,
    data: Samples<'_>,
    eta: f64,
    batch_size: usize,
    rng: &mut RngState,
) -> Result<EpochReport> {
    if batch_size == 0 {
        return Err(EdlaError::InvalidArgument("batch_size must be at least 1".into()));
    }
    if data.x.cols() != net.n_in() {
        return Err(EdlaError::Shape(format!(
            "inputs have {} features, network expects {}",
            data.x.cols(),
            net.n_in()
        )));
    }
    let order = rng.permutation(data.len());
    let mut stats = ActivationStats::new(net);
    let mut acc = net.zero_deltas();
    let mut max_abs = 0.0f64;
    let mut sum_mean = 0.0;
    let mut n_batches = 0;
    for idx in order.chunks(batch_size) {
        let b = net.train_indices(data.x, data.t, idx, eta, &mut acc, &mut stats);
        n_batches += 1;
        if b.diverged {
            return Ok(EpochReport {
                activations: stats,
                max_abs_update: f64::NAN,
                mean_abs_update: f64::NAN,
                n_batches,
                diverged: true,
            });
        }
        max_abs = max_abs.max(b.max_abs_update);
        sum_mean += b.mean_abs_update;
    }
    Ok(EpochReport {
        activations: stats,
        max_abs_update: max_abs,
        mean_abs_update: sum_mean / n_batches as f64,
        n_batches,
        diverged: false,
    })
}

/// Raw outputs on every row; non-finite outputs are kept as `NaN`.
pub fn predict_all(net: &EdlaNetwork, x: &Matrix) -> Result<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            let t = net.forward(x.row(i))?;
            Ok(if t.finite { t.y } else { f64::NAN })
        })
        .collect()
}

/// Train for `opts.epochs` epochs, scoring on `train` (and `test` when given)
/// after each epoch. A diverged epoch is recorded with `diverged` set and
/// ends training; the weights keep their last finite values.
pub fn fit(
    net: &mut EdlaNetwork,
    train: Samples<'_>,
    test: Option<Samples<'_>>,
    opts: &FitOptions,
    rng: &mut RngState,
) -> Result<Vec<RunRecord>> {
    opts.validate()?;
    if let Some(t) = test {
        if t.x.cols() != net.n_in() {
            return Err(EdlaError::Shape("test inputs do not match the network".into()));
        }
    }
    let mut records = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let report = train_epoch(net, train, opts.eta, opts.batch_size, rng)?;
        let train_metric = opts.metric.score(&predict_all(net, train.x)?, train.t)?;
        let test_metric = match test {
            Some(t) => Some(opts.metric.score(&predict_all(net, t.x)?, t.t)?),
            None => None,
        };
        let diverged = report.diverged;
        records.push(record(epoch, train_metric, test_metric, &report));
        if diverged {
            break;
        }
    }
    Ok(records)
}

pub(crate) fn record(
    epoch: usize,
    train_metric: f64,
    test_metric: Option<f64>,
    report: &EpochReport,
) -> RunRecord {
    let s = report.activations.summary();
    RunRecord {
        epoch,
        train_metric,
        test_metric,
        max_activation: s.max,
        mean_activation: s.mean,
        per_layer_max_activation: s.per_layer_max,
        max_abs_update: report.max_abs_update,
        mean_abs_update: report.mean_abs_update,
        dead_unit_fraction: report.activations.dead_unit_fraction(),
        diverged: report.diverged,
    }
}

/// Parity decision: odd when `y > 0.5`.
pub fn parity_decision(y: f64) -> bool {
    y > 0.5
}
