//! One-vs-rest classification with independent single-output networks.

use rayon::prelude::*;

use crate::diagnostics::{self, ActivationSummary, ParamCount, RunRecord};
use crate::error::{EdlaError, Result};
use crate::network::{EdlaNetwork, EdlaSpec};
use crate::tensor::{Matrix, RngState};
use crate::training::{self, EpochReport, FitOptions, Metric, Samples};

/// RNG stream used to initialize network `k`.
pub fn init_stream(k: usize) -> u64 {
    2 * k as u64 + 1
}

/// RNG stream used to shuffle the training data of network `k`.
pub fn train_stream(k: usize) -> u64 {
    2 * k as u64 + 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelEdla {
    nets: Vec<EdlaNetwork>,
    class_labels: Vec<usize>,
}

/// Inputs with class-label targets.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSamples<'a> {
    pub x: &'a Matrix,
    pub labels: &'a [usize],
}

impl<'a> LabeledSamples<'a> {
    pub fn new(x: &'a Matrix, labels: &'a [usize]) -> Result<Self> {
        if x.rows() != labels.len() || labels.is_empty() {
            return Err(EdlaError::Shape(format!(
                "{} inputs and {} labels",
                x.rows(),
                labels.len()
            )));
        }
        Ok(Self { x, labels })
    }
}

/// Records from [`ParallelEdla::fit_one_vs_rest`].
#[derive(Debug, Clone, PartialEq)]
pub struct OvrHistory {
    /// `per_class[k]` scores network `k` on its own binary task.
    pub per_class: Vec<Vec<RunRecord>>,
    /// Multi-class accuracy per epoch; dynamics pooled over all networks.
    pub combined: Vec<RunRecord>,
}

impl ParallelEdla {
    /// One network per label, network `k` initialized from stream
    /// [`init_stream`]`(k)` of `seed`.
    pub fn init(spec: &EdlaSpec, class_labels: Vec<usize>, seed: u64) -> Result<Self> {
        if class_labels.is_empty() {
            return Err(EdlaError::InvalidArgument("at least one class is required".into()));
        }
        let mut seen = class_labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != class_labels.len() {
            return Err(EdlaError::InvalidArgument("duplicate class labels".into()));
        }
        let nets = (0..class_labels.len())
            .map(|k| EdlaNetwork::init(spec, &mut RngState::with_stream(seed, init_stream(k))))
            .collect::<Result<_>>()?;
        Ok(Self { nets, class_labels })
    }

    /// Assemble from trained networks, which must share their architecture.
    pub fn from_nets(nets: Vec<EdlaNetwork>, class_labels: Vec<usize>) -> Result<Self> {
        if nets.is_empty() || nets.len() != class_labels.len() {
            return Err(EdlaError::InvalidArgument(format!(
                "{} networks for {} labels",
                nets.len(),
                class_labels.len()
            )));
        }
        let shape = |n: &EdlaNetwork| (n.n_in(), n.hidden_sizes().to_vec());
        if nets.iter().any(|n| shape(n) != shape(&nets[0])) {
            return Err(EdlaError::Shape("networks differ in architecture".into()));
        }
        Ok(Self { nets, class_labels })
    }

    pub fn nets(&self) -> &[EdlaNetwork] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [EdlaNetwork] {
        &mut self.nets
    }

    pub fn class_labels(&self) -> &[usize] {
        &self.class_labels
    }

    pub fn n_classes(&self) -> usize {
        self.nets.len()
    }

    fn class_index(&self, label: usize) -> Result<usize> {
        self.class_labels
            .iter()
            .position(|&c| c == label)
            .ok_or(EdlaError::UnknownLabel(label))
    }

    /// Raw outputs `y_k(x)` for every class.
    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.nets.iter().map(|n| n.predict(x)).collect()
    }

    /// Label of the largest output; ties go to the lowest class index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(self.class_labels[argmax(&self.outputs(x)?)])
    }

    /// `outputs[k][i]` for every row of `x`, non-finite outputs kept as `NaN`.
    pub fn outputs_all(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.nets
            .par_iter()
            .map(|n| training::predict_all(n, x))
            .collect()
    }

    pub fn accuracy(&self, data: LabeledSamples<'_>) -> Result<f64> {
        let outs = self.outputs_all(data.x)?;
        self.accuracy_from_outputs(&outs, data.labels)
    }

    fn accuracy_from_outputs(&self, outs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let preds: Vec<usize> = (0..labels.len())
            .map(|i| {
                let row: Vec<f64> = outs.iter().map(|o| o[i]).collect();
                self.class_labels[argmax(&row)]
            })
            .collect();
        diagnostics::metric_accuracy(&preds, labels)
    }

    /// Train network `k` on targets `t_k = 1` iff the label is class `k`.
    ///
    /// All networks advance one epoch at a time so that a combined accuracy
    /// can be recorded per epoch. Network `k` shuffles with stream
    /// [`train_stream`]`(k)` of `seed`, so results do not depend on thread
    /// scheduling. Training stops after the first epoch in which every
    /// network has diverged; a diverged network is frozen.
    pub fn fit_one_vs_rest(
        &mut self,
        train: LabeledSamples<'_>,
        test: Option<LabeledSamples<'_>>,
        opts: &FitOptions,
        seed: u64,
    ) -> Result<OvrHistory> {
        opts.validate()?;
        let train_idx = self.label_indices(train.labels)?;
        if let Some(t) = test {
            self.label_indices(t.labels)?;
        }
        let targets: Vec<Vec<f64>> = (0..self.n_classes())
            .map(|k| train_idx.iter().map(|&c| f64::from(u8::from(c == k))).collect())
            .collect();
        let test_targets: Option<Vec<Vec<f64>>> = test.map(|t| {
            let labels: Vec<usize> = t
                .labels
                .iter()
                .map(|&l| self.class_index(l).expect("checked above"))
                .collect();
            (0..self.n_classes())
                .map(|k| labels.iter().map(|&c| f64::from(u8::from(c == k))).collect())
                .collect()
        });
        let mut rngs: Vec<RngState> = (0..self.n_classes())
            .map(|k| RngState::with_stream(seed, train_stream(k)))
            .collect();
        let mut alive = vec![true; self.n_classes()];
        let binary = Metric::Accuracy { threshold: 0.5 };
        let mut history = OvrHistory {
            per_class: vec![Vec::new(); self.n_classes()],
            combined: Vec::new(),
        };

        for epoch in 1..=opts.epochs {
            let reports: Vec<Option<EpochReport>> = self
                .nets
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .zip(targets.par_iter())
                .zip(alive.par_iter())
                .map(|(((net, rng), t), &live)| {
                    if !live {
                        return Ok(None);
                    }
                    let data = Samples { x: train.x, t };
                    training::train_epoch(net, data, opts.eta, opts.batch_size, rng).map(Some)
                })
                .collect::<Result<_>>()?;

            let train_out = self.outputs_all(train.x)?;
            let test_out = match test {
                Some(t) => Some(self.outputs_all(t.x)?),
                None => None,
            };
            for (k, report) in reports.iter().enumerate() {
                let Some(report) = report else { continue };
                let tr = binary.score(&train_out[k], &targets[k])?;
                let te = match (&test_out, &test_targets) {
                    (Some(o), Some(t)) => Some(binary.score(&o[k], &t[k])?),
                    _ => None,
                };
                history.per_class[k].push(training::record(epoch, tr, te, report));
                if report.diverged {
                    alive[k] = false;
                }
            }

            let train_acc = self.accuracy_from_outputs(&train_out, train.labels)?;
            let test_acc = match (&test_out, test) {
                (Some(o), Some(t)) => Some(self.accuracy_from_outputs(o, t.labels)?),
                _ => None,
            };
            let live: Vec<&EpochReport> = reports.iter().flatten().collect();
            history.combined.push(combine(epoch, train_acc, test_acc, &live));
            if alive.iter().all(|a| !a) {
                break;
            }
        }
        Ok(history)
    }

    fn label_indices(&self, labels: &[usize]) -> Result<Vec<usize>> {
        labels.iter().map(|&l| self.class_index(l)).collect()
    }
}

/// Pool per-network dynamics: maxima are taken over networks, means and
/// dead-unit fractions are averaged.
fn combine(
    epoch: usize,
    train_metric: f64,
    test_metric: Option<f64>,
    reports: &[&EpochReport],
) -> RunRecord {
    let n = reports.len().max(1) as f64;
    let summaries: Vec<ActivationSummary> = reports.iter().map(|r| r.activations.summary()).collect();
    let layers = summaries.first().map_or(0, |s| s.per_layer_max.len());
    let per_layer_max = (0..layers)
        .map(|l| summaries.iter().map(|s| s.per_layer_max[l]).fold(0.0, f64::max))
        .collect();
    RunRecord {
        epoch,
        train_metric,
        test_metric,
        max_activation: summaries.iter().map(|s| s.max).fold(0.0, f64::max),
        mean_activation: summaries.iter().map(|s| s.mean).sum::<f64>() / n,
        per_layer_max_activation: per_layer_max,
        max_abs_update: reports.iter().map(|r| r.max_abs_update).fold(0.0, f64::max),
        mean_abs_update: reports.iter().map(|r| r.mean_abs_update).sum::<f64>() / n,
        dead_unit_fraction: reports
            .iter()
            .map(|r| r.activations.dead_unit_fraction())
            .sum::<f64>()
            / n,
        diverged: reports.iter().any(|r| r.diverged),
    }
}

/// Index of the largest value, lowest index on ties. `NaN` never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

impl ParamCount for ParallelEdla {
    fn param_count(&self) -> usize {
        self.nets.iter().map(EdlaNetwork::n_params).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.95, 0.3]), 2);
        assert_eq!(argmax(&[f64::NAN, 0.2]), 1);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let spec = EdlaSpec::new(2, vec![2]);
        let mut m = ParallelEdla::init(&spec, vec![0, 1], 0).unwrap();
        let x = Matrix::zeros(2, 2);
        let opts = FitOptions {
            eta: 1.0,
            epochs: 1,
            batch_size: 1,
            metric: Metric::Accuracy { threshold: 0.5 },
        };
        let err = m
            .fit_one_vs_rest(LabeledSamples::new(&x, &[0, 7]).unwrap(), None, &opts, 0)
            .unwrap_err();
        assert!(matches!(err, EdlaError::UnknownLabel(7)));
        assert!(ParallelEdla::init(&spec, vec![1, 1], 0).is_err());
        assert!(ParallelEdla::init(&spec, vec![], 0).is_err());
    }

    #[test]
    fn single_class_matches_binary_fit() {
        let xs = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let spec = EdlaSpec::new(2, vec![3]);
        let opts = FitOptions {
            eta: 1.0,
            epochs: 5,
            batch_size: 2,
            metric: Metric::Accuracy { threshold: 0.5 },
        };
        let mut m = ParallelEdla::init(&spec, vec![3], 11).unwrap();
        let h = m
            .fit_one_vs_rest(LabeledSamples::new(&xs, &[3, 3]).unwrap(), None, &opts, 11)
            .unwrap();
        let mut net = EdlaNetwork::init(&spec, &mut RngState::with_stream(11, init_stream(0))).unwrap();
        let t = [1.0, 1.0];
        let recs = training::fit(
            &mut net,
            Samples::new(&xs, &t).unwrap(),
            None,
            &opts,
            &mut RngState::with_stream(11, train_stream(0)),
        )
        .unwrap();
        assert_eq!(m.nets()[0], net);
        assert_eq!(h.per_class[0], recs);
    }

    #[test]
    fn wrapper_count_is_k_times_single() {
        let spec = EdlaSpec::new(4, vec![3]);
        let m = ParallelEdla::init(&spec, (0..10).collect(), 0).unwrap();
        assert_eq!(
            diagnostics::count_params_exact(&m),
            10 * m.nets()[0].n_params()
        );
    }
}
