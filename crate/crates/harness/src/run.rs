//! One experiment: every seed of one config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use edla::diagnostics::{self, count_params_exact, epoch_to_threshold, fmt_f64, mean_reach_epoch, mean_sd};
use edla::mlp::{mlp_fit, LossKind, MlpFitOptions, MlpSamples, MlpTargets};
use edla::multiclass::LabeledSamples;
use edla::snapshot;
use edla::{
    EdlaNetwork, EdlaSpec, FitOptions, Matrix, Metric, MlpNetwork, ParallelEdla, RngState, RunRecord,
    Samples, Targets,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ModelKind, Task};
use crate::data::{self, Prepared, Source};
use crate::error::{HarnessError, Result};
use crate::output::{write_atomic, write_atomic_bytes};

/// A trained model, kept so it can be saved.
#[derive(Debug, Clone)]
pub enum Trained {
    Single(EdlaNetwork),
    Parallel(ParallelEdla),
    Mlp(MlpNetwork),
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Mean of the primary metric over the final window.
    pub final_metric: f64,
    pub last_finite: Option<f64>,
    pub reach_epoch: Option<usize>,
    pub diverged: bool,
    pub params: usize,
    pub model: Trained,
}

impl SeedResult {
    /// The metric the run is judged on: test when a test side exists.
    pub fn primary_series(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.test_metric.unwrap_or(r.train_metric))
            .collect()
    }
}

/// Across-seed aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub model: String,
    pub dataset: String,
    pub hidden: String,
    pub activation: String,
    pub metric: String,
    pub split: String,
    pub n_seeds: usize,
    pub mean: f64,
    pub sd: f64,
    pub mean_last_finite: f64,
    pub n_diverged: usize,
    pub mean_reach_epoch: Option<f64>,
    pub n_reached: usize,
    pub params: usize,
}

pub const SUMMARY_HEADER: &str = "name,model,dataset,hidden,activation,metric,split,n_seeds,mean,sd,mean_last_finite,n_diverged,mean_reach_epoch,n_reached,params,params_fmt";

impl Summary {
    pub fn all_diverged(&self) -> bool {
        self.n_diverged == self.n_seeds
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.name,
            self.model,
            self.dataset,
            self.hidden,
            self.activation,
            self.metric,
            self.split,
            self.n_seeds,
            fmt_f64(self.mean),
            fmt_f64(self.sd),
            fmt_f64(self.mean_last_finite),
            self.n_diverged,
            self.mean_reach_epoch.map_or(String::new(), fmt_f64),
            self.n_reached,
            self.params,
            diagnostics::format_count(self.params),
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = || HarnessError::Data(format!("malformed summary row '{line}'"));
        if f.len() != 16 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        Ok(Self {
            name: f[0].into(),
            model: f[1].into(),
            dataset: f[2].into(),
            hidden: f[3].into(),
            activation: f[4].into(),
            metric: f[5].into(),
            split: f[6].into(),
            n_seeds: int(f[7])?,
            mean: num(f[8])?,
            sd: num(f[9])?,
            mean_last_finite: num(f[10])?,
            n_diverged: int(f[11])?,
            mean_reach_epoch: if f[12].is_empty() { None } else { Some(num(f[12])?) },
            n_reached: int(f[13])?,
            params: int(f[14])?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        let row = text
            .lines()
            .nth(1)
            .ok_or_else(|| HarnessError::Data(format!("{}: no summary row", path.display())))?;
        Self::from_csv_row(row)
    }
}

pub fn metric_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.task {
        Task::Regression => "mae",
        _ => "accuracy",
    }
}

fn split_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.task {
        Task::Parity => "train",
        _ => "test",
    }
}

/// EDLA shape for a config.
pub fn edla_spec(cfg: &ExperimentConfig) -> EdlaSpec {
    EdlaSpec::new(cfg.n_inputs(), cfg.network.hidden_sizes.clone())
        .activations(cfg.network.hidden_activation, cfg.output_activation())
        .rms(cfg.network.rms)
        .init_scale(cfg.network.init_scale)
}

/// Exact parameter count of the model a config builds.
pub fn config_param_count(cfg: &ExperimentConfig) -> usize {
    let (n_in, hidden, n_out) = (cfg.n_inputs(), &cfg.network.hidden_sizes, cfg.n_outputs());
    match cfg.model {
        ModelKind::Edla => diagnostics::edla_param_count(n_in, hidden, n_out),
        ModelKind::Mlp => diagnostics::mlp_param_count(n_in, hidden, n_out),
    }
}

/// Train one seed. The split, initialization and shuffles of single
/// networks draw from stream 0 of `seed`, in that order; one-vs-rest
/// networks use their own streams of the same seed.
pub fn run_seed(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<SeedResult> {
    let mut rng = RngState::new(seed);
    let prepared = data::prepare(cfg, source, &mut rng)?;
    let Prepared { train, test } = prepared.as_ref();
    let test = test.as_ref();
    let fit = FitOptions {
        eta: cfg.training.learning_rate,
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        metric: match cfg.task {
            Task::Regression => Metric::Mae,
            _ => Metric::Accuracy {
                threshold: cfg.metrics.decision_threshold,
            },
        },
    };
    let (records, model) = match (cfg.model, cfg.task) {
        (ModelKind::Edla, Task::Classification) => {
            let labels = classes(&train.targets)?;
            let mut model = ParallelEdla::init(&edla_spec(cfg), (0..cfg.n_outputs()).collect(), seed)?;
            let test = match test {
                Some(p) => Some(LabeledSamples::new(&p.x, classes(&p.targets)?)?),
                None => None,
            };
            let h = model.fit_one_vs_rest(LabeledSamples::new(&train.x, labels)?, test, &fit, seed)?;
            (h.combined, Trained::Parallel(model))
        }
        (ModelKind::Edla, _) => {
            let mut net = EdlaNetwork::init(&edla_spec(cfg), &mut rng)?;
            let t = train.targets.as_real();
            let test_t = test.map(|p| p.targets.as_real());
            let test = match (test, &test_t) {
                (Some(p), Some(t)) => Some(Samples::new(&p.x, t)?),
                _ => None,
            };
            let records = edla::fit(&mut net, Samples::new(&train.x, &t)?, test, &fit, &mut rng)?;
            (records, Trained::Single(net))
        }
        (ModelKind::Mlp, task) => {
            let mut net = MlpNetwork::init(
                cfg.n_inputs(),
                &cfg.network.hidden_sizes,
                cfg.n_outputs(),
                cfg.network.hidden_activation,
                &mut rng,
            )?;
            let real_tr = train.targets.as_real();
            let real_te = test.map(|p| p.targets.as_real());
            let opts = MlpFitOptions {
                lr: cfg.training.learning_rate,
                epochs: cfg.training.epochs,
                batch_size: cfg.training.batch_size,
                loss: match task {
                    Task::Classification => LossKind::CrossEntropy,
                    _ => LossKind::Mse,
                },
            };
            let tr = mlp_samples(task, &train.x, &train.targets, &real_tr)?;
            let te = match (test, &real_te) {
                (Some(p), Some(r)) => Some(mlp_samples(task, &p.x, &p.targets, r)?),
                _ => None,
            };
            let records = mlp_fit(&mut net, tr, te, &opts, &mut rng)?;
            (records, Trained::Mlp(net))
        }
    };
    let params = match &model {
        Trained::Single(n) => count_params_exact(n),
        Trained::Parallel(m) => count_params_exact(m),
        Trained::Mlp(n) => count_params_exact(n),
    };
    Ok(judge(cfg, seed, records, model, params))
}

fn mlp_samples<'a>(task: Task, x: &'a Matrix, targets: &'a Targets, real: &'a [f64]) -> Result<MlpSamples<'a>> {
    Ok(MlpSamples {
        x,
        targets: match task {
            Task::Classification => MlpTargets::Classes(classes(targets)?),
            _ => MlpTargets::Regression(real),
        },
    })
}

/// Accuracy targets must be class labels.
fn classes(t: &Targets) -> Result<&[usize]> {
    t.classes()
        .ok_or_else(|| HarnessError::Data("classification needs integer class labels".into()))
}

fn judge(cfg: &ExperimentConfig, seed: u64, records: Vec<RunRecord>, model: Trained, params: usize) -> SeedResult {
    let mut res = SeedResult {
        seed,
        records,
        final_metric: f64::NAN,
        last_finite: None,
        reach_epoch: None,
        diverged: false,
        params,
        model,
    };
    let series = res.primary_series();
    let window = cfg.metrics.final_window.min(series.len());
    if window > 0 {
        res.final_metric = series[series.len() - window..].iter().sum::<f64>() / window as f64;
    }
    res.last_finite = series.iter().rev().copied().find(|v| v.is_finite());
    res.reach_epoch = cfg.reach_threshold().and_then(|th| epoch_to_threshold(&series, th));
    let flagged = res.records.iter().any(|r| r.diverged);
    let blown = cfg.divergence_bound().is_some_and(|b| {
        series.iter().any(|&v| !v.is_finite() || v > b)
    });
    res.diverged = flagged || blown || !res.final_metric.is_finite();
    res
}

pub fn summarize(cfg: &ExperimentConfig, results: &[SeedResult]) -> Summary {
    let finals: Vec<f64> = results.iter().map(|r| r.final_metric).collect();
    let (mean, sd) = mean_sd(&finals);
    let finite: Vec<f64> = results.iter().filter_map(|r| r.last_finite).collect();
    let reached: Vec<Option<usize>> = results.iter().map(|r| r.reach_epoch).collect();
    Summary {
        name: cfg.name.clone(),
        model: cfg.model.name().into(),
        dataset: cfg.dataset.name.clone(),
        hidden: cfg.shape_label(),
        activation: cfg.network.hidden_activation.to_string() + if cfg.network.rms { "+rms" } else { "" },
        metric: metric_name(cfg).into(),
        split: split_name(cfg).into(),
        n_seeds: results.len(),
        mean,
        sd,
        mean_last_finite: if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        n_diverged: results.iter().filter(|r| r.diverged).count(),
        mean_reach_epoch: if cfg.reach_threshold().is_some() {
            mean_reach_epoch(&reached)
        } else {
            None
        },
        n_reached: reached.iter().flatten().count(),
        params: results.first().map_or_else(|| config_param_count(cfg), |r| r.params),
    }
}

/// Train every seed, up to `cfg.workers` at a time, returning results in
/// seed-list order. Nothing is written.
pub fn execute(cfg: &ExperimentConfig, source: &Source) -> Result<Vec<SeedResult>> {
    with_workers(cfg.workers, || {
        cfg.seeds
            .par_iter()
            .map(|&s| run_seed(cfg, source, s))
            .collect()
    })
}

pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Long-form metric rows `epoch,seed,split,metric_name,value`.
pub fn long_csv(cfg: &ExperimentConfig, results: &[SeedResult]) -> String {
    let name = metric_name(cfg);
    let mut s = String::from("epoch,seed,split,metric_name,value\n");
    for r in results {
        for rec in &r.records {
            let _ = writeln!(s, "{},{},train,{name},{}", rec.epoch, r.seed, fmt_f64(rec.train_metric));
            if let Some(t) = rec.test_metric {
                let _ = writeln!(s, "{},{},test,{name},{}", rec.epoch, r.seed, fmt_f64(t));
            }
        }
    }
    s
}

/// Wide per-epoch dynamics for one seed.
pub fn dynamics_csv(records: &[RunRecord]) -> String {
    let n_layers = records.first().map_or(0, |r| r.per_layer_max_activation.len());
    let mut s = RunRecord::csv_header(n_layers);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub const SEEDS_HEADER: &str = "seed,epochs_run,final_metric,last_finite_metric,reach_epoch,diverged";

pub fn seeds_csv(results: &[SeedResult]) -> String {
    let mut s = format!("{SEEDS_HEADER}\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.seed,
            r.records.len(),
            fmt_f64(r.final_metric),
            r.last_finite.map_or(String::new(), fmt_f64),
            r.reach_epoch.map_or(String::new(), |e| e.to_string()),
            u8::from(r.diverged)
        );
    }
    s
}

/// Result files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub results: Vec<SeedResult>,
    pub files: Vec<PathBuf>,
}

/// Load data, train every seed and write:
/// `records.csv` (long form), `dynamics_seed{seed}.csv`, `seeds.csv` and
/// `summary.csv`, plus snapshots when requested. Data errors surface before
/// anything is created on disk.
pub fn run(cfg: &ExperimentConfig, data_root: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let source = data::load(cfg, data_root)?;
    let results = execute(cfg, &source)?;
    let summary = summarize(cfg, &results);
    let files = write_outputs(cfg, &results, &summary)?;
    Ok(RunOutcome {
        summary,
        results,
        files,
    })
}

pub fn write_outputs(cfg: &ExperimentConfig, results: &[SeedResult], summary: &Summary) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::output(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: String, body: &str| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, body)?;
        files.push(p);
        Ok(())
    };
    for r in results {
        put(format!("dynamics_seed{}.csv", r.seed), &dynamics_csv(&r.records))?;
    }
    put("records.csv".into(), &long_csv(cfg, results))?;
    put("seeds.csv".into(), &seeds_csv(results))?;
    put("summary.csv".into(), &format!("{SUMMARY_HEADER}\n{}\n", summary.csv_row()))?;
    if cfg.save_snapshots {
        for r in results {
            match &r.model {
                Trained::Single(n) => {
                    let p = dir.join(format!("net_seed{}.edla", r.seed));
                    write_atomic_bytes(&p, &snapshot::encode_edla(n))?;
                    files.push(p);
                }
                Trained::Parallel(m) => {
                    for (net, label) in m.nets().iter().zip(m.class_labels()) {
                        let p = dir.join(format!("net_seed{}_class{label}.edla", r.seed));
                        write_atomic_bytes(&p, &snapshot::encode_edla(net))?;
                        files.push(p);
                    }
                }
                Trained::Mlp(n) => {
                    let p = dir.join(format!("mlp_seed{}.mlp", r.seed));
                    write_atomic_bytes(&p, &snapshot::encode_mlp(n))?;
                    files.push(p);
                }
            }
        }
    }
    Ok(files)
}
