//! Experiment configuration in TOML.
//!
//! ```toml
//! name = "parity5-sigmoid"
//! task = "parity"            # parity | regression | classification
//! model = "edla"             # edla | mlp
//! seeds = [48835, 52642]
//! output_dir = "results/parity5-sigmoid"
//! workers = 1                # optional, defaults to the number of cores
//! save_snapshots = false     # optional
//!
//! [dataset]
//! name = "parity"            # parity | airfoil | concrete | energy | digits | mnist | cifar10
//! n_bit = 5                  # parity only
//! path = "concrete/concrete.csv"  # optional, relative to EDLA_DATA_ROOT
//! train_ratio = 0.8          # random-split datasets only
//! train_subset = 10000       # optional, keep the first n training samples
//!
//! [network]
//! hidden_sizes = [64]
//! hidden_activation = "sigmoid"
//! output_activation = "sigmoid"  # optional, task default
//! rms = false                # edla only
//! init_scale = 1.0           # edla only
//!
//! [training]
//! learning_rate = 1.0
//! epochs = 20000
//! batch_size = 4
//!
//! [metrics]
//! final_window = 100         # final metric = mean over the last n epochs
//! reach_threshold = 0.9      # accuracy tasks only
//! decision_threshold = 0.5   # parity output threshold
//! divergence_bound = 1e6     # regression only, MAE above this counts as diverged
//! ```
//!
//! Unknown keys are rejected. Every field is checked by
//! [`ExperimentConfig::validate`] before any data is read.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use edla::ActivationKind;
use serde::{Deserialize, Deserializer};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Parity,
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Edla,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Edla => "edla",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub save_snapshots: bool,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub n_bit: Option<usize>,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
    #[serde(default)]
    pub train_subset: Option<usize>,
}

fn default_train_ratio() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_sizes: Vec<usize>,
    #[serde(deserialize_with = "activation")]
    pub hidden_activation: ActivationKind,
    #[serde(default, deserialize_with = "opt_activation")]
    pub output_activation: Option<ActivationKind>,
    #[serde(default)]
    pub rms: bool,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    1.0
}

fn activation<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ActivationKind, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn opt_activation<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<ActivationKind>, D::Error> {
    activation(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "one")]
    pub final_window: usize,
    #[serde(default)]
    pub reach_threshold: Option<f64>,
    #[serde(default = "half")]
    pub decision_threshold: f64,
    #[serde(default)]
    pub divergence_bound: Option<f64>,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            final_window: 1,
            reach_threshold: None,
            decision_threshold: 0.5,
            divergence_bound: None,
        }
    }
}

/// MAE above which a regression run counts as diverged when the config
/// does not say otherwise.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

/// Dataset names, the task each belongs to, and the input width.
const DATASETS: [(&str, Task, usize); 7] = [
    ("parity", Task::Parity, 0),
    ("airfoil", Task::Regression, 5),
    ("concrete", Task::Regression, 8),
    ("energy", Task::Regression, 8),
    ("digits", Task::Classification, 64),
    ("mnist", Task::Classification, 784),
    ("cifar10", Task::Classification, 3072),
];

/// Class count of every classification dataset.
pub const N_CLASSES: usize = 10;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, apply `key=value` overrides (dotted keys, TOML values)
    /// and validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.name.is_empty() || self.name.contains([',', '\n', '"']) {
            return bad(format!("name {:?} must be non-empty without commas or quotes", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {s} is listed twice"));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        let Some(&(_, task, _)) = DATASETS.iter().find(|d| d.0 == self.dataset.name) else {
            return bad(format!("unknown dataset '{}'", self.dataset.name));
        };
        if task != self.task {
            return bad(format!(
                "dataset '{}' is a {task:?} dataset but task is {:?}",
                self.dataset.name, self.task
            ));
        }
        match (self.task, self.dataset.n_bit) {
            (Task::Parity, Some(n)) if (1..=20).contains(&n) => {}
            (Task::Parity, Some(n)) => return bad(format!("n_bit must be in 1..=20, got {n}")),
            (Task::Parity, None) => return bad("parity needs dataset.n_bit".into()),
            (_, Some(_)) => return bad("n_bit only applies to parity".into()),
            _ => {}
        }
        if self.task == Task::Parity && self.dataset.path.is_some() {
            return bad("parity data is generated; dataset.path does not apply".into());
        }
        let r = self.dataset.train_ratio;
        if !(r > 0.0 && r < 1.0) {
            return bad(format!("train_ratio must be in (0, 1), got {r}"));
        }
        if self.dataset.train_subset == Some(0) {
            return bad("train_subset must be at least 1".into());
        }
        if self.model == ModelKind::Mlp && self.task == Task::Parity {
            return bad("the mlp baseline covers regression and classification only".into());
        }

        let net = &self.network;
        if net.hidden_sizes.is_empty() || net.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must be non-empty with every width at least 1".into());
        }
        if self.model == ModelKind::Mlp {
            if net.rms {
                return bad("rms applies to edla only".into());
            }
            if net.init_scale != 1.0 {
                return bad("init_scale applies to edla only".into());
            }
            if net.output_activation.is_some_and(|a| a != ActivationKind::Identity) {
                return bad("mlp outputs are linear".into());
            }
        }
        if !(net.init_scale.is_finite() && net.init_scale >= 0.0) {
            return bad(format!("init_scale must be finite and non-negative, got {}", net.init_scale));
        }

        let t = &self.training;
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", t.learning_rate));
        }
        if t.epochs == 0 || t.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }

        let m = &self.metrics;
        if m.final_window == 0 || m.final_window > t.epochs {
            return bad(format!("final_window must be in 1..={}", t.epochs));
        }
        match (self.task, m.reach_threshold) {
            (Task::Regression, Some(_)) => {
                return bad("reach_threshold applies to accuracy tasks".into())
            }
            (_, Some(th)) if !(0.0..=1.0).contains(&th) => {
                return bad(format!("reach_threshold must be in [0, 1], got {th}"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&m.decision_threshold) {
            return bad("decision_threshold must be in [0, 1]".into());
        }
        match (self.task, m.divergence_bound) {
            (Task::Regression, Some(b)) if !(b > 0.0) => {
                return bad("divergence_bound must be positive".into())
            }
            (Task::Regression, _) | (_, None) => {}
            _ => return bad("divergence_bound applies to regression".into()),
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        match self.task {
            Task::Parity => self.dataset.n_bit.unwrap_or(0),
            _ => DATASETS
                .iter()
                .find(|d| d.0 == self.dataset.name)
                .map_or(0, |d| d.2),
        }
    }

    /// Number of outputs: one per class for classification, otherwise one.
    pub fn n_outputs(&self) -> usize {
        match self.task {
            Task::Classification => N_CLASSES,
            _ => 1,
        }
    }

    pub fn output_activation(&self) -> ActivationKind {
        match (self.model, self.network.output_activation) {
            (ModelKind::Mlp, _) => ActivationKind::Identity,
            (_, Some(a)) => a,
            (_, None) if self.task == Task::Regression => ActivationKind::Identity,
            _ => ActivationKind::Sigmoid,
        }
    }

    /// Reach threshold with the task defaults: 0.9 for parity, 0.8 for
    /// classification, none for regression.
    pub fn reach_threshold(&self) -> Option<f64> {
        match self.task {
            Task::Regression => None,
            Task::Parity => Some(self.metrics.reach_threshold.unwrap_or(0.9)),
            Task::Classification => Some(self.metrics.reach_threshold.unwrap_or(0.8)),
        }
    }

    pub fn divergence_bound(&self) -> Option<f64> {
        (self.task == Task::Regression)
            .then(|| self.metrics.divergence_bound.unwrap_or(DEFAULT_DIVERGENCE_BOUND))
    }

    /// Hidden shape as `depth x width` when uniform, otherwise widths joined by `-`.
    pub fn shape_label(&self) -> String {
        shape_label(&self.network.hidden_sizes)
    }
}

pub fn shape_label(hidden: &[usize]) -> String {
    match hidden.first() {
        Some(&w) if hidden.iter().all(|&h| h == w) => format!("{}x{w}", hidden.len()),
        _ => hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
    }
}

/// Apply one `a.b.c=value` override. The value is read as a TOML value and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override '{spec}' is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PARITY: &str = r#"
name = "p"
task = "parity"
model = "edla"
seeds = [1, 2]
output_dir = "out"
[dataset]
name = "parity"
n_bit = 3
[network]
hidden_sizes = [8]
hidden_activation = "sigmoid"
[training]
learning_rate = 1.0
epochs = 10
batch_size = 4
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(PARITY).unwrap();
        assert_eq!(c.n_inputs(), 3);
        assert_eq!(c.output_activation(), ActivationKind::Sigmoid);
        assert_eq!(c.reach_threshold(), Some(0.9));
        assert_eq!(c.metrics.final_window, 1);
        assert_eq!(c.shape_label(), "1x8");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = PARITY.replace("epochs = 10", "epochs = 10\nmomentum = 0.9");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(e.to_string().contains("momentum"), "{e}");
        let text = format!("colour = 1\n{PARITY}");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (from, to) in [
            ("seeds = [1, 2]", "seeds = []"),
            ("seeds = [1, 2]", "seeds = [3, 3]"),
            ("n_bit = 3", "n_bit = 0"),
            ("hidden_sizes = [8]", "hidden_sizes = [8, 0]"),
            ("learning_rate = 1.0", "learning_rate = -1.0"),
            ("batch_size = 4", "batch_size = 0"),
            ("\"sigmoid\"", "\"tanh\""),
            ("task = \"parity\"", "task = \"regression\""),
            ("model = \"edla\"", "model = \"mlp\""),
        ] {
            let e = ExperimentConfig::from_toml(&PARITY.replace(from, to)).unwrap_err();
            assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG, "{to}");
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut t: toml::Table = PARITY.parse().unwrap();
        apply_override(&mut t, "training.epochs=25").unwrap();
        apply_override(&mut t, "network.hidden_activation=relu").unwrap();
        apply_override(&mut t, "seeds=[7]").unwrap();
        let c: ExperimentConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(c.training.epochs, 25);
        assert_eq!(c.network.hidden_activation, ActivationKind::Relu);
        assert_eq!(c.seeds, vec![7]);

        let mut t: toml::Table = PARITY.parse().unwrap();
        apply_override(&mut t, "training.nesterov=true").unwrap();
        assert!(toml::Value::Table(t).try_into::<ExperimentConfig>().is_err());
        let mut t: toml::Table = PARITY.parse().unwrap();
        assert!(apply_override(&mut t, "name.inner=1").is_err());
        assert!(apply_override(&mut t, "no_equals").is_err());
    }

    #[test]
    fn shape_labels() {
        assert_eq!(shape_label(&[256; 4]), "4x256");
        assert_eq!(shape_label(&[16, 8]), "16-8");
    }
}
