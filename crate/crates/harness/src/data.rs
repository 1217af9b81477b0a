//! Locating, loading and splitting the datasets named in a config.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use edla::datasets;
use edla::{ColumnMap, Dataset, Part, RngState, Targets};

use crate::config::{ExperimentConfig, Task};
use crate::error::{HarnessError, Result};

/// Environment variable naming the dataset root; defaults to `data`.
pub const DATA_ROOT_ENV: &str = "EDLA_DATA_ROOT";

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Default location of each dataset below the data root.
pub fn default_relative_path(name: &str) -> Option<&'static str> {
    Some(match name {
        "airfoil" => "airfoil/airfoil_self_noise.dat",
        "concrete" => "concrete/concrete.csv",
        "energy" => "energy/energy.csv",
        "digits" => "digits/digits.csv",
        "mnist" => "mnist",
        "cifar10" => "cifar10/cifar-10-batches-bin",
        _ => return None,
    })
}

/// Resolved dataset path; relative config paths are taken from `root`.
pub fn dataset_path(cfg: &ExperimentConfig, root: &Path) -> Option<PathBuf> {
    match &cfg.dataset.path {
        Some(p) if p.is_absolute() => Some(p.clone()),
        Some(p) => Some(root.join(p)),
        None => default_relative_path(&cfg.dataset.name).map(|p| root.join(p)),
    }
}

/// The train and test sides used by one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Part,
    /// Empty for parity, where the model is scored on the patterns it trains on.
    pub test: Option<Part>,
}

/// Loaded data, either already split or split per seed.
#[derive(Debug, Clone)]
pub enum Source {
    Shared(Arc<Prepared>),
    PerSeed(Arc<Dataset>),
}

fn data_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data(e.to_string())
}

/// Read the dataset from disk (or generate it). Nothing is written.
pub fn load(cfg: &ExperimentConfig, root: &Path) -> Result<Source> {
    let subset = cfg.dataset.train_subset;
    if cfg.task == Task::Parity {
        let n_bit = cfg.dataset.n_bit.expect("validated");
        let d = datasets::gen_parity(n_bit).map_err(data_err)?;
        let (train, _) = d.into_parts().map_err(data_err)?;
        return Ok(Source::Shared(Arc::new(Prepared { train, test: None })));
    }
    let path = dataset_path(cfg, root).expect("validated dataset name");
    if !path.exists() {
        return Err(HarnessError::Data(format!(
            "{} not found (set {DATA_ROOT_ENV} or dataset.path)",
            path.display()
        )));
    }
    match cfg.dataset.name.as_str() {
        "mnist" | "cifar10" => {
            let d = if cfg.dataset.name == "mnist" {
                datasets::load_mnist_dir(&path)
            } else {
                datasets::load_cifar10_dir(&path)
            }
            .map_err(data_err)?;
            let d = match subset {
                Some(n) => d.truncate_train(n),
                None => d,
            };
            let (train, test) = d.into_parts().map_err(data_err)?;
            Ok(Source::Shared(Arc::new(Prepared {
                train,
                test: Some(test),
            })))
        }
        name => {
            let map = ColumnMap::by_name(name).expect("validated dataset name");
            let d = datasets::load_csv_numeric(&path, &map).map_err(data_err)?;
            Ok(Source::PerSeed(Arc::new(d)))
        }
    }
}

/// Split a per-seed dataset with `rng`; regression features are min-max
/// scaled with statistics from the training side.
pub fn prepare(cfg: &ExperimentConfig, source: &Source, rng: &mut RngState) -> Result<Arc<Prepared>> {
    let d = match source {
        Source::Shared(p) => return Ok(Arc::clone(p)),
        Source::PerSeed(d) => d,
    };
    let (mut tr, te) = datasets::split_random(d.n_samples(), cfg.dataset.train_ratio, rng)?;
    if let Some(n) = cfg.dataset.train_subset {
        tr.truncate(n);
    }
    if tr.is_empty() || te.is_empty() {
        return Err(HarnessError::Data(format!(
            "{} samples leave an empty train or test side",
            d.n_samples()
        )));
    }
    let side = |idx: &[usize]| Part {
        x: d.x.select_rows(idx),
        targets: d.targets.select(idx),
    };
    let (mut train, mut test) = (side(&tr), side(&te));
    if matches!(d.targets, Targets::Real(_)) {
        datasets::minmax_parts(&mut train, &mut test)?;
    }
    Ok(Arc::new(Prepared {
        train,
        test: Some(test),
    }))
}
