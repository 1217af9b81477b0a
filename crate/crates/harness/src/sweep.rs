//! One run per value of a width, depth or learning-rate axis.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use edla::diagnostics::fmt_f64;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::write_atomic;
use crate::run::{self, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Units per hidden layer; depth is kept.
    Width,
    /// Number of hidden layers at the first layer's width.
    Depth,
    Lr,
}

impl FromStr for Axis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width" => Ok(Axis::Width),
            "depth" => Ok(Axis::Depth),
            "lr" => Ok(Axis::Lr),
            _ => Err(HarnessError::Config(format!("unknown sweep axis '{s}' (width, depth, lr)"))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Width => "width",
            Axis::Depth => "depth",
            Axis::Lr => "lr",
        }
    }

    /// The base config with this axis set to `value`, writing below the
    /// base output directory.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(HarnessError::Config(format!("{} values must be positive integers, got {value}", self.name())))
            }
        };
        match self {
            Axis::Width => {
                let w = count()?;
                c.network.hidden_sizes.iter_mut().for_each(|h| *h = w);
            }
            Axis::Depth => c.network.hidden_sizes = vec![base.network.hidden_sizes[0]; count()?],
            Axis::Lr => c.training.learning_rate = value,
        }
        let label = format!("{}{}", self.name(), fmt_f64(value));
        c.name = format!("{}-{label}", base.name);
        c.output_dir = base.output_dir.join(label);
        c.validate()?;
        Ok(c)
    }
}

/// Outcome of one sweep cell.
#[derive(Debug)]
pub struct Cell {
    pub value: f64,
    pub result: Result<Summary>,
}

impl Cell {
    pub fn status(&self) -> &'static str {
        match &self.result {
            Ok(s) if s.all_diverged() => "diverged",
            Ok(s) if s.n_diverged > 0 => "partly_diverged",
            Ok(_) => "ok",
            Err(_) => "error",
        }
    }
}

pub const SWEEP_HEADER: &str = "axis,value,status,n_seeds,n_diverged,mean,sd,mean_last_finite,mean_reach_epoch,n_reached,params,message";

pub fn sweep_csv(axis: Axis, cells: &[Cell]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for c in cells {
        let _ = write!(s, "{},{},{},", axis.name(), fmt_f64(c.value), c.status());
        match &c.result {
            Ok(m) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},",
                    m.n_seeds,
                    m.n_diverged,
                    fmt_f64(m.mean),
                    fmt_f64(m.sd),
                    fmt_f64(m.mean_last_finite),
                    m.mean_reach_epoch.map_or(String::new(), fmt_f64),
                    m.n_reached,
                    m.params
                );
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n', '"'], " ");
                let _ = writeln!(s, ",,,,,,,,{msg}");
            }
        }
    }
    s
}

/// Run every cell in order. A failing or diverging cell is recorded and the
/// sweep moves on. Writes `sweep_{axis}.csv` into the base output directory.
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64], data_root: &Path) -> Result<Vec<Cell>> {
    base.validate()?;
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<_>>()?;
    let cells: Vec<Cell> = configs
        .iter()
        .zip(values)
        .map(|(cfg, &value)| Cell {
            value,
            result: run::run(cfg, data_root).map(|o| o.summary),
        })
        .collect();
    std::fs::create_dir_all(&base.output_dir).map_err(|e| HarnessError::output(&base.output_dir, e))?;
    write_atomic(
        &base.output_dir.join(format!("sweep_{}.csv", axis.name())),
        &sweep_csv(axis, &cells),
    )?;
    Ok(cells)
}
