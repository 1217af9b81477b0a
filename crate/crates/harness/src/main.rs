use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edla::diagnostics::{self, format_count};
use edla::snapshot;
use edla_harness::config::ExperimentConfig;
use edla_harness::error::{HarnessError, Result, EXIT_DIVERGED, EXIT_OK};
use edla_harness::output::write_atomic;
use edla_harness::sweep::{self, Axis};
use edla_harness::{compare, data, run};

/// Error diffusion learning experiments.
///
/// Exit codes: 0 ok, 1 config error, 2 data error, 3 every run diverged.
/// Datasets are read below $EDLA_DATA_ROOT (default `data`).
#[derive(Parser)]
#[command(name = "edla", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write CSV results.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set training.epochs=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a config once per value of a width, depth or lr axis.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Side-by-side table of runs on the same dataset; runs configs without results.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact parameter count of a model or of a config's model.
    Params {
        #[arg(short, long, conflicts_with_all = ["model", "inputs", "hidden", "outputs"])]
        config: Option<PathBuf>,
        #[arg(long, value_parser = ["edla", "mlp"])]
        model: Option<String>,
        #[arg(long)]
        inputs: Option<usize>,
        /// Comma-separated hidden widths.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        outputs: usize,
    },
    /// Write weight heatmaps and histograms of a saved EDLA network.
    ExportHeatmap {
        #[arg(long)]
        snapshot: PathBuf,
        /// 0-based layer whose incoming weights are drawn.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// Grid as HxW, e.g. 8x8; defaults to a square.
        #[arg(long)]
        shape: Option<String>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let root = data::data_root();
    match cmd {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let out = run::run(&cfg, &root)?;
            println!("{}\n{}", run::SUMMARY_HEADER, out.summary.csv_row());
            Ok(if out.summary.all_diverged() { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Sweep {
            config,
            axis,
            values,
            overrides,
        } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let axis: Axis = axis.parse()?;
            let cells = sweep::sweep(&cfg, axis, &values, &root)?;
            print!("{}", sweep::sweep_csv(axis, &cells));
            if let Some(Err(first)) = cells.first().map(|c| &c.result) {
                if cells.iter().all(|c| c.result.is_err()) {
                    return Ok(first.exit_code());
                }
            }
            Ok(if cells.iter().all(|c| c.status() == "diverged") { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Compare { configs, out } => {
            let cfgs: Vec<ExperimentConfig> = configs
                .iter()
                .map(|p| ExperimentConfig::load(p, &[]))
                .collect::<Result<_>>()?;
            let rows = compare::gather(&cfgs, &root)?;
            let table = compare::compare_csv(&rows);
            print!("{table}");
            if let Some(p) = out {
                write_atomic(&p, &table)?;
            }
            Ok(EXIT_OK)
        }
        Command::Params {
            config,
            model,
            inputs,
            hidden,
            outputs,
        } => {
            let n = match config {
                Some(p) => run::config_param_count(&ExperimentConfig::load(&p, &[])?),
                None => {
                    let (Some(model), Some(inputs)) = (model, inputs) else {
                        return Err(HarnessError::Config(
                            "params needs --config or --model with --inputs".into(),
                        ));
                    };
                    if inputs == 0 || outputs == 0 || hidden.contains(&0) {
                        return Err(HarnessError::Config("sizes must be at least 1".into()));
                    }
                    match model.as_str() {
                        "edla" if hidden.is_empty() => {
                            return Err(HarnessError::Config("edla needs --hidden".into()))
                        }
                        "edla" => diagnostics::edla_param_count(inputs, &hidden, outputs),
                        _ => diagnostics::mlp_param_count(inputs, &hidden, outputs),
                    }
                }
            };
            println!("{n}\t{}", format_count(n));
            Ok(EXIT_OK)
        }
        Command::ExportHeatmap {
            snapshot: path,
            layer,
            shape,
            bins,
            out,
        } => {
            let net = snapshot::load_edla(&path).map_err(|e| HarnessError::Data(e.to_string()))?;
            let shape = shape.map(|s| parse_shape(&s)).transpose()?;
            let heat = diagnostics::export_weight_heatmap(&net, layer, shape)?;
            for p in heat.write_csv(&out)? {
                println!("{}", p.display());
            }
            let hist = out.join("histograms.csv");
            diagnostics::write_histograms_csv(&hist, &diagnostics::weight_histograms(&net, bins))?;
            println!("{}", hist.display());
            Ok(EXIT_OK)
        }
    }
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || HarnessError::Config(format!("shape '{s}' is not HxW"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    Ok((h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?))
}
