//! Side-by-side table of finished runs on the same dataset.

use std::fmt::Write as _;
use std::path::Path;

use edla::diagnostics::{fmt_f64, format_count};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{self, Summary};

pub const COMPARE_HEADER: &str = "name,model,hidden,activation,params,params_fmt,metric,split,mean,sd,n_diverged";

/// Same data for every config: dataset name, path, parity width, split
/// ratio and training subset must agree.
pub fn check_same_dataset(configs: &[ExperimentConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| HarnessError::Config("compare needs at least one config".into()))?;
    for c in &configs[1..] {
        if c.dataset != first.dataset {
            return Err(HarnessError::Config(format!(
                "configs '{}' and '{}' use different datasets ({:?} vs {:?})",
                first.name, c.name, first.dataset, c.dataset
            )));
        }
    }
    Ok(())
}

/// Summaries for `configs`, reading `summary.csv` from each output
/// directory and running the config first when it is missing.
pub fn gather(configs: &[ExperimentConfig], data_root: &Path) -> Result<Vec<Summary>> {
    check_same_dataset(configs)?;
    configs
        .iter()
        .map(|c| {
            let p = c.output_dir.join("summary.csv");
            if p.exists() {
                Summary::read(&p)
            } else {
                run::run(c, data_root).map(|o| o.summary)
            }
        })
        .collect()
}

pub fn compare_csv(rows: &[Summary]) -> String {
    let mut s = format!("{COMPARE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            r.model,
            r.hidden,
            r.activation,
            r.params,
            format_count(r.params),
            r.metric,
            r.split,
            fmt_f64(r.mean),
            fmt_f64(r.sd),
            r.n_diverged
        );
    }
    s
}
