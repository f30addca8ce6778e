//! Experiment driver: TOML configs, the seeded training loop, per-episode
//! metrics, checkpoints, hyper-parameter sweeps and representation dumps.

pub mod checkpoint;
mod config;
mod metrics;
mod repr;
mod run;

use std::path::PathBuf;

pub use config::RunConfig;
pub use metrics::{read_metrics, MetricsRow, MetricsWriter};
pub use repr::{collect_representations, dump_representations, mean_pairwise_distance, ReprDump};
pub use run::{model_path, run_experiment, run_single, NoObserver, RunObserver, RunResult};

use crate::error::{Error, Result};
use crate::lcr::LcrConfig;

/// LCR settings a sweep may vary.
pub const SWEEP_PARAMS: [&str; 4] = ["gradient_steps", "K", "lcr_learning_rate", "lcr_batch_size"];

/// `base` with one LCR setting replaced. An absent `lcr` table starts from
/// the LCR defaults.
pub fn with_lcr_param(base: &RunConfig, param: &str, value: &str) -> Result<(RunConfig, String)> {
    let mut cfg = base.clone();
    let lcr = cfg.lcr.get_or_insert_with(LcrConfig::default);
    let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{param}: cannot parse {value:?}: {e}"));
    let label = match param {
        "gradient_steps" => {
            lcr.gradient_steps = value.trim().parse().map_err(|e| bad(&e))?;
            lcr.gradient_steps.to_string()
        }
        "K" => {
            lcr.k = value.trim().parse().map_err(|e| bad(&e))?;
            lcr.k.to_string()
        }
        "lcr_batch_size" => {
            lcr.batch_size = value.trim().parse().map_err(|e| bad(&e))?;
            lcr.batch_size.to_string()
        }
        "lcr_learning_rate" => {
            lcr.learning_rate = value.trim().parse().map_err(|e| bad(&e))?;
            lcr.learning_rate.to_string()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected one of {SWEEP_PARAMS:?}"
            )))
        }
    };
    cfg.validate()?;
    Ok((cfg, label))
}

/// One experiment per value. Metrics go to `out_dir/{param}_{value}.csv` and
/// checkpoints to the directory of the same stem.
pub fn run_sweep(base: &RunConfig, param: &str, values: &[String]) -> Result<Vec<PathBuf>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let cfgs = values
        .iter()
        .map(|v| with_lcr_param(base, param, v))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (cfg, label) in cfgs {
        let stem = format!("{param}_{label}");
        let metrics = base.out_dir.join(format!("{stem}.csv"));
        run::run_to(&cfg, &metrics, &base.out_dir.join(&stem))?;
        out.push(metrics);
    }
    Ok(out)
}
