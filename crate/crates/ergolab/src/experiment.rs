//! Config-driven experiment execution: declarative TOML configs select one
//! of eight experiment kinds over the model catalog; results land as CSV
//! record tables, a JSON summary whose verdicts are recomputable from the
//! CSV alone, and optional SVG decay plots. Output bytes are a pure function
//! of (config, seed): replicas run on a fixed-size thread pool but are
//! collected in index order, so thread count never changes a byte.

pub mod config;
pub mod output;
pub mod runners;

pub use config::{
    load_config, model_parameters, parse_config, ExperimentConfig, ExperimentKind, ModelConfig,
    OutputFormat, RunConfig,
};
pub use output::{render_csv, render_summary, render_svg, resolve_out_dir, ResultRecord};
pub use runners::{execute, model_catalog, ExperimentOutcome};

use crate::{Error, Result};
use std::path::{Path, PathBuf};

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub formats: Option<Vec<OutputFormat>>,
    pub plot: bool,
}

/// Files written by a run, plus the summary for direct inspection.
#[derive(Debug)]
pub struct RunArtifacts {
    pub written: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn apply_overrides(cfg: &mut ExperimentConfig, opts: &RunOptions) {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(formats) = &opts.formats {
        cfg.formats = formats.clone();
    }
    if opts.plot {
        cfg.plot = true;
    }
}

/// Execute an already-validated config and write its outputs under `stem`.
/// Errors here are runtime failures, not config failures.
pub fn run_parsed(cfg: &ExperimentConfig, stem: &str, opts: &RunOptions) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    apply_overrides(&mut cfg, opts);
    let outcome = match opts.threads {
        None => execute(&cfg)?,
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Solver(format!("thread pool construction failed: {e}")))?;
            pool.install(|| execute(&cfg))?
        }
    };
    let out_dir = resolve_out_dir(cfg.out_dir.as_deref(), opts.out_dir.as_deref());
    let written = output::write_outputs(
        &out_dir,
        stem,
        &cfg.formats,
        cfg.plot,
        &outcome.records,
        &outcome.summary,
        &outcome.plot_series,
    )?;
    Ok(RunArtifacts { written, summary: outcome.summary })
}

/// Name outputs after the config file.
pub fn output_stem(path: &Path, cfg: &ExperimentConfig) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(cfg.kind.as_str())
        .to_string()
}

/// Load, validate, and execute a config file, writing outputs named after
/// the config file's stem. Thread count affects speed only.
pub fn run_config_file(path: &Path, opts: &RunOptions) -> Result<RunArtifacts> {
    let cfg = load_config(path)?;
    run_parsed(&cfg, &output_stem(path, &cfg), opts)
}
