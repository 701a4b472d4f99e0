//! `ergolab` — config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ergolab::experiment::{
    load_config, model_catalog, model_parameters, output_stem, run_parsed, ExperimentKind,
    OutputFormat, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "ergolab",
    version,
    about = "Run ergodicity and filter-stability experiments from TOML configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CatalogFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file: schema, cross-field rules, and model construction.
    Validate {
        /// Path to a TOML experiment config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute a config file; outputs are named after the config file's stem.
    Run {
        /// Path to a TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config's out_dir, then $ERGOLAB_OUT, then ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for replicated work; results are identical for any value.
        #[arg(long)]
        threads: Option<usize>,
        /// Restrict output formats (repeatable).
        #[arg(long, value_enum)]
        format: Vec<FormatArg>,
        /// Also write an SVG line plot.
        #[arg(long)]
        plot: bool,
    },
    /// Print the catalog of experiment kinds, their parameters, and models.
    ListExperiments {
        /// Catalog format.
        #[arg(long, value_enum, default_value = "text")]
        format: CatalogFormat,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "ok: {} (experiment {}, model {})",
                    config.display(),
                    cfg.kind,
                    cfg.model.name
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config, seed, out, threads, format, plot } => {
            let cfg = match load_config(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            let formats: Option<Vec<OutputFormat>> = if format.is_empty() {
                None
            } else {
                Some(
                    format
                        .iter()
                        .map(|f| match f {
                            FormatArg::Csv => OutputFormat::Csv,
                            FormatArg::Json => OutputFormat::Json,
                        })
                        .collect(),
                )
            };
            let opts = RunOptions { seed, out_dir: out, threads, formats, plot };
            match run_parsed(&cfg, &output_stem(&config, &cfg), &opts) {
                Ok(artifacts) => {
                    for path in &artifacts.written {
                        println!("wrote {}", path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::ListExperiments { format } => {
            match format {
                CatalogFormat::Text => print!("{}", catalog_text()),
                CatalogFormat::Json => println!("{}", catalog_json()),
            }
            ExitCode::SUCCESS
        }
    }
}

fn catalog_text() -> String {
    use std::fmt::Write as _;
    let mut out = String::from("EXPERIMENTS\n");
    for kind in ExperimentKind::ALL {
        let _ = writeln!(out, "  {kind} — {}", kind.describe());
        let _ = writeln!(out, "      models: {}", kind.supported_models().join(", "));
        let params = kind.run_parameters();
        let _ = writeln!(
            out,
            "      run parameters: {}",
            if params.is_empty() { "(none)".to_string() } else { params.join(", ") }
        );
    }
    out.push_str("\nMODELS\n");
    for name in model_catalog() {
        let params = model_parameters(name);
        let _ = writeln!(
            out,
            "  {name} (parameters: {})",
            if params.is_empty() { "none".to_string() } else { params.join(", ") }
        );
    }
    out
}

fn catalog_json() -> String {
    let experiments: Vec<serde_json::Value> = ExperimentKind::ALL
        .iter()
        .map(|kind| {
            serde_json::json!({
                "kind": kind.as_str(),
                "description": kind.describe(),
                "models": kind.supported_models(),
                "run_parameters": kind.run_parameters(),
            })
        })
        .collect();
    let models: Vec<serde_json::Value> = model_catalog()
        .into_iter()
        .map(|name| {
            serde_json::json!({
                "name": name,
                "parameters": model_parameters(name),
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "experiments": experiments,
        "models": models,
    }))
    .expect("static catalog serializes")
}
