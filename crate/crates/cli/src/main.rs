//! `ces-audit`: score tracts, audit designation sensitivity, search for
//! manipulations, estimate funding effects and attribute funding.

mod commands;
mod config;
mod io;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::io::Format;

pub const DEFAULT_SEED: u64 = ces_audit::sensitivity::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(name = "ces-audit", version, about)]
#[command(after_help = "Every flag can also be set with a CES_AUDIT_<FLAG> environment variable \
(e.g. CES_AUDIT_PRIOR_DESIGNATIONS) or a `key = value` line in the --config file. \
Command-line flags win over the environment, which wins over the config file.")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Tract indicator table (CSV)
    #[arg(long, global = true, env = "CES_AUDIT_TRACTS")]
    pub tracts: Option<PathBuf>,
    /// Tract demographics (CSV)
    #[arg(long, global = true, env = "CES_AUDIT_DEMOGRAPHICS")]
    pub demographics: Option<PathBuf>,
    /// Funding projects (CSV)
    #[arg(long, global = true, env = "CES_AUDIT_PROJECTS")]
    pub projects: Option<PathBuf>,
    /// Indicator schema (JSON); the built-in CES 4.0 schema when absent
    #[arg(long, global = true, env = "CES_AUDIT_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// Model spec (JSON); the baseline spec when absent
    #[arg(long, global = true, env = "CES_AUDIT_SPEC")]
    pub spec: Option<PathBuf>,
    /// Scored tracts (CSV with tract_id, percentile, category columns, designated)
    #[arg(long, global = true, env = "CES_AUDIT_SCORES")]
    pub scores: Option<PathBuf>,
    /// Per-tract funding totals (CSV with tract_id, total)
    #[arg(long, global = true, env = "CES_AUDIT_FUNDING")]
    pub funding: Option<PathBuf>,
    /// Designations from another tool version (CSV with tract_id, designated)
    #[arg(long, global = true, env = "CES_AUDIT_PRIOR_DESIGNATIONS")]
    pub prior_designations: Option<PathBuf>,
    /// Tract-district overlaps (CSV)
    #[arg(long, global = true, env = "CES_AUDIT_DISTRICT_OVERLAPS")]
    pub district_overlaps: Option<PathBuf>,
    /// Seed for every stochastic step [default: 20240001]
    #[arg(long, global = true, env = "CES_AUDIT_SEED")]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true, env = "CES_AUDIT_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory
    #[arg(long, global = true, env = "CES_AUDIT_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Output formats
    #[arg(long, global = true, env = "CES_AUDIT_FORMAT", value_enum, value_delimiter = ',', default_value = "json,csv,svg")]
    pub format: Vec<Format>,
    /// Config file of `key = value` lines
    #[arg(long, global = true, env = "CES_AUDIT_CONFIG")]
    pub config: Option<PathBuf>,
}

impl Common {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and summarize input tables
    Ingest,
    /// Score tracts under one model spec
    Score,
    /// Sensitivity audit over the eight-model lattice
    Audit(commands::AuditArgs),
    /// Pattern search for weights that shift designations toward or away from a group
    Adversarial(commands::AdversarialArgs),
    /// Regression-discontinuity estimate of the designation funding effect
    Rdd(commands::RddArgs),
    /// Propensity-score matching on multiply imputed data
    Match(commands::MatchArgs),
    /// Repair projects and attribute funding to tracts
    Attribute(commands::AttributeArgs),
    /// Write synthetic inputs in the standard formats
    Synth(commands::SynthArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ces_audit::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
        }
    }
}

fn write_error(out: &Path, e: &CliError) {
    let body = serde_json::json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
    let written = std::fs::create_dir_all(out)
        .and_then(|_| std::fs::write(out.join("error.json"), format!("{body:#}\n")));
    if let Err(io) = written {
        eprintln!("could not write error file: {io}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match config::merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            write_error(&cli.common.out, &e);
            ExitCode::FAILURE
        }
    }
}
