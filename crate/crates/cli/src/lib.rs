//! Command-line harness for the gmtlab-core checks.
//!
//! Every run writes `metadata.json`, `<experiment>.csv` and `summary.json` into the
//! output directory. Results depend only on the config and the seed.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use gmtlab_core::RngKey;

pub use config::{Config, Experiment};
use output::{write_json, Metadata, Summary};

#[derive(Debug, Clone, Parser)]
#[command(name = "gmtlab", version, about = "Seeded numerical experiments on Lipschitz plane fields")]
pub struct Args {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Monte Carlo samples per estimate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Exit code for a run whose assertions all pass.
pub const EXIT_PASS: i32 = 0;
/// Exit code for configuration and hypothesis errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when at least one assertion fails.
pub const EXIT_FAILED: i32 = 2;

/// Runs one experiment and returns the exit code; errors map to [`EXIT_ERROR`].
pub fn run(args: &Args) -> anyhow::Result<i32> {
    let cfg = Config::load(&args.config)?;
    let work = || run_config(args.experiment, &cfg, args.seed, args.samples, &args.out);
    match args.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .context("building thread pool")?
            .install(work),
        None => work(),
    }
}

pub fn run_config(
    experiment: Experiment,
    cfg: &Config,
    seed: u64,
    samples: Option<usize>,
    out: &std::path::Path,
) -> anyhow::Result<i32> {
    let key = RngKey::new(seed);
    let outcome = experiments::run(experiment, cfg, key, samples)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = experiment.as_str();
    let meta = Metadata {
        experiment: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        samples: samples
            .or(cfg.params.samples)
            .unwrap_or(gmtlab_core::setlib::DEFAULT_SLICE_SAMPLES),
        config: serde_json::to_value(cfg)?,
        lambda: outcome.lambda.clone(),
        gates: outcome.gates.clone(),
    };
    write_json(&out.join("metadata.json"), &meta)?;
    outcome.table.write(&out.join(format!("{name}.csv")))?;
    let failures = outcome.assertions.iter().filter(|a| !a.passed).count();
    let summary = Summary {
        experiment: name.into(),
        seed,
        passed: failures == 0,
        failures,
        assertions: outcome.assertions,
        stats: outcome.stats,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for a in summary.assertions.iter().filter(|a| !a.passed) {
        eprintln!("FAIL {}: observed {} vs limit {} ({})", a.anchor, a.observed, a.limit, a.detail);
    }
    Ok(if failures == 0 { EXIT_PASS } else { EXIT_FAILED })
}
