//! Experiment runner for the adaptive attractor simulations.
//!
//! Every subcommand reads a versioned TOML configuration, runs one experiment
//! and writes CSV outputs plus a `manifest.json` that records the resolved
//! configuration and a content hash of every output.

pub mod config;
pub mod desk;
pub mod manifest;
pub mod run;

use std::path::{Path, PathBuf};

use anyhow::Context;

use config::{ConfigError, ExperimentConfig};
use manifest::{blob_hash, write_bundle, Manifest, Output};
use run::Experiment;

/// Loads (or defaults) and resolves a configuration, applying a seed
/// override.
pub fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

/// Runs an experiment on a pool of `threads` workers and writes its bundle
/// into `out`. Returns the written paths.
pub fn execute(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    threads: Option<usize>,
    out: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building worker pool")?;
    let mut outputs = pool.install(|| run::run(experiment, cfg))?;
    outputs.push(Output::new(
        "config.resolved.toml",
        cfg.to_toml().into_bytes(),
    ));

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: experiment.label(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        outputs: outputs
            .iter()
            .map(|o| (o.name.clone(), blob_hash(&o.bytes)))
            .collect(),
    };
    write_bundle(out, &outputs, &manifest)
        .with_context(|| format!("writing outputs to {}", out.display()))
}
