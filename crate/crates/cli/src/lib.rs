//! Batch front end: configuration, dispatch and persisted run artifacts.

pub mod catalog;
pub mod config;
pub mod experiments;
pub mod manifest;

use config::{parse_config, ConfigErrors, Experiment, ExperimentConfig};
use experiments::{run_experiment, Outcome, RunError};
use manifest::{now, persist, RunManifest, RunStatus};
use std::path::{Path, PathBuf};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub outcome: Option<Outcome>,
}

/// Loads a config, applies command-line overrides and checks that the
/// `experiment` key, if given, agrees with the command.
pub fn load(
    experiment: Experiment,
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg = parse_config(path)?;
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(ConfigErrors(vec![format!(
                "config is for experiment `{e}` but `{experiment}` was requested"
            )]));
        }
    }
    cfg.experiment = Some(experiment);
    if out.is_some() {
        cfg.out = out;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn default_out_dir(experiment: Experiment) -> PathBuf {
    PathBuf::from("runs").join(experiment.name())
}

/// Runs a validated config and persists its artifacts and manifest.
pub fn execute(experiment: Experiment, cfg: &ExperimentConfig) -> std::io::Result<RunReport> {
    let out_dir = cfg.out.clone().unwrap_or_else(|| default_out_dir(experiment));
    let mut manifest = RunManifest::new(experiment, cfg, now());
    let result = run_experiment(experiment, cfg);
    manifest.finished = now();
    let (exit_code, outcome) = match result {
        Ok(o) => {
            manifest.checks = o.checks.iter().map(Into::into).collect();
            manifest.status = if o.divergence.is_some() {
                RunStatus::Divergence
            } else if o.passed() {
                RunStatus::Passed
            } else {
                RunStatus::CheckFailure
            };
            manifest.message = o.divergence.clone();
            (manifest.status.exit_code(), Some(o))
        }
        Err(e) => {
            manifest.message = Some(e.to_string());
            let code = match e {
                RunError::Config(_) => EXIT_CONFIG,
                RunError::Divergence(_) => {
                    manifest.status = RunStatus::Divergence;
                    EXIT_DIVERGENCE
                }
                RunError::Numerical(_) => EXIT_CHECK,
            };
            (code, None)
        }
    };
    let artifacts = outcome.as_ref().map_or(&[][..], |o| &o.artifacts[..]);
    persist(&out_dir, &mut manifest, artifacts, &cfg.to_toml())?;
    Ok(RunReport {
        exit_code,
        out_dir,
        manifest,
        outcome,
    })
}

/// Full command: load, run, persist. Returns the process exit code.
pub fn run(experiment: Experiment, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> i32 {
    let cfg = match load(experiment, config, out, seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    match execute(experiment, &cfg) {
        Ok(report) => {
            if let Some(o) = &report.outcome {
                for c in &o.checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
            }
            if let Some(m) = &report.manifest.message {
                eprintln!("{m}");
            }
            println!("wrote {}", report.out_dir.display());
            report.exit_code
        }
        Err(e) => {
            eprintln!("cannot write results: {e}");
            EXIT_CONFIG
        }
    }
}
