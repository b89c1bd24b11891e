//! Library side of the `convoy` command: scenario files, the three commands
//! and their output files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::{ExitStatus, Options, RunReport};
pub use config::{ConfigError, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Solvability,
    Stability,
}

/// Outcome of one invocation on one config file.
#[derive(Debug)]
pub enum Outcome {
    Report(RunReport),
    ConfigError(ConfigError),
}

impl Outcome {
    pub fn status(&self) -> ExitStatus {
        match self {
            Outcome::Report(r) => r.status,
            Outcome::ConfigError(_) => ExitStatus::Config,
        }
    }
}

pub fn run(command: Command, config: &Path, opts: &Options) -> Outcome {
    let cfg = match config::load(config) {
        Ok(c) => c,
        Err(e) => return Outcome::ConfigError(e),
    };
    log::info!("running {command:?} on {}", config.display());
    Outcome::Report(match command {
        Command::Simulate => commands::simulate(&cfg, opts),
        Command::Solvability => commands::solvability(&cfg, opts),
        Command::Stability => commands::stability(&cfg, opts),
    })
}

/// Runs every config matching `pattern` on its own thread. Each scenario
/// writes under `<out>/<config stem>` so outputs never collide.
pub fn run_batch(
    command: Command,
    pattern: &str,
    opts: &Options,
) -> Result<Vec<(PathBuf, Outcome)>, String> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| format!("invalid batch pattern {pattern}: {e}"))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(format!("no config files match {pattern}"));
    }
    let base = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("convoy_out"));
    let outcomes = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
                let opts = Options {
                    out: Some(base.join(stem)),
                    ..opts.clone()
                };
                s.spawn(move || run(command, p, &opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect::<Vec<_>>()
    });
    Ok(paths.into_iter().zip(outcomes).collect())
}
