//! Batch experiment runner: configuration, replicate-parallel execution
//! and the result files.

mod config;
mod experiments;
mod output;

pub use config::{ConfigError, Experiment, ExperimentConfig, Overrides, DEFAULT_SEED};
pub use experiments::{execute, Check, ExperimentOutput, Num};
pub use output::{git_object_id, write_outputs, Manifest, OutputFile};

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::seed::{replicate_rng, stream_id, SimRng};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("config {path} is not valid JSON: {source}")]
    ParseConfig { path: PathBuf, source: serde_json::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot start the worker pool: {0}")]
    Pool(String),
    #[error("experiment failed: {0}")]
    Execution(String),
}

macro_rules! execution_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Execution(e.to_string())
            }
        }
    )*};
}

execution_errors!(
    crate::env::EnvError,
    crate::walk::WalkError,
    crate::chains::ChainError,
    crate::operators::OperatorError,
    crate::sde::SdeError,
    crate::stats::StatsError
);

/// Reads the config file, if any, and applies the overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let doc = match path {
        None => None,
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::ReadConfig { path: p.into(), source })?;
            let v = serde_json::from_str(&text).map_err(|source| CliError::ParseConfig { path: p.into(), source })?;
            Some(v)
        }
    };
    Ok(ExperimentConfig::resolve(doc.as_ref(), overrides)?)
}

/// A named random stream as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamRecord {
    pub name: String,
    pub id: u64,
    pub replicates: usize,
}

/// Replicate-parallel executor. Replicate `i` of stream `s` always draws
/// from `replicate_rng(master, stream_id(s), i)` and results are collected
/// in replicate order, so outputs do not depend on the thread count.
pub struct Runner {
    pool: rayon::ThreadPool,
    master: u64,
    prefix: String,
    streams: Mutex<Vec<StreamRecord>>,
}

impl Runner {
    pub fn new(experiment: Experiment, master: u64, threads: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?;
        Ok(Self { pool, master, prefix: experiment.name().to_string(), streams: Mutex::new(Vec::new()) })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn streams(&self) -> Vec<StreamRecord> {
        self.streams.lock().expect("stream log").clone()
    }

    /// Runs `f` once per replicate of the named stream.
    pub fn replicates<T, F>(&self, stream: &str, reps: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut SimRng) -> T + Sync + Send,
    {
        let name = format!("{}/{stream}", self.prefix);
        let id = stream_id(&name);
        self.streams.lock().expect("stream log").push(StreamRecord { name, id, replicates: reps });
        let master = self.master;
        self.pool.install(|| (0..reps).into_par_iter().map(|i| f(&mut replicate_rng(master, id, i as u64))).collect())
    }

    /// Fallible variant; the first error in replicate order wins.
    pub fn try_replicates<T, E, F>(&self, stream: &str, reps: usize, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        E: Send + Into<CliError>,
        F: Fn(&mut SimRng) -> Result<T, E> + Sync + Send,
    {
        self.replicates(stream, reps, f).into_iter().map(|r| r.map_err(Into::into)).collect()
    }
}

/// Outcome of [`run`].
#[derive(Debug)]
pub struct RunOutcome {
    pub output: ExperimentOutput,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.output.passed()
    }

    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            2
        }
    }
}

/// Executes the configured experiment and writes `results.csv`,
/// `report.json` and `manifest.json` into its output directory.
pub fn run(config: &ExperimentConfig, threads: usize) -> Result<RunOutcome, CliError> {
    let start = std::time::Instant::now();
    let runner = Runner::new(config.experiment, config.seed, threads)?;
    let output = execute(config, &runner)?;
    let manifest = write_outputs(config, &runner, &output, start.elapsed().as_secs_f64())?;
    Ok(RunOutcome { output, manifest })
}
