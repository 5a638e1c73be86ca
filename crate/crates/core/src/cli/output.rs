use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{CliError, ExperimentConfig, ExperimentOutput, Runner, StreamRecord};

/// Object id of `bytes` as a git blob in a sha256 repository:
/// `sha256("blob <len>\0" ++ bytes)`.
pub fn git_object_id(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub object_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub master_seed: u64,
    pub seed_rule: &'static str,
    pub streams: Vec<StreamRecord>,
    pub outputs: Vec<OutputFile>,
    /// `sha256` over the `"<object id>  <file>\n"` lines of `outputs`.
    pub content_hash: String,
    pub passed: bool,
    pub elapsed_seconds: f64,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputFile, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
    Ok(OutputFile { file: name.into(), bytes: bytes.len(), object_id: git_object_id(bytes) })
}

pub fn write_outputs(
    config: &ExperimentConfig,
    runner: &Runner,
    output: &ExperimentOutput,
    elapsed_seconds: f64,
) -> Result<Manifest, CliError> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.clone(), source })?;
    let report = json!({
        "experiment": config.experiment,
        "passed": output.passed(),
        "checks": output.checks,
        "details": output.details,
    });
    let report = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let outputs = vec![write(dir, "results.csv", output.csv.as_bytes())?, write(dir, "report.json", report.as_bytes())?];
    let mut h = Sha256::new();
    for o in &outputs {
        h.update(format!("{}  {}\n", o.object_id, o.file).as_bytes());
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        threads: runner.threads(),
        master_seed: config.seed,
        seed_rule: "replicate i of stream s uses seed mix(master_seed, fnv1a64(s), i)",
        streams: runner.streams(),
        outputs,
        content_hash: format!("{:x}", h.finalize()),
        passed: output.passed(),
        elapsed_seconds,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(dir, "manifest.json", text.as_bytes())?;
    Ok(manifest)
}
