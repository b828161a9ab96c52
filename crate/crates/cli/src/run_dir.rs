//! Run directory layout and `run.json` bookkeeping.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cosub::diagnostics::OccupancyWarning;
use cosub::model::Hyperparameters;
use cosub::simulate::SimConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const RUN_JSON: &str = "run.json";
pub const TRACE: &str = "trace.jsonl";
pub const LOG_JOINT: &str = "log_joint.csv";
pub const CONDITIONAL: &str = "conditional.jsonl";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub message: String,
}

/// Resolved settings of a fit; its hash identifies the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub choices: PathBuf,
    pub networks: PathBuf,
    pub network_format: String,
    pub choices_sha256: String,
    pub networks_sha256: String,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    /// Hash of the empirical or overridden similarity means.
    pub mu_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub status: Status,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub started_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<OccupancyWarning>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

pub fn hash_file(path: &Path, flag: &'static str) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Input {
        flag,
        source: io_to_lib(path, e),
    })?;
    Ok(sha256_hex(&bytes))
}

fn io_to_lib(path: &Path, e: std::io::Error) -> cosub::Error {
    cosub::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl RunMeta {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        RunMeta {
            command: command.to_string(),
            status: Status::Running,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
            started_unix: now_unix(),
            finished_unix: None,
            failure: None,
            simulation: None,
            fit: None,
            retained: None,
            warnings: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(RUN_JSON);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "{} is not a run directory (no {RUN_JSON}); create one with `cosub fit --out {}`",
                dir.display(),
                dir.display()
            )));
        }
        read_json(&path, "--run")
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(RUN_JSON), self)
    }

    pub fn finish(&mut self, dir: &Path, status: Status) -> CliResult<()> {
        self.status = status;
        self.finished_unix = Some(now_unix());
        self.save(dir)
    }

    /// The fit settings of a completed fit run.
    pub fn completed_fit(&self, dir: &Path) -> CliResult<&FitSettings> {
        match (&self.fit, self.status) {
            (Some(fit), Status::Completed) => Ok(fit),
            (Some(_), status) => Err(CliError::Usage(format!(
                "fit in {} has status {status:?}; rerun `cosub fit` to completion first",
                dir.display()
            ))),
            (None, _) => Err(CliError::Usage(format!(
                "{} holds a `{}` run, not a fit; run `cosub fit --out DIR` and pass that DIR",
                dir.display(),
                self.command
            ))),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Reads a JSON file; a missing file is reported against `flag`.
pub fn read_json<T: DeserializeOwned>(path: &Path, flag: &'static str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input {
        flag,
        source: io_to_lib(path, e),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        at: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|e| CliError::io(path, e))
}

/// Artifact body tagged with the run's seed and config hash.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub seed: u64,
    pub config_hash: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

/// Path of an artifact a later command needs; `hint` says how to make it.
pub fn require(dir: &Path, file: &str, hint: &str) -> CliResult<PathBuf> {
    let path = dir.join(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!(
            "missing {file} in {}; {hint}",
            dir.display()
        )))
    }
}
