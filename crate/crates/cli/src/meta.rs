//! Provenance attached to every artifact: the config hash, the seeds and
//! digests of the inputs. No wall-clock fields, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON of the parsed command line.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl RunMeta {
    pub fn new(command: &'static str, config_hash: &str, seeds: Vec<u64>) -> Self {
        RunMeta {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: config_hash.to_string(),
            seeds,
            inputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }
}

pub fn processing(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Processing(e.into())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(processing)?;
    }
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(processing)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// CSV body plus `<path>.meta.json`.
pub fn write_csv(path: &Path, body: &str, meta: &RunMeta) -> CliResult<()> {
    write_file(path, body.as_bytes())?;
    write_json_raw(&sidecar_path(path), meta)
}

fn write_json_raw<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(processing)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// `{"meta": ..., key: value}`.
pub fn write_json<T: Serialize>(path: &Path, key: &str, value: &T, meta: &RunMeta) -> CliResult<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("meta".into(), serde_json::to_value(meta).map_err(processing)?);
    obj.insert(key.into(), serde_json::to_value(value).map_err(processing)?);
    write_json_raw(path, &Value::Object(obj))
}
