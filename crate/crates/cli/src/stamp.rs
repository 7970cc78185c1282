//! Stage hashes and the stamp files that chain them. A stage's hash covers
//! its own settings and its upstream stage's hash, so a change anywhere
//! upstream invalidates everything below it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub hash: String,
}

/// SHA-256 over the compact JSON of each part, newline separated. Object keys
/// serialize sorted, so equal values hash equally.
pub fn hash_parts(parts: &[Value]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(serde_json::to_string(p).expect("json values serialize").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config sections serialize")
}

pub fn prepare_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    Ok(hash_parts(&[
        Value::from("prepare"),
        Value::from(file_sha256(&cfg.manifest_path)?),
        json(&cfg.split),
        json(&cfg.preprocess.gaussian),
    ]))
}

/// Covers everything that shapes the trained translator.
pub fn cyclegan_hash(cfg: &ExperimentConfig, prepare: &str) -> String {
    let c = &cfg.cyclegan;
    hash_parts(&[
        Value::from("train-cyclegan"),
        Value::from(prepare),
        json(&c.generator_spec()),
        json(&c.discriminator_spec()),
        json(&c.weights),
        json(&(c.epochs, c.steps, c.batch_size, c.learning_rate, c.buffer_capacity, c.seed)),
    ])
}

pub fn generate_hash(cfg: &ExperimentConfig, cyclegan: &str) -> String {
    hash_parts(&[
        Value::from("generate"),
        Value::from(cyclegan),
        json(&(cfg.cyclegan.ratio, cfg.cyclegan.seed)),
    ])
}

pub fn stamp_path(cache_dir: &Path, stage: &str) -> PathBuf {
    cache_dir.join("stamps").join(format!("{stage}.json"))
}

pub fn write_stamp(cache_dir: &Path, stage: &str, hash: &str) -> Result<(), CliError> {
    let path = stamp_path(cache_dir, stage);
    let stamp = Stamp {
        stage: stage.to_string(),
        hash: hash.to_string(),
    };
    crate::write_file(&path, serde_json::to_string_pretty(&stamp).expect("stamp serializes"))
}

pub fn read_stamp(cache_dir: &Path, stage: &str) -> Option<Stamp> {
    let text = std::fs::read_to_string(stamp_path(cache_dir, stage)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Fails unless `stage` completed under exactly `expected`.
pub fn require_stamp(cache_dir: &Path, stage: &str, expected: &str) -> Result<(), CliError> {
    match read_stamp(cache_dir, stage) {
        None => Err(CliError::Data(format!(
            "`{stage}` has not been run for cache {}; run `ctaug {stage}` first",
            cache_dir.display()
        ))),
        Some(s) if s.hash != expected => Err(CliError::Data(format!(
            "`{stage}` outputs in {} come from a different configuration (hash {}, expected {expected}); rerun `ctaug {stage}`",
            cache_dir.display(),
            s.hash
        ))),
        Some(_) => Ok(()),
    }
}
