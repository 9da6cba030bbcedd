//! Run manifests: enough provenance (tool version, config digest, seeds,
//! thread cap) to reproduce any output bit-identically.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub threads: Option<String>,
}

pub fn digest<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn write(
    path: impl AsRef<Path>,
    command: &str,
    config_sha256: String,
    seeds: Vec<u64>,
) -> biofuse_core::Result<()> {
    let manifest = Manifest {
        tool: "biofuse",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_sha256,
        seeds,
        threads: std::env::var("BIOFUSE_THREADS").ok(),
    };
    biofuse_core::io::write_json_atomic(path, &manifest)
}
