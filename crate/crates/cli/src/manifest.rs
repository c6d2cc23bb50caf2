use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::export::{sha256_hex, Output};

/// Provenance record written next to every command's outputs.
///
/// `manifest_hash` covers the command, tool version, resolved configuration
/// and input hashes; JSON outputs carry it, and the manifest lists the
/// SHA-256 of every output file. The wall-clock time is excluded from the
/// hash so identical runs agree.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Value,
    pub input_hashes: BTreeMap<String, String>,
    pub manifest_hash: String,
    pub outputs: BTreeMap<String, String>,
    pub extra: BTreeMap<String, Value>,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct Hashed<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a Value,
    input_hashes: &'a BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, input_hashes: BTreeMap<String, String>) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let hashed = Hashed {
            command,
            tool_version: &tool_version,
            config: &config,
            input_hashes: &input_hashes,
        };
        let manifest_hash =
            sha256_hex(&serde_json::to_vec(&hashed).expect("manifest serializes"));
        Self {
            command: command.to_string(),
            tool_version,
            config,
            input_hashes,
            manifest_hash,
            outputs: BTreeMap::new(),
            extra: BTreeMap::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn record(&mut self, out: &Output) {
        self.outputs.insert(out.name.clone(), sha256_hex(&out.bytes));
    }
}
