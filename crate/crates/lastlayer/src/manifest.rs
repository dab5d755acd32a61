//! Run manifests and content hashing.
//!
//! Every pipeline stage records what went in: the exact configuration, the
//! seeds, and a sha256 content hash of every input file or in-memory dataset.
//! The hash of that record (the *inputs hash*) is embedded in every artifact
//! the stage writes, so downstream stages can verify lineage and a rerun with
//! identical inputs yields byte-identical artifacts. Wall-clock timestamps are
//! stored for the human reader but excluded from the hash.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex sha256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hex sha256 of a file's contents (streamed).
pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(digest: &[u8]) -> String {
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Version of the manifest schema itself.
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Record of one pipeline stage invocation.
///
/// `config` is an arbitrary JSON snapshot of the effective configuration;
/// `inputs` maps a role name ("train-images", "params", ...) to the sha256 of
/// that input; `artifact_versions` pins the on-disk format versions of
/// whatever the stage writes. All of those feed [`RunManifest::inputs_hash`].
/// `outputs` and `created_at_unix` are informational only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub artifact_versions: BTreeMap<String, u32>,
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub created_at_unix: Option<u64>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifact_versions: BTreeMap::new(),
            outputs: BTreeMap::new(),
            created_at_unix: None,
        }
    }

    pub fn seed(&mut self, name: impl Into<String>, seed: u64) -> &mut Self {
        self.seeds.insert(name.into(), seed);
        self
    }

    pub fn input(&mut self, name: impl Into<String>, sha256: impl Into<String>) -> &mut Self {
        self.inputs.insert(name.into(), sha256.into());
        self
    }

    pub fn artifact_version(&mut self, name: impl Into<String>, version: u32) -> &mut Self {
        self.artifact_versions.insert(name.into(), version);
        self
    }

    pub fn output(&mut self, name: impl Into<String>, sha256: impl Into<String>) -> &mut Self {
        self.outputs.insert(name.into(), sha256.into());
        self
    }

    /// Deterministic digest of everything that determines the run's outputs.
    ///
    /// Hashes the canonical JSON of (schema_version, command, config, seeds,
    /// inputs, artifact_versions): struct field order is fixed and the maps
    /// are BTreeMaps, so the encoding is unique. Timestamps and output hashes
    /// are deliberately excluded — reruns with the same inputs must produce
    /// the same inputs hash.
    pub fn inputs_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            schema_version: u32,
            command: &'a str,
            config: &'a serde_json::Value,
            seeds: &'a BTreeMap<String, u64>,
            inputs: &'a BTreeMap<String, String>,
            artifact_versions: &'a BTreeMap<String, u32>,
        }
        let canonical = serde_json::to_vec(&Hashed {
            schema_version: self.schema_version,
            command: &self.command,
            config: &self.config,
            seeds: &self.seeds,
            inputs: &self.inputs,
            artifact_versions: &self.artifact_versions,
        })
        .expect("manifest serialization cannot fail");
        sha256_hex(&canonical)
    }

    /// Stamp the wall-clock time. Call after hashing-relevant fields are set;
    /// has no effect on [`inputs_hash`].
    pub fn stamp(&mut self) -> &mut Self {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.created_at_unix = Some(now);
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display(), e.to_string()))
    }
}
