//! Run manifest: what was run, on what, and hashes of every output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::write_file;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub config_sha256: String,
    pub panel_sha256: String,
    /// Output path relative to the run directory -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_toml: &str, panel_digest: &str) -> Self {
        Self {
            command: command.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            panel_sha256: panel_digest.into(),
            outputs: BTreeMap::new(),
        }
    }

    /// Writes `bytes` under `root` and records its hash.
    pub fn emit(&mut self, root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
        write_file(&root.join(rel), bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(&self, root: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_file(&root.join("run_manifest.json"), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
