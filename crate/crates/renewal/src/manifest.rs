//! Run manifests: enough metadata to re-run a command and byte-reproduce its
//! outputs (deterministic numerics, fixed iteration orders, sorted maps).

use crate::error::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub subcommand: String,
    /// sha256 of the raw config file bytes.
    pub config_sha256: String,
    /// All numeric and textual parameters, sorted by name.
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_text: &str) -> Self {
        let mut h = Sha256::new();
        h.update(config_text.as_bytes());
        Self {
            artifact_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            config_sha256: format!("{:x}", h.finalize()),
            parameters: BTreeMap::new(),
            seed: None,
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    /// Records an output file by name, relative to the run directory, so two
    /// runs of the same command produce identical manifests wherever they land.
    pub fn output(&mut self, path: &Path) -> &mut Self {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        self.outputs.push(name.unwrap_or_else(|| path.display().to_string()));
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_hash_identically() {
        let a = RunManifest::new("simulate", "config text");
        let b = RunManifest::new("simulate", "config text");
        assert_eq!(a.config_sha256, b.config_sha256);
        let c = RunManifest::new("simulate", "other text");
        assert_ne!(a.config_sha256, c.config_sha256);
    }

    #[test]
    fn parameters_serialize_sorted() {
        let mut m = RunManifest::new("sweep", "x");
        m.param("zeta", 1).param("alpha", 2);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.find("alpha").unwrap() < json.find("zeta").unwrap());
    }
}
