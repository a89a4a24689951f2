use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of one command invocation: enough to rerun it and get the same
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub model_format_version: u32,
    pub seeds: BTreeMap<String, u64>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub config_sha256: String,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> anyhow::Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_sha256 = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            model_format_version: hashtag_privacy::forest::MODEL_VERSION,
            seeds: BTreeMap::new(),
            config,
            config_sha256,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let mut hasher = Sha256::new();
        if path.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            entries.sort();
            for entry in entries.iter().filter(|p| p.is_file()) {
                if entry.file_name().is_some_and(|n| n == "manifest.json") {
                    continue;
                }
                hasher.update(entry.file_name().unwrap_or_default().as_encoded_bytes());
                hasher.update(std::fs::read(entry)?);
            }
        } else {
            hasher.update(std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?);
        }
        let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    pub fn output(&mut self, name: &str) -> &mut Self {
        self.outputs.push(name.to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is plain data")
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::write(dir.join("manifest.json"), self.to_json() + "\n")?;
        Ok(())
    }
}
