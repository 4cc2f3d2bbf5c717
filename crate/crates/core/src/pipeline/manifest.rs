use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::report::write_text;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run: the configuration, the master seed,
/// and the checksum of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, serde_json::Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    fn fresh(config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Record a finished stage in `<out>/manifest.json`, keeping earlier stages.
    pub fn record_stage(
        config: &RunConfig,
        stage: &str,
        inputs: &[&Path],
        details: serde_json::Value,
    ) -> Result<Manifest> {
        let path = config.out.join(MANIFEST_FILE);
        let mut manifest = match Manifest::load(&path) {
            Ok(m) if m.config == *config => m,
            _ => Manifest::fresh(config),
        };
        for input in inputs {
            manifest
                .inputs
                .insert(input.display().to_string(), sha256_file(input)?);
        }
        manifest.stages.insert(stage.to_string(), details);
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        write_text(&path, &(body + "\n"))?;
        Ok(manifest)
    }
}
