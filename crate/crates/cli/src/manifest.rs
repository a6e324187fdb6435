//! Run manifests: every output directory gets a `manifest.json` recording
//! the command, input file digests, the fully resolved configuration, the
//! seed, artifact versions, and wall-clock duration. Reruns with the same
//! inputs and config are expected to differ in `duration_s` only.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use walkflow::io::RunConfig;
use walkflow::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub inputs: BTreeMap<String, InputDigest>,
    pub config: Value,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub duration_s: f64,
}

pub fn file_digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", hasher.finalize()),
    })
}

/// The resolved configuration as recorded in manifests. The averaging step
/// rule is fixed in code, so it is echoed here rather than configured.
pub fn config_value(config: &RunConfig) -> Result<Value> {
    let mut value = serde_json::to_value(config)
        .map_err(|e| Error::InvalidInput(format!("configuration not serializable: {e}")))?;
    value["solver"]["step_rule"] = Value::String("1/k".into());
    Ok(value)
}

pub fn config_from_value(value: &Value) -> Result<RunConfig> {
    let mut value = value.clone();
    if let Some(solver) = value.get_mut("solver").and_then(Value::as_object_mut) {
        solver.remove("step_rule");
    }
    let config: RunConfig = serde_json::from_value(value)
        .map_err(|e| Error::InvalidInput(format!("manifest config not readable: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("walkflow".into(), env!("CARGO_PKG_VERSION").into()),
        ("formats".into(), "1".into()),
    ])
}

pub fn write(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest not serializable: {e}")))?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

pub fn read(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::InvalidInput(format!("no run manifest at {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("invalid manifest {}: {e}", path.display())))
}
