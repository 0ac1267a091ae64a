//! Run manifests: command, resolved config, seed, version and digests.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult, Outcome};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub out: PathBuf,
    /// Everything the run depends on besides the input files.
    pub config: serde_json::Value,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file (relative to `out`) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, out: &Path, outcome: &Outcome) -> CliResult<Self> {
        let mut inputs = BTreeMap::new();
        for p in &outcome.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let mut outputs = BTreeMap::new();
        for p in &outcome.outputs {
            outputs.insert(p.display().to_string(), sha256_file(&out.join(p))?);
        }
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            out: out.to_path_buf(),
            config,
            inputs,
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(CliError::runtime)?;
        std::fs::write(dir.join(MANIFEST_NAME), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid manifest {}: {e}", path.display())))
    }

    pub fn config_as<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| CliError::usage(format!("manifest config does not fit command {}: {e}", self.command)))
    }

    /// Input files must still hash to the recorded digests.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for (path, digest) in &self.inputs {
            let now = sha256_file(Path::new(path))
                .map_err(|e| CliError::usage(format!("manifest input {path} unreadable: {e}")))?;
            if &now != digest {
                return Err(CliError::usage(format!("manifest input {path} changed since the run")));
            }
        }
        Ok(())
    }
}
