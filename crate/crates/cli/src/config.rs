//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use borglev_core::grid::GridParams;
use borglev_core::{GridSpec, PotentialSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Top-level layout shared by every experiment kind; `params` is decoded by
/// the experiment itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub grid: Option<GridParams>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let canonical: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))?;
        let hash = sha256_hex(canonical.to_string().as_bytes());
        Ok((cfg, hash))
    }

    pub fn grid(&self) -> CliResult<GridSpec> {
        let p = self
            .grid
            .ok_or_else(|| CliError::Validation("this experiment needs a `grid` section".into()))?;
        GridSpec::try_from(p).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn params<T: DeserializeOwned>(&self) -> CliResult<T> {
        let v = if self.params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            self.params.clone()
        };
        serde_json::from_value(v).map_err(|e| CliError::Validation(format!("params: {e}")))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Validates a potential specification and mixes the run seed into its
/// random components.
pub fn prepare_potential(spec: &PotentialSpec, run_seed: u64) -> CliResult<PotentialSpec> {
    spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(reseed(spec, run_seed))
}

fn reseed(spec: &PotentialSpec, run_seed: u64) -> PotentialSpec {
    if run_seed == 0 {
        return spec.clone();
    }
    match spec {
        PotentialSpec::Random { seed, smoothness, amp } => PotentialSpec::Random {
            seed: seed ^ run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            smoothness: *smoothness,
            amp: *amp,
        },
        PotentialSpec::Sum { base, perturbation, t } => PotentialSpec::Sum {
            base: Box::new(reseed(base, run_seed)),
            perturbation: Box::new(reseed(perturbation, run_seed)),
            t: *t,
        },
        other => other.clone(),
    }
}

pub fn require(cond: bool, msg: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Validation(msg.into()))
    }
}
