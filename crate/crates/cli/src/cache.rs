//! Content-addressed on-disk cache of spectral data.

use std::path::{Path, PathBuf};

use borglev_core::grid::GridParams;
use borglev_core::{solve_eigen, GridSpec, PotentialSpec, SpectralData};
use serde::Serialize;

use crate::config::sha256_hex;
use crate::error::{CliError, CliResult};

pub const CACHE_ENV: &str = "BORGLEV_CACHE_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// An entry existed but failed hash verification and was rebuilt.
    Corrupt,
}

#[derive(Clone, Debug, Serialize)]
pub struct CacheEvent {
    pub key: String,
    pub potential: String,
    pub k: usize,
    pub outcome: CacheOutcome,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    format: u32,
    potential: &'a PotentialSpec,
    grid: GridParams,
    k: usize,
}

pub struct SpectralCache {
    dir: PathBuf,
}

impl SpectralCache {
    /// Uses `BORGLEV_CACHE_DIR` when set, otherwise `<out>/../.borglev-cache`.
    pub fn from_env(out: &Path) -> Self {
        let dir = match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => out.parent().unwrap_or(Path::new(".")).join(".borglev-cache"),
        };
        Self { dir }
    }

    pub fn key(spec: &PotentialSpec, grid: &GridSpec, k: usize) -> String {
        let material = KeyMaterial {
            format: 1,
            potential: spec,
            grid: grid.params(),
            k,
        };
        sha256_hex(serde_json::to_string(&material).expect("key material serialises").as_bytes())
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.json")), self.dir.join(format!("{key}.sha256")))
    }

    /// Loads a verified entry; `Ok(None)` when absent, `Err(())` when the
    /// stored hash does not match.
    fn load(&self, key: &str, grid: &GridSpec, k: usize) -> Result<Option<SpectralData>, ()> {
        let (data_path, hash_path) = self.paths(key);
        let (Ok(bytes), Ok(stored)) = (std::fs::read(&data_path), std::fs::read_to_string(&hash_path)) else {
            return if data_path.exists() || hash_path.exists() { Err(()) } else { Ok(None) };
        };
        if sha256_hex(&bytes) != stored.trim() {
            return Err(());
        }
        let sd: SpectralData = serde_json::from_slice(&bytes).map_err(|_| ())?;
        if &sd.grid != grid || sd.k() != k {
            return Err(());
        }
        Ok(Some(sd))
    }

    fn store(&self, key: &str, sd: &SpectralData) -> CliResult<()> {
        std::fs::create_dir_all(&self.dir)?;
        let bytes = serde_json::to_vec(sd).map_err(|e| CliError::Validation(e.to_string()))?;
        let (data_path, hash_path) = self.paths(key);
        let tmp = data_path.with_extension("json.tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &data_path)?;
        std::fs::write(hash_path, sha256_hex(&bytes))?;
        Ok(())
    }

    /// Returns the spectral data for `(spec, grid, k)`, computing and storing
    /// it on a miss.
    pub fn get_or_compute(&self, spec: &PotentialSpec, grid: &GridSpec, k: usize) -> CliResult<(SpectralData, CacheEvent)> {
        let key = Self::key(spec, grid, k);
        let mut event = CacheEvent {
            key: key.clone(),
            potential: spec.id(),
            k,
            outcome: CacheOutcome::Miss,
        };
        match self.load(&key, grid, k) {
            Ok(Some(sd)) => {
                event.outcome = CacheOutcome::Hit;
                return Ok((sd, event));
            }
            Ok(None) => {}
            Err(()) => event.outcome = CacheOutcome::Corrupt,
        }
        let q = spec.build(grid).map_err(|e| CliError::in_stage("build potential", e))?;
        let sd = solve_eigen(&q, grid, k).map_err(|e| CliError::in_stage("eigen", e))?;
        self.store(&key, &sd)?;
        Ok((sd, event))
    }
}
