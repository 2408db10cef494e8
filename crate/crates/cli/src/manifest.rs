use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::cache::CacheEvent;
use crate::error::CliResult;

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub borglev: &'static str,
    pub rustc_edition: &'static str,
}

/// Record of one run, written as `manifest.json` next to the outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub versions: Versions,
    pub wall_time_s: f64,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
    pub cache: Vec<CacheEvent>,
    pub complete: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(kind: &str, config_hash: &str, seed: u64, threads: Option<usize>) -> Self {
        Self {
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            threads,
            versions: Versions {
                borglev: env!("CARGO_PKG_VERSION"),
                rustc_edition: "2021",
            },
            wall_time_s: 0.0,
            stages: Vec::new(),
            outputs: Vec::new(),
            cache: Vec::new(),
            complete: false,
            error: None,
        }
    }

    pub fn finish(&mut self, started: Instant, error: Option<String>) {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self.complete = error.is_none();
        self.error = error;
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}
