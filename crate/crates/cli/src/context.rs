use std::path::{Path, PathBuf};
use std::time::Instant;

use borglev_core::{GridSpec, Potential, PotentialSpec, SpectralData};
use serde::Serialize;

use crate::cache::SpectralCache;
use crate::config::prepare_potential;
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, StageTiming};

/// State shared by the stages of one run.
pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
    pub cache: SpectralCache,
    pub manifest: RunManifest,
}

impl RunContext {
    /// Runs `f` as a named stage, recording its duration and tagging any
    /// library error with the stage name.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> borglev_core::Result<T>) -> CliResult<T> {
        let t = Instant::now();
        let r = f().map_err(|e| CliError::in_stage(name, e));
        self.manifest.stages.push(StageTiming {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }

    pub fn potential(&mut self, spec: &PotentialSpec, grid: &GridSpec) -> CliResult<Potential> {
        let spec = prepare_potential(spec, self.seed)?;
        self.stage("build potential", || spec.build(grid))
    }

    pub fn spectral(&mut self, spec: &PotentialSpec, grid: &GridSpec, k: usize) -> CliResult<SpectralData> {
        let spec = prepare_potential(spec, self.seed)?;
        let t = Instant::now();
        let (sd, event) = self.cache.get_or_compute(&spec, grid, k)?;
        self.manifest.stages.push(StageTiming {
            name: format!("spectral data ({})", event.potential),
            seconds: t.elapsed().as_secs_f64(),
        });
        self.manifest.cache.push(event);
        Ok(sd)
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    pub fn record(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let path = self.path(name);
        write_rows(&path, rows)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Validation(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
