//! Registry of experiment kinds.  Each kind decodes and validates its own
//! parameters into a plan before anything is computed.

mod dtn;
mod lemmas;
mod probe;
mod spectra;
mod stability;

use crate::config::ExperimentConfig;
use crate::context::RunContext;
use crate::error::CliResult;

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn needs_grid(&self) -> bool {
        true
    }
    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>>;
}

/// A validated experiment, ready to run.
pub trait Plan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()>;
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(spectra::Eig),
        Box::new(spectra::Weyl),
        Box::new(dtn::Dtn),
        Box::new(probe::Identity),
        Box::new(probe::Recover),
        Box::new(stability::Stability),
        Box::new(stability::AsymptNoise),
        Box::new(lemmas::Lemmas),
    ]
}

pub fn experiment_by_name(name: &str) -> Option<Box<dyn Experiment>> {
    registry().into_iter().find(|e| e.name() == name)
}

/// One line per kind, `name: description`.
pub fn catalogue() -> String {
    registry()
        .iter()
        .map(|e| format!("  {}: {}", e.name(), e.description()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn default_true() -> bool {
    true
}
