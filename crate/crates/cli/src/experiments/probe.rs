use borglev_core::probe::{
    make_geometry, reconstruct_potential, verify_identity, write_samples_csv, ProbeGeometry, ProbeSource,
    ReconstructionOptions,
};
use borglev_core::{GridSpec, PotentialSpec};
use serde::{Deserialize, Serialize};

use super::{Experiment, Plan};
use crate::config::{prepare_potential, require, ExperimentConfig};
use crate::context::RunContext;
use crate::error::CliResult;

pub struct Identity;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityParams {
    potential: PotentialSpec,
    tau: f64,
    xi: Vec<[f64; 2]>,
}

struct IdentityPlan {
    grid: GridSpec,
    params: IdentityParams,
    geoms: Vec<ProbeGeometry>,
}

#[derive(Serialize)]
struct IdentityRow {
    xi1: f64,
    xi2: f64,
    tau: f64,
    lhs_re: f64,
    lhs_im: f64,
    first_re: f64,
    first_im: f64,
    fourier_re: f64,
    fourier_im: f64,
    remainder_re: f64,
    remainder_im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct IdentitySummary {
    tau: f64,
    probes: usize,
    max_residual: f64,
}

impl Experiment for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn description(&self) -> &'static str {
        "Both sides of the boundary pairing identity for complex plane waves"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: IdentityParams = cfg.params()?;
        prepare_potential(&params.potential, 0)?;
        require(!params.xi.is_empty(), "xi must list at least one frequency")?;
        let geoms = params
            .xi
            .iter()
            .map(|xi| make_geometry(*xi, params.tau))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| crate::error::CliError::Validation(e.to_string()))?;
        Ok(Box::new(IdentityPlan { grid, params, geoms }))
    }
}

impl Plan for IdentityPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let q = ctx.potential(&self.params.potential, &self.grid)?;
        let mut rows = Vec::new();
        for g in &self.geoms {
            let r = ctx.stage("identity", || verify_identity(&q, g, &self.grid))?;
            rows.push(IdentityRow {
                xi1: g.xi[0],
                xi2: g.xi[1],
                tau: g.tau,
                lhs_re: r.lhs.re,
                lhs_im: r.lhs.im,
                first_re: r.first_term.re,
                first_im: r.first_term.im,
                fourier_re: r.fourier_term.re,
                fourier_im: r.fourier_term.im,
                remainder_re: r.remainder.re,
                remainder_im: r.remainder.im,
                residual: r.residual,
            });
        }
        ctx.write_csv("identity.csv", &rows)?;
        let summary = IdentitySummary {
            tau: self.params.tau,
            probes: rows.len(),
            max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        };
        ctx.write_json("summary.json", &summary)
    }
}

pub struct Recover;

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SourceConfig {
    Direct,
    Spectral { k: usize, n_drop: usize },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecoverParams {
    potential: PotentialSpec,
    taus: Vec<f64>,
    #[serde(default = "default_source")]
    source: SourceConfig,
    #[serde(default = "default_multiplier")]
    cutoff_multiplier: f64,
    #[serde(default = "default_min_modes")]
    min_modes_per_axis: usize,
}

fn default_source() -> SourceConfig {
    SourceConfig::Direct
}

fn default_multiplier() -> f64 {
    ReconstructionOptions::default().cutoff_multiplier
}

fn default_min_modes() -> usize {
    ReconstructionOptions::default().min_modes_per_axis
}

struct RecoverPlan {
    grid: GridSpec,
    params: RecoverParams,
}

#[derive(Serialize)]
struct RecoverRow {
    tau: f64,
    cutoff: f64,
    modes: usize,
    source: String,
    l2_error: f64,
    lowfreq_residual: f64,
    highfreq_truncation: f64,
    remainder_fit: f64,
}

#[derive(Serialize)]
struct RecoverSummary {
    potential: String,
    cutoff_multiplier: f64,
    min_modes_per_axis: usize,
    errors: Vec<f64>,
    strictly_decreasing: bool,
}

impl Experiment for Recover {
    fn name(&self) -> &'static str {
        "recover"
    }

    fn description(&self) -> &'static str {
        "Low-pass reconstruction of the potential from boundary probes"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: RecoverParams = cfg.params()?;
        prepare_potential(&params.potential, 0)?;
        require(!params.taus.is_empty(), "taus must not be empty")?;
        require(params.taus.iter().all(|t| *t > 1.0), "every tau must exceed 1")?;
        require(params.cutoff_multiplier > 0.0, "cutoff_multiplier must be positive")?;
        if let SourceConfig::Spectral { k, n_drop } = params.source {
            require(k <= grid.n_int() && n_drop < k, format!("need n_drop < k <= {}", grid.n_int()))?;
        }
        Ok(Box::new(RecoverPlan { grid, params }))
    }
}

impl Plan for RecoverPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let q = ctx.potential(&p.potential, &self.grid)?;
        let source = match p.source {
            SourceConfig::Direct => ProbeSource::Direct,
            SourceConfig::Spectral { k, n_drop } => ProbeSource::Spectral { k, n_drop },
        };
        let opts = ReconstructionOptions {
            cutoff_multiplier: p.cutoff_multiplier,
            min_modes_per_axis: p.min_modes_per_axis,
        };
        let mut rows = Vec::new();
        for (i, &tau) in p.taus.iter().enumerate() {
            let (est, report) = ctx.stage("reconstruct", || reconstruct_potential(&q, tau, &self.grid, source, &opts))?;
            let path = ctx.path(&format!("estimate_{i}.csv"));
            write_field(&path, &self.grid, &est.values, &q.values)?;
            rows.push(RecoverRow {
                tau,
                cutoff: report.cutoff,
                modes: report.modes,
                source: report.source,
                l2_error: report.l2_error,
                lowfreq_residual: report.lowfreq_residual,
                highfreq_truncation: report.highfreq_truncation,
                remainder_fit: report.remainder_fit,
            });
        }
        if let Some(&tau) = p.taus.first() {
            let samples = ctx.stage("fourier samples", || {
                let xi = [2.0 * std::f64::consts::PI / self.grid.lx(), 0.0];
                borglev_core::probe::recover_fourier(&q, xi, tau, &self.grid, source).map(|s| vec![s])
            })?;
            let path = ctx.path("samples.csv");
            ctx.stage("write samples", || write_samples_csv(&samples, &path))?;
        }
        ctx.write_csv("recover.csv", &rows)?;
        let errors: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
        let summary = RecoverSummary {
            potential: q.id.clone(),
            cutoff_multiplier: p.cutoff_multiplier,
            min_modes_per_axis: p.min_modes_per_axis,
            strictly_decreasing: errors.windows(2).all(|w| w[1] < w[0]),
            errors,
        };
        ctx.write_json("summary.json", &summary)
    }
}

fn write_field(path: &std::path::Path, grid: &GridSpec, est: &[f64], truth: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::error::CliError::Validation(e.to_string()))?;
    let io = |e: csv::Error| crate::error::CliError::Validation(e.to_string());
    w.write_record(["x", "y", "estimate", "truth"]).map_err(io)?;
    for (p, (e, t)) in est.iter().zip(truth).enumerate() {
        let (x, y) = grid.interior_point(p);
        w.write_record([x.to_string(), y.to_string(), e.to_string(), t.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
