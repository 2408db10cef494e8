use borglev_core::probe::ReconstructionOptions;
use borglev_core::stability::{
    asymptotic_noise_experiment, gamma_of, holder_experiment, write_asymptotic_csv, write_holder_csv,
    AsymptoticConfig, DeltaOptions, ExponentBundle, HolderOptions, HolderSummary,
};
use borglev_core::{GridSpec, PotentialSpec};
use serde::{Deserialize, Serialize};

use super::{Experiment, Plan};
use crate::config::{prepare_potential, require, ExperimentConfig};
use crate::context::RunContext;
use crate::error::{CliError, CliResult};

pub struct Stability;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilityParams {
    /// The family is `t * bump` against the zero potential.
    bump: PotentialSpec,
    ts: Vec<f64>,
    #[serde(default)]
    n_drop: usize,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default)]
    k: Option<usize>,
}

fn default_m() -> u32 {
    2
}

fn default_eps() -> f64 {
    0.25
}

struct StabilityPlan {
    grid: GridSpec,
    params: StabilityParams,
    k: usize,
    bundle: ExponentBundle,
}

#[derive(Serialize)]
struct StabilitySummary {
    #[serde(flatten)]
    fit: HolderSummary,
    gamma_variant: f64,
    fit_points: usize,
    degenerate: bool,
    monotone: bool,
    consistent: bool,
}

impl Experiment for Stability {
    fn name(&self) -> &'static str {
        "stability"
    }

    fn description(&self) -> &'static str {
        "Hölder fit of potential differences against spectral-data distances"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: StabilityParams = cfg.params()?;
        prepare_potential(&params.bump, 0)?;
        require(params.ts.len() >= 5, "the family needs at least 5 values of t")?;
        require(params.ts.iter().all(|t| t.is_finite() && *t != 0.0), "t values must be finite and nonzero")?;
        let bundle = gamma_of(2, params.m, params.eps).map_err(|e| CliError::Validation(e.to_string()))?;
        let k = params.k.unwrap_or(grid.n_int());
        require(k > params.n_drop + 20 && k <= grid.n_int(), format!("k must lie in {}..={}", params.n_drop + 21, grid.n_int()))?;
        Ok(Box::new(StabilityPlan { grid, params, k, bundle }))
    }
}

impl Plan for StabilityPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let zero = ctx.potential(&PotentialSpec::Zero, &self.grid)?;
        let mut family = Vec::new();
        for &t in &p.ts {
            let spec = PotentialSpec::Sum {
                base: Box::new(PotentialSpec::Zero),
                perturbation: Box::new(p.bump.clone()),
                t,
            };
            family.push((ctx.potential(&spec, &self.grid)?, zero.clone()));
        }
        let opts = HolderOptions {
            n_drop: p.n_drop,
            m: p.m,
            eps: p.eps,
            k: self.k,
            delta: DeltaOptions::default(),
        };
        let report = ctx.stage("holder fit", || holder_experiment(&family, &self.grid, &opts))?;
        let path = ctx.path("holder.csv");
        ctx.stage("write scatter", || write_holder_csv(&report, &path))?;
        let summary = StabilitySummary {
            fit: HolderSummary::from(&report),
            gamma_variant: self.bundle.gamma_variant,
            fit_points: report.fit_points,
            degenerate: report.degenerate,
            monotone: report.monotone,
            consistent: report.consistent(),
        };
        ctx.write_json("holder.json", &summary)
    }
}

pub struct AsymptNoise;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AsymptParams {
    q1: PotentialSpec,
    q2: PotentialSpec,
    deltas: Vec<f64>,
    #[serde(rename = "A")]
    a: f64,
    alpha: f64,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default)]
    k: Option<usize>,
    tau: f64,
    #[serde(default = "default_exact_drop")]
    exact_drop: usize,
    #[serde(default = "default_multiplier")]
    cutoff_multiplier: f64,
    #[serde(default = "default_min_modes")]
    min_modes_per_axis: usize,
}

fn default_exact_drop() -> usize {
    5
}

fn default_multiplier() -> f64 {
    6.0
}

fn default_min_modes() -> usize {
    3
}

struct AsymptPlan {
    grid: GridSpec,
    params: AsymptParams,
    k: usize,
}

impl Experiment for AsymptNoise {
    fn name(&self) -> &'static str {
        "asympt-noise"
    }

    fn description(&self) -> &'static str {
        "Recovery from worst-case corrupted spectral data"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: AsymptParams = cfg.params()?;
        prepare_potential(&params.q1, 0)?;
        prepare_potential(&params.q2, 0)?;
        let bundle = gamma_of(2, params.m, 0.25).map_err(|e| CliError::Validation(e.to_string()))?;
        require(
            params.alpha > bundle.alpha_threshold,
            format!("alpha = {} must exceed {}", params.alpha, bundle.alpha_threshold),
        )?;
        require(!params.deltas.is_empty(), "deltas must not be empty")?;
        require(params.deltas.iter().all(|d| *d >= 0.0), "deltas must be non-negative")?;
        require(params.a >= 0.0, "A must be non-negative")?;
        require(params.tau > 1.0, "tau must exceed 1")?;
        let k = params.k.unwrap_or(grid.n_int());
        require(k > params.exact_drop && k <= grid.n_int(), "k must exceed exact_drop and fit the grid")?;
        Ok(Box::new(AsymptPlan { grid, params, k }))
    }
}

impl Plan for AsymptPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let q1 = ctx.potential(&p.q1, &self.grid)?;
        let q2 = ctx.potential(&p.q2, &self.grid)?;
        let cfg = AsymptoticConfig {
            deltas: p.deltas.clone(),
            a: p.a,
            alpha: p.alpha,
            m: p.m,
            k: self.k,
            tau: p.tau,
            exact_drop: p.exact_drop,
            recon: ReconstructionOptions {
                cutoff_multiplier: p.cutoff_multiplier,
                min_modes_per_axis: p.min_modes_per_axis,
            },
        };
        let report = ctx.stage("noise sweep", || asymptotic_noise_experiment(&q1, &q2, &self.grid, &cfg))?;
        let path = ctx.path("asympt.csv");
        ctx.stage("write sweep", || write_asymptotic_csv(&report, &path))?;
        ctx.write_json("asympt.json", &report)
    }
}
