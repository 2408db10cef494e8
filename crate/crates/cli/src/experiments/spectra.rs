use borglev_core::spectral::weighted_norm;
use borglev_core::{weyl_validate, GridSpec, PotentialSpec};
use serde::{Deserialize, Serialize};

use super::{Experiment, Plan};
use crate::config::{prepare_potential, require, ExperimentConfig};
use crate::context::RunContext;
use crate::error::CliResult;

pub struct Eig;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigParams {
    potential: PotentialSpec,
    k: usize,
    /// Also solve for `q + shift` and report the eigenvalue offset defect.
    #[serde(default)]
    shift: Option<f64>,
}

struct EigPlan {
    grid: GridSpec,
    params: EigParams,
}

#[derive(Serialize)]
struct EigRow {
    k: usize,
    lambda: f64,
    trace_norm: f64,
    continuum: Option<f64>,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct EigSummary {
    potential: String,
    k: usize,
    lambda_1: f64,
    max_relative_error_first20: Option<f64>,
    shift: Option<f64>,
    shift_defect: Option<f64>,
}

/// Dirichlet eigenvalues of `-Delta` on the rectangle, ascending.
fn continuum_eigenvalues(grid: &GridSpec, k: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI.powi(2);
    let mut out = Vec::new();
    let lim = k + 2;
    for a in 1..=lim {
        for b in 1..=lim {
            out.push(pi2 * ((a * a) as f64 / grid.lx().powi(2) + (b * b) as f64 / grid.ly().powi(2)));
        }
    }
    out.sort_by(f64::total_cmp);
    out.truncate(k);
    out
}

impl Experiment for Eig {
    fn name(&self) -> &'static str {
        "eig"
    }

    fn description(&self) -> &'static str {
        "Dirichlet eigenvalues and normal-derivative traces"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: EigParams = cfg.params()?;
        prepare_potential(&params.potential, 0)?;
        require(params.k >= 1 && params.k <= grid.n_int(), format!("k must lie in 1..={}", grid.n_int()))?;
        if let Some(c) = params.shift {
            require(c.is_finite(), "shift must be finite")?;
        }
        Ok(Box::new(EigPlan { grid, params }))
    }
}

impl Plan for EigPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let sd = ctx.spectral(&p.potential, &self.grid, p.k)?;
        let exact = matches!(p.potential, PotentialSpec::Zero).then(|| continuum_eigenvalues(&self.grid, p.k));
        let rows: Vec<EigRow> = (0..sd.k())
            .map(|i| {
                let c = exact.as_ref().map(|e| e[i]);
                EigRow {
                    k: i + 1,
                    lambda: sd.eigenvalues[i],
                    trace_norm: weighted_norm(&sd.grid, &sd.traces[i]),
                    continuum: c,
                    relative_error: c.map(|c| (sd.eigenvalues[i] - c).abs() / c),
                }
            })
            .collect();
        ctx.write_csv("eigenvalues.csv", &rows)?;
        let out = ctx.out.clone();
        ctx.stage("export spectral data", || sd.export(&out, "spectral"))?;
        ctx.record("spectral.json");
        ctx.record("spectral.csv");
        let shift_defect = match p.shift {
            Some(c) => {
                let shifted = PotentialSpec::Sum {
                    base: Box::new(p.potential.clone()),
                    perturbation: Box::new(PotentialSpec::Constant { value: 1.0 }),
                    t: c,
                };
                let sd2 = ctx.spectral(&shifted, &self.grid, p.k)?;
                Some(
                    sd.eigenvalues
                        .iter()
                        .zip(&sd2.eigenvalues)
                        .map(|(a, b)| (b - a - c).abs())
                        .fold(0.0, f64::max),
                )
            }
            None => None,
        };
        let summary = EigSummary {
            potential: sd.potential_id.clone(),
            k: sd.k(),
            lambda_1: sd.eigenvalues[0],
            max_relative_error_first20: exact.as_ref().map(|_| {
                rows.iter()
                    .take(20)
                    .filter_map(|r| r.relative_error)
                    .fold(0.0, f64::max)
            }),
            shift: p.shift,
            shift_defect,
        };
        ctx.write_json("summary.json", &summary)
    }
}

pub struct Weyl;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeylParams {
    potential: PotentialSpec,
    k: usize,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default = "default_eps")]
    eps: f64,
}

fn default_m() -> u32 {
    2
}

fn default_eps() -> f64 {
    0.25
}

struct WeylPlan {
    grid: GridSpec,
    params: WeylParams,
}

#[derive(Serialize)]
struct CountingRow {
    k: usize,
    lambda: f64,
    sqrt_lambda: f64,
    trace_norm: f64,
    trace_bound: f64,
}

impl Experiment for Weyl {
    fn name(&self) -> &'static str {
        "weyl"
    }

    fn description(&self) -> &'static str {
        "Weyl-law and trace-growth constants fitted to a spectrum"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: WeylParams = cfg.params()?;
        prepare_potential(&params.potential, 0)?;
        require(params.k >= 50 && params.k <= grid.n_int(), format!("k must lie in 50..={}", grid.n_int()))?;
        require(params.eps > 0.0 && params.eps < 0.5, "eps must lie in (0, 1/2)")?;
        Ok(Box::new(WeylPlan { grid, params }))
    }
}

impl Plan for WeylPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let sd = ctx.spectral(&p.potential, &self.grid, p.k)?;
        let report = ctx.stage("weyl fit", || weyl_validate(&sd, p.m, p.eps))?;
        let expo = 0.75 + 0.5 * p.eps;
        let rows: Vec<CountingRow> = (0..sd.k())
            .map(|i| CountingRow {
                k: i + 1,
                lambda: sd.eigenvalues[i],
                sqrt_lambda: sd.eigenvalues[i].max(0.0).sqrt(),
                trace_norm: sd.trace_norm(i),
                trace_bound: report.trace_constant * sd.eigenvalues[i].max(0.0).powf(expo),
            })
            .collect();
        ctx.write_csv("counting.csv", &rows)?;
        ctx.write_json("weyl.json", &report)
    }
}
