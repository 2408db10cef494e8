use borglev_core::dtn::{
    divided_difference, dtn_derivative_series, dtn_direct, dtn_spectral, verify_dtn_decay, DecayReport, SeriesOptions,
    TailModel,
};
use borglev_core::{weyl_validate, GridSpec, HsNorm, PotentialSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Experiment, Plan};
use crate::config::{prepare_potential, require, ExperimentConfig};
use crate::context::RunContext;
use crate::error::CliResult;

pub struct Dtn;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecayParams {
    /// Second potential of the decay comparison.
    against: PotentialSpec,
    /// Values of `Re lambda` (all negative).
    re_lambda: Vec<f64>,
    #[serde(default = "default_order")]
    max_order: u32,
    #[serde(default = "default_eps")]
    eps: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DtnParams {
    potential: PotentialSpec,
    lambda: [f64; 2],
    /// Eigenpairs used by the series; defaults to the complete discrete
    /// spectrum.
    #[serde(default)]
    k: Option<usize>,
    #[serde(default = "default_order")]
    derivative_order: u32,
    #[serde(default = "default_step")]
    step: f64,
    #[serde(default)]
    decay: Option<DecayParams>,
}

fn default_order() -> u32 {
    2
}

fn default_step() -> f64 {
    0.25
}

fn default_eps() -> f64 {
    0.25
}

struct DtnPlan {
    grid: GridSpec,
    params: DtnParams,
    k: usize,
}

#[derive(Serialize)]
struct DtnSummary {
    lambda: [f64; 2],
    k: usize,
    symmetry_defect: f64,
    l2_to_l2: f64,
    h12_to_l2: f64,
    spectral_relative_difference: f64,
    derivative_order: u32,
    derivative_step: f64,
    derivative_relative_difference: f64,
    derivative_tail_bound: Option<f64>,
    derivative_pass: bool,
    decay: Option<DecayReport>,
}

impl Experiment for Dtn {
    fn name(&self) -> &'static str {
        "dtn"
    }

    fn description(&self) -> &'static str {
        "Dirichlet-to-Neumann map by direct solves and by eigenfunction series"
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let grid = cfg.grid()?;
        let params: DtnParams = cfg.params()?;
        prepare_potential(&params.potential, 0)?;
        require(params.lambda.iter().all(|v| v.is_finite()), "lambda must be finite")?;
        let k = params.k.unwrap_or(grid.n_int());
        require(k >= 50 && k <= grid.n_int(), format!("k must lie in 50..={}", grid.n_int()))?;
        require(params.derivative_order >= 2 && params.derivative_order <= 4, "derivative_order must lie in 2..=4")?;
        require(params.step > 0.0 && params.step.is_finite(), "step must be positive")?;
        if let Some(d) = &params.decay {
            prepare_potential(&d.against, 0)?;
            require(d.re_lambda.len() >= 3, "decay needs at least three frequencies")?;
            require(d.re_lambda.iter().all(|r| *r < 0.0), "decay frequencies must have negative real part")?;
            require(d.eps > 0.0 && d.eps < 0.5, "eps must lie in (0, 1/2)")?;
        }
        Ok(Box::new(DtnPlan { grid, params, k }))
    }
}

fn relative(a: &faer::Mat<Complex64>, b: &faer::Mat<Complex64>) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            num = num.max((a[(i, j)] - b[(i, j)]).norm());
            den = den.max(b[(i, j)].norm());
        }
    }
    num / den.max(f64::MIN_POSITIVE)
}

impl Plan for DtnPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let grid = &self.grid;
        let lambda = Complex64::new(p.lambda[0], p.lambda[1]);
        let q = ctx.potential(&p.potential, grid)?;
        let direct = ctx.stage("direct dtn", || dtn_direct(&q, lambda, grid))?;
        let out = ctx.out.clone();
        ctx.stage("export dtn", || direct.export(&out, "dtn_direct"))?;
        ctx.record("dtn_direct.json");
        ctx.record("dtn_direct.csv");
        let norms = ctx.stage("operator norms", || direct.norms(&HsNorm::new(grid)?))?;
        let sd = ctx.spectral(&p.potential, grid, self.k)?;
        let spectral = ctx.stage("spectral dtn", || dtn_spectral(&sd, lambda))?;
        let tail = if self.k < grid.n_int() && self.k >= 50 {
            Some(TailModel::from_report(&ctx.stage("weyl fit", || weyl_validate(&sd, p.derivative_order, 0.25))?))
        } else {
            None
        };
        let opts = SeriesOptions { tail, tolerance: None };
        let m = p.derivative_order;
        let series = ctx.stage("derivative series", || dtn_derivative_series(&sd, lambda, m, 0, &opts))?;
        let oracle = ctx.stage("divided difference", || {
            divided_difference(|z| dtn_direct(&q, z, grid).map(|d| d.entries), lambda, m, p.step)
        })?;
        let derivative_rel = relative(&series.entries, &oracle);
        let scale = oracle.norm_max();
        let decay = match &p.decay {
            Some(d) => {
                let q2 = ctx.potential(&d.against, grid)?;
                let lambdas: Vec<Complex64> = d.re_lambda.iter().map(|r| Complex64::new(*r, 0.0)).collect();
                Some(ctx.stage("decay check", || verify_dtn_decay(&q, &q2, d.max_order, d.eps, &lambdas, grid))?)
            }
            None => None,
        };
        let tail_bound = series.tail_bound;
        let summary = DtnSummary {
            lambda: p.lambda,
            k: self.k,
            symmetry_defect: direct.symmetry_defect(),
            l2_to_l2: norms.l2_to_l2,
            h12_to_l2: norms.h12_to_l2,
            spectral_relative_difference: relative(&spectral.entries, &direct.entries),
            derivative_order: m,
            derivative_step: p.step,
            derivative_relative_difference: derivative_rel,
            derivative_tail_bound: tail_bound,
            derivative_pass: derivative_rel <= 1e-3_f64.max(tail_bound.unwrap_or(0.0) / scale),
            decay,
        };
        ctx.write_json("summary.json", &summary)
    }
}
