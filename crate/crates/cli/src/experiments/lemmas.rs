use borglev_core::estimates::{
    check_lemma1, check_lemma2, check_lemma3, geometric_sweep, probe_sharpness, write_bound_csv, BoundReport,
    LemmaQuery, SharpnessRow,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{default_true, Experiment, Plan};
use crate::config::{require, ExperimentConfig};
use crate::context::RunContext;
use crate::error::{CliError, CliResult};

pub struct Lemmas;

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    lo: f64,
    hi: f64,
    count: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            lo: 8.0,
            hi: 256.0,
            count: 9,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Lemma2Case {
    b: f64,
    nu: f64,
    #[serde(default)]
    eps: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Lemma3Case {
    query: LemmaQuery,
    /// Points `lambda = -t` of the ray.
    #[serde(default)]
    ray: Sweep,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LemmaParams {
    #[serde(default)]
    taus: Sweep,
    #[serde(default)]
    lemma1: Vec<LemmaQuery>,
    #[serde(default)]
    lemma2: Vec<Lemma2Case>,
    #[serde(default)]
    lemma3: Vec<Lemma3Case>,
    #[serde(default)]
    sharpness: Vec<[f64; 2]>,
    #[serde(default = "default_true")]
    fail_on_miss: bool,
}

struct LemmaPlan {
    params: LemmaParams,
}

#[derive(Serialize)]
struct LemmaSummary<'a> {
    reports: &'a [BoundReport],
    sharpness: &'a [SharpnessRow],
    all_pass: bool,
}

fn check_sweep(s: &Sweep, what: &str) -> CliResult<()> {
    require(s.lo > 1.0 && s.hi >= 10.0 * s.lo && s.count >= 3, format!("{what}: need 1 < lo, hi >= 10 lo, count >= 3"))
}

impl Experiment for Lemmas {
    fn name(&self) -> &'static str {
        "lemmas"
    }

    fn description(&self) -> &'static str {
        "Power-law checks of the eigenvalue series and integral bounds"
    }

    fn needs_grid(&self) -> bool {
        false
    }

    fn plan(&self, cfg: &ExperimentConfig) -> CliResult<Box<dyn Plan>> {
        let params: LemmaParams = cfg.params()?;
        check_sweep(&params.taus, "taus")?;
        for q in params.lemma1.iter().chain(params.lemma3.iter().map(|c| &c.query)) {
            q.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
        for c in &params.lemma3 {
            check_sweep(&c.ray, "lemma3 ray")?;
        }
        for c in &params.lemma2 {
            require(c.b - c.nu < -1.0, format!("lemma2 case b = {}, nu = {}: need b - nu < -1", c.b, c.nu))?;
        }
        for [b, nu] in &params.sharpness {
            require(b - nu < -1.0, format!("sharpness case b = {b}, nu = {nu}: need b - nu < -1"))?;
        }
        Ok(Box::new(LemmaPlan { params }))
    }
}

impl Plan for LemmaPlan {
    fn execute(&self, ctx: &mut RunContext) -> CliResult<()> {
        let p = &self.params;
        let taus = geometric_sweep(p.taus.lo, p.taus.hi, p.taus.count);
        let mut reports = Vec::new();
        for q in &p.lemma1 {
            reports.push(ctx.stage("lemma1", || check_lemma1(q, &taus))?);
        }
        for c in &p.lemma2 {
            reports.push(ctx.stage("lemma2", || check_lemma2(c.b, c.nu, c.eps, &taus))?);
        }
        for c in &p.lemma3 {
            let lambdas: Vec<Complex64> = geometric_sweep(c.ray.lo, c.ray.hi, c.ray.count)
                .into_iter()
                .map(|t| Complex64::new(-t, 0.0))
                .collect();
            reports.push(ctx.stage("lemma3", || check_lemma3(&c.query, &lambdas))?);
        }
        let cases: Vec<(f64, f64)> = p.sharpness.iter().map(|[b, nu]| (*b, *nu)).collect();
        let sharp = if cases.is_empty() {
            Vec::new()
        } else {
            ctx.stage("sharpness", || probe_sharpness(&cases, &taus))?
        };
        let path = ctx.path("lemmas.csv");
        ctx.stage("write sweeps", || write_bound_csv(&reports, &path))?;
        if !sharp.is_empty() {
            ctx.write_csv("sharpness.csv", &sharp)?;
        }
        let all_pass = reports.iter().all(|r| r.pass);
        ctx.write_json(
            "summary.json",
            &LemmaSummary {
                reports: &reports,
                sharpness: &sharp,
                all_pass,
            },
        )?;
        if p.fail_on_miss && !all_pass {
            let failed: Vec<String> = reports
                .iter()
                .filter(|r| !r.pass)
                .map(|r| format!("{} (nu = {}, b = {})", r.lemma, r.nu, r.b))
                .collect();
            return Err(CliError::CheckFailed {
                stage: "lemma checks".into(),
                detail: format!("slope bound missed: {}", failed.join(", ")),
            });
        }
        Ok(())
    }
}
