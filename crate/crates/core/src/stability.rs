//! Spectral-data distances, the explicit Hölder exponent and the stability
//! experiments built on them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dtn::TailModel;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::numerics::fit::loglog_slope;
use crate::numerics::sum::KahanSum;
use crate::potential::Potential;
use crate::probe::{reconstruct_from_source, ReconstructionOptions, SpectralDifference};
use crate::spectral::{align_traces, solve_eigen, weighted_norm, SpectralData, DEFAULT_CLUSTER_TOL};

/// Distance between two spectral data sets with the lowest `n_drop` pairs
/// left out.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaMetrics {
    pub delta0: f64,
    pub delta1: f64,
    pub delta: f64,
    pub n_drop: usize,
    pub m: u32,
    pub k: usize,
    pub tail_bound: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DeltaOptions {
    pub cluster_tol: f64,
    /// Bound for the trace terms beyond `K`; without it the tail is taken
    /// to be zero, which is exact when `K` covers the whole discrete
    /// spectrum.
    pub tail: Option<TailModel>,
    /// Largest admissible ratio `tail_bound / delta`.
    pub max_tail_fraction: f64,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        Self {
            cluster_tol: DEFAULT_CLUSTER_TOL,
            tail: None,
            max_tail_fraction: 0.01,
        }
    }
}

/// `delta0 = sup_k |lambda_{k+N}(1) - lambda_{k+N}(2)|` and
/// `delta1 = sum_k k^(-2m/n) ||t_{k+N}(1) - t_{k+N}(2)||`, the latter after
/// aligning the traces of `sd2` to `sd1`.
pub fn compute_delta(sd1: &SpectralData, sd2: &SpectralData, n_drop: usize, m: u32, opts: &DeltaOptions) -> Result<DeltaMetrics> {
    sd1.check_compatible(sd2)?;
    let k = sd1.k();
    if k <= n_drop + 20 {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must exceed N + 20 = {}",
            n_drop + 20
        )));
    }
    let (_, aligned) = align_traces(sd1, sd2, opts.cluster_tol)?;
    delta_unaligned(sd1, &aligned, n_drop, m, opts)
}

/// Same as [`compute_delta`] but without re-aligning; both sets must already
/// share a gauge.
pub fn delta_unaligned(sd1: &SpectralData, sd2: &SpectralData, n_drop: usize, m: u32, opts: &DeltaOptions) -> Result<DeltaMetrics> {
    sd1.check_compatible(sd2)?;
    let k = sd1.k();
    if n_drop >= k {
        return Err(Error::InvalidParameter(format!("N = {n_drop} leaves no pairs out of K = {k}")));
    }
    let p = weight_power(m, 2);
    let delta0 = sd1.eigenvalues[n_drop..]
        .iter()
        .zip(&sd2.eigenvalues[n_drop..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut acc = KahanSum::new();
    for idx in n_drop..k {
        let d: Vec<f64> = sd1.traces[idx].iter().zip(&sd2.traces[idx]).map(|(a, b)| a - b).collect();
        let w = ((idx - n_drop + 1) as f64).powf(-p);
        acc.add(w * weighted_norm(&sd1.grid, &d));
    }
    let delta1 = acc.value();
    let tail_bound = match opts.tail {
        Some(t) => (k + 1..=t.n_int)
            .map(|j| ((j - n_drop) as f64).powf(-p) * 2.0 * t.trace_sq_bound(j).sqrt())
            .sum(),
        None => 0.0,
    };
    let delta = delta0 + delta1;
    if tail_bound > 0.0 && tail_bound > opts.max_tail_fraction * delta {
        return Err(Error::TailAboveTolerance {
            tail: tail_bound,
            tolerance: opts.max_tail_fraction * delta,
            required_k: sd1.grid.n_int(),
        });
    }
    Ok(DeltaMetrics {
        delta0,
        delta1,
        delta,
        n_drop,
        m,
        k,
        tail_bound,
    })
}

fn weight_power(m: u32, n: u32) -> f64 {
    2.0 * m as f64 / n as f64
}

/// The exponents entering the stability estimate for dimension `n`,
/// smoothness index `m` and trace exponent `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentBundle {
    pub n: u32,
    pub m: u32,
    pub eps: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// `gamma` with `m + 2` in place of `m + 5/4` in the last factor.
    pub gamma_variant: f64,
    pub alpha_threshold: f64,
}

pub fn gamma_of(n: u32, m: u32, eps: f64) -> Result<ExponentBundle> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let (nf, mf) = (n as f64, m as f64);
    if !(mf > nf / 2.0 + 0.75) {
        return Err(Error::InvalidParameter(format!("m = {m} must exceed n/2 + 3/4 = {}", nf / 2.0 + 0.75)));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1/2)")));
    }
    let sigma = (1.0 - 2.0 * eps) / 4.0;
    let kappa = 1.0 / (2.0 * sigma);
    let gamma = 1.0 / (nf + 2.0 + 2.0 * (nf + 2.0) * (kappa * mf + mf + 1.25));
    let gamma_variant = 1.0 / (nf + 2.0 + 2.0 * (nf + 2.0) * (kappa * mf + mf + 2.0));
    Ok(ExponentBundle {
        n,
        m,
        eps,
        sigma,
        kappa,
        gamma,
        gamma_variant,
        alpha_threshold: (4.0 * mf - 1.0) / (2.0 * nf),
    })
}

impl ExponentBundle {
    /// Cutoff radius rule `rho = (2 Re lambda)^kappa`.
    pub fn rho(&self, re_lambda: f64) -> f64 {
        (2.0 * re_lambda).powf(self.kappa)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderPoint {
    pub pair_id: String,
    pub delta0: f64,
    pub delta1: f64,
    pub delta: f64,
    pub l2_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub points: Vec<HolderPoint>,
    pub gamma_paper: f64,
    pub gamma_emp: Option<f64>,
    pub c_fit: Option<f64>,
    /// Number of points with `0 < delta < 0.5` used in the fit.
    pub fit_points: usize,
    pub degenerate: bool,
    /// `delta` and `||q1 - q2||` increase together along the family.
    pub monotone: bool,
    pub n_drop: usize,
    pub m: u32,
    pub k: usize,
    pub tail_bound: f64,
}

impl HolderReport {
    /// `0 < gamma_emp <= 1` and `gamma_emp >= gamma_paper`.
    pub fn consistent(&self) -> bool {
        matches!(self.gamma_emp, Some(g) if g > 0.0 && g <= 1.0 && g >= self.gamma_paper)
    }
}

/// Settings shared by the stability experiments.
#[derive(Clone, Copy, Debug)]
pub struct HolderOptions {
    pub n_drop: usize,
    pub m: u32,
    pub eps: f64,
    pub k: usize,
    pub delta: DeltaOptions,
}

/// Scatter of `(delta, ||q1 - q2||)` over a family of pairs with the fit
/// `||q1 - q2|| <= C delta^gamma_emp`.
pub fn holder_experiment(family: &[(Potential, Potential)], grid: &GridSpec, opts: &HolderOptions) -> Result<HolderReport> {
    if family.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "a Hölder fit needs at least 5 pairs, got {}",
            family.len()
        )));
    }
    let bundle = gamma_of(2, opts.m, opts.eps)?;
    let margin = 2.0 * grid.h();
    for (a, b) in family {
        let d = a.difference(b, grid)?;
        if !d.vanishes_near_boundary(grid, margin) {
            return Err(Error::InvalidParameter(format!(
                "{} - {} does not vanish within {margin:.4} of the boundary",
                a.id, b.id
            )));
        }
    }
    let spectra = spectra_by_id(family.iter().flat_map(|(a, b)| [a, b]), grid, opts.k)?;
    let scored = family
        .par_iter()
        .map(|(a, b)| {
            let d = compute_delta(&spectra[&a.id], &spectra[&b.id], opts.n_drop, opts.m, &opts.delta)?;
            let point = HolderPoint {
                pair_id: format!("{}|{}", a.id, b.id),
                delta0: d.delta0,
                delta1: d.delta1,
                delta: d.delta,
                l2_diff: a.difference(b, grid)?.l2_norm(grid),
            };
            Ok((point, d.tail_bound))
        })
        .collect::<Result<Vec<_>>>()?;
    let tail_bound = scored.iter().map(|(_, t)| *t).fold(0.0, f64::max);
    let points: Vec<HolderPoint> = scored.into_iter().map(|(p, _)| p).collect();
    let fit: Vec<&HolderPoint> = points
        .iter()
        .filter(|p| p.delta > 0.0 && p.delta < 0.5 && p.l2_diff > 0.0)
        .collect();
    let (gamma_emp, c_fit) = if fit.len() >= 2 {
        let x: Vec<f64> = fit.iter().map(|p| p.delta).collect();
        let y: Vec<f64> = fit.iter().map(|p| p.l2_diff).collect();
        let g = loglog_slope(&x, &y)?;
        let c = fit.iter().map(|p| p.l2_diff / p.delta.powf(g)).fold(0.0, f64::max);
        (Some(g), Some(c))
    } else {
        (None, None)
    };
    let mut order: Vec<&HolderPoint> = points.iter().collect();
    order.sort_by(|a, b| a.l2_diff.total_cmp(&b.l2_diff));
    let monotone = order.windows(2).all(|w| w[1].delta >= w[0].delta);
    Ok(HolderReport {
        fit_points: fit.len(),
        degenerate: gamma_emp.is_none(),
        points,
        gamma_paper: bundle.gamma,
        gamma_emp,
        c_fit,
        monotone,
        n_drop: opts.n_drop,
        m: opts.m,
        k: opts.k,
        tail_bound,
    })
}

fn spectra_by_id<'a>(
    potentials: impl Iterator<Item = &'a Potential>,
    grid: &GridSpec,
    k: usize,
) -> Result<BTreeMap<String, SpectralData>> {
    let mut unique: BTreeMap<String, &Potential> = BTreeMap::new();
    for p in potentials {
        unique.entry(p.id.clone()).or_insert(p);
    }
    let list: Vec<(&String, &&Potential)> = unique.iter().collect();
    let solved = list
        .par_iter()
        .map(|(id, q)| Ok(((*id).clone(), solve_eigen(q, grid, k)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(solved.into_iter().collect())
}

/// Writes the scatter as CSV rows `(pair_id, delta0, delta1, delta, l2_diff)`.
pub fn write_holder_csv(report: &HolderReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &report.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of a Hölder fit as written next to the scatter.
#[derive(Clone, Debug, Serialize)]
pub struct HolderSummary {
    pub gamma_paper: f64,
    pub gamma_emp: Option<f64>,
    #[serde(rename = "C_fit")]
    pub c_fit: Option<f64>,
    #[serde(rename = "N")]
    pub n_drop: usize,
    pub m: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub tail_bound: f64,
}

impl From<&HolderReport> for HolderSummary {
    fn from(r: &HolderReport) -> Self {
        Self {
            gamma_paper: r.gamma_paper,
            gamma_emp: r.gamma_emp,
            c_fit: r.c_fit,
            n_drop: r.n_drop,
            m: r.m,
            k: r.k,
            tail_bound: r.tail_bound,
        }
    }
}

/// Data perturbed so that both bounds
/// `|lambda_k - lambda_k'| <= delta + A k^-alpha` and
/// `k^(1 - 2m/n) ||t_k - t_k'|| <= delta + A k^-alpha` hold with equality:
/// eigenvalues move up and traces are stretched radially.
pub fn corrupt_spectral_data(sd: &SpectralData, delta: f64, a: f64, alpha: f64, m: u32) -> Result<SpectralData> {
    if !(delta >= 0.0 && a >= 0.0) {
        return Err(Error::InvalidParameter("noise levels must be non-negative".into()));
    }
    let p = weight_power(m, 2) - 1.0;
    let mut out = sd.clone();
    out.potential_id = format!("{}+noise(delta={delta},A={a},alpha={alpha})", sd.potential_id);
    for idx in 0..sd.k() {
        let k = (idx + 1) as f64;
        let level = delta + a * k.powf(-alpha);
        out.eigenvalues[idx] += level;
        let norm = sd.trace_norm(idx);
        if norm > 0.0 && level > 0.0 {
            let s = 1.0 + level * k.powf(p) / norm;
            out.traces[idx] = sd.traces[idx].iter().map(|v| v * s).collect();
        }
    }
    Ok(out)
}

/// `N(delta) = delta^(-1/alpha)`, rounded to the nearest integer when it is
/// within rounding noise of one and up otherwise.
pub fn noise_cut(delta: f64, alpha: f64) -> usize {
    if delta <= 0.0 {
        return 0;
    }
    let x = delta.powf(-1.0 / alpha);
    if (x - x.round()).abs() < 1e-9 {
        x.round() as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticConfig {
    pub deltas: Vec<f64>,
    pub a: f64,
    pub alpha: f64,
    pub m: u32,
    pub k: usize,
    pub tau: f64,
    /// Number of exact low pairs dropped in the uniqueness comparison.
    pub exact_drop: usize,
    pub recon: ReconstructionOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub delta: f64,
    pub n_cut: usize,
    pub l2_error: f64,
    pub max_eigen_perturbation: f64,
    pub max_weighted_trace_perturbation: f64,
    /// `|lambda_j - lambda_j'| <= delta + A j^-alpha` below the cut and
    /// `<= 2 delta` from the cut on.
    pub split_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticReport {
    pub alpha: f64,
    pub alpha_threshold: f64,
    pub a: f64,
    pub tau: f64,
    pub baseline_error: f64,
    pub exact_drop: usize,
    pub exact_drop_error: f64,
    pub rows: Vec<AsymptoticRow>,
    /// Error nonincreasing as delta decreases.
    pub monotone: bool,
    pub gamma_emp: Option<f64>,
}

/// Recovers `q1 - q2` from worst-case corrupted data of `q1` and exact data
/// of `q2` over a sweep of noise levels.
pub fn asymptotic_noise_experiment(q1: &Potential, q2: &Potential, grid: &GridSpec, cfg: &AsymptoticConfig) -> Result<AsymptoticReport> {
    let bundle = gamma_of(2, cfg.m, 0.25)?;
    if !(cfg.alpha > bundle.alpha_threshold) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {} must exceed (4m - 1)/(2n) = {}",
            cfg.alpha, bundle.alpha_threshold
        )));
    }
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidParameter("empty noise sweep".into()));
    }
    let truth = q1.difference(q2, grid)?;
    let sd1 = Arc::new(solve_eigen(q1, grid, cfg.k)?);
    let sd2 = Arc::new(solve_eigen(q2, grid, cfg.k)?);
    let lambda = Complex64::new(cfg.tau, 1.0).powi(2);
    let recover = |target: Arc<SpectralData>, n_drop: usize| -> Result<f64> {
        let src = SpectralDifference::new(target, sd2.clone(), n_drop, lambda)?;
        let (_, report, _) = reconstruct_from_source(&truth, &src, cfg.tau, grid, &cfg.recon)?;
        Ok(report.l2_error)
    };
    let baseline_error = recover(sd1.clone(), 0)?;
    let exact_drop_error = recover(sd1.clone(), cfg.exact_drop)?;
    let p = weight_power(cfg.m, 2) - 1.0;
    let rows = cfg
        .deltas
        .par_iter()
        .map(|&delta| {
            let noisy = corrupt_spectral_data(&sd1, delta, cfg.a, cfg.alpha, cfg.m)?;
            let n_cut = noise_cut(delta, cfg.alpha);
            let mut max_eig = 0.0f64;
            let mut max_tr = 0.0f64;
            let mut split = true;
            for idx in 0..sd1.k() {
                let j = (idx + 1) as f64;
                let de = (noisy.eigenvalues[idx] - sd1.eigenvalues[idx]).abs();
                let d: Vec<f64> = noisy.traces[idx].iter().zip(&sd1.traces[idx]).map(|(a, b)| a - b).collect();
                let dt = j.powf(-p) * weighted_norm(grid, &d);
                max_eig = max_eig.max(de);
                max_tr = max_tr.max(dt);
                let bound = if idx + 1 < n_cut.max(1) {
                    delta + cfg.a * j.powf(-cfg.alpha)
                } else {
                    2.0 * delta
                };
                let slack = 1e-12 * (1.0 + bound);
                split &= de <= bound + slack && dt <= bound + slack;
            }
            let l2_error = recover(Arc::new(noisy), n_cut.min(cfg.k - 1))?;
            Ok(AsymptoticRow {
                delta,
                n_cut,
                l2_error,
                max_eigen_perturbation: max_eig,
                max_weighted_trace_perturbation: max_tr,
                split_holds: split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_delta: Vec<&AsymptoticRow> = rows.iter().collect();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let monotone = by_delta.windows(2).all(|w| w[1].l2_error <= w[0].l2_error);
    let fit: Vec<&AsymptoticRow> = rows.iter().filter(|r| r.delta > 0.0 && r.l2_error > 0.0).collect();
    let gamma_emp = if fit.len() >= 2 {
        let x: Vec<f64> = fit.iter().map(|r| r.delta).collect();
        let y: Vec<f64> = fit.iter().map(|r| r.l2_error).collect();
        Some(loglog_slope(&x, &y)?)
    } else {
        None
    };
    Ok(AsymptoticReport {
        alpha: cfg.alpha,
        alpha_threshold: bundle.alpha_threshold,
        a: cfg.a,
        tau: cfg.tau,
        baseline_error,
        exact_drop: cfg.exact_drop,
        exact_drop_error,
        rows,
        monotone,
        gamma_emp,
    })
}

pub fn write_asymptotic_csv(report: &AsymptoticReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
