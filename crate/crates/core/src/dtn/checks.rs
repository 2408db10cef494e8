use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use super::series::{derivative_series_unchecked, dtn_difference_series, SeriesOptions};
use super::{dtn_direct, DtnKind, DtnMatrix};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, HsNorm};
use crate::numerics::fit::loglog_slope;
use crate::numerics::quadrature::{integrate_with_breaks, QuadOptions};
use crate::potential::Potential;
use crate::spectral::SpectralData;

/// Five-point central divided difference of order `j <= 4` in the real
/// direction, with step `h`.
pub fn divided_difference<F>(f: F, lambda: Complex64, j: u32, h: f64) -> Result<Mat<Complex64>>
where
    F: Fn(Complex64) -> Result<Mat<Complex64>>,
{
    let coeffs: [f64; 5] = match j {
        0 => return f(lambda),
        1 => [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
        2 => [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => return Err(Error::InvalidParameter(format!("divided differences implemented for j <= 4, got {j}"))),
    };
    let scale = h.powi(j as i32);
    let mut out: Option<Mat<Complex64>> = None;
    for (i, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let m = f(lambda + (i as f64 - 2.0) * h)?;
        let term = Mat::from_fn(m.nrows(), m.ncols(), |r, s| m[(r, s)] * (*c / scale));
        out = Some(match out {
            None => term,
            Some(acc) => &acc + &term,
        });
    }
    Ok(out.expect("stencil has nonzero coefficients"))
}

/// One derivative order of a decay check.
#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub order: u32,
    /// `|Re lambda|` for each frequency of the sweep.
    pub abs_re: Vec<f64>,
    pub norms: Vec<f64>,
    /// Predicted exponent `-j - sigma`.
    pub bound_exponent: f64,
    pub fitted_slope: Option<f64>,
    /// Smallest `C` with `norm <= C |Re lambda|^(-j - sigma)` on the sweep.
    pub c_min: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub sigma: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Checks `||Lambda^(j)(q1) - Lambda^(j)(q2)|| <= C |Re lambda|^(-j - sigma)`
/// for `j = 0..=m` on a sweep of frequencies in the left half plane, with
/// `sigma = (1 - 2 eps) / 4`.  Derivatives are divided differences of direct
/// solves; norms are the `H^{1/2} -> L2` surrogate.
pub fn verify_dtn_decay(
    q1: &Potential,
    q2: &Potential,
    m: u32,
    eps: f64,
    lambdas: &[Complex64],
    grid: &GridSpec,
) -> Result<DecayReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1/2)")));
    }
    if m > 4 {
        return Err(Error::InvalidParameter("derivative orders above 4 are not supported".into()));
    }
    let bound = 2.0 * q1.sup_bound.max(q2.sup_bound);
    for l in lambdas {
        if !(l.re <= -bound && l.re < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frequency {l} violates Re lambda <= -{bound}"
            )));
        }
    }
    let sigma = (1.0 - 2.0 * eps) / 4.0;
    let hs = HsNorm::new(grid)?;
    let diff = |lam: Complex64| -> Result<Mat<Complex64>> {
        let a = dtn_direct(q1, lam, grid)?;
        let b = dtn_direct(q2, lam, grid)?;
        Ok(&a.entries - &b.entries)
    };
    let abs_re: Vec<f64> = lambdas.iter().map(|l| l.re.abs()).collect();
    let mut rows = Vec::new();
    for j in 0..=m {
        let mut norms = Vec::with_capacity(lambdas.len());
        for l in lambdas {
            let h = 0.05 * l.re.abs();
            let d = divided_difference(diff, *l, j, h)?;
            let mat = DtnMatrix {
                entries: d,
                lambda: *l,
                potential_id: String::new(),
                grid: grid.clone(),
                kind: DtnKind::Combination,
                tail_bound: None,
            };
            norms.push(mat.norms(&hs)?.h12_to_l2);
        }
        let expo = -(j as f64) - sigma;
        let c_min = norms
            .iter()
            .zip(&abs_re)
            .map(|(n, r)| n / r.powf(expo))
            .fold(0.0, f64::max);
        let all_zero = norms.iter().all(|n| *n == 0.0);
        let fitted_slope = if all_zero || lambdas.len() < 2 {
            None
        } else {
            Some(loglog_slope(&abs_re, &norms)?)
        };
        let pass = fitted_slope.map_or(true, |s| s <= expo + 0.1);
        rows.push(DecayRow {
            order: j,
            abs_re: abs_re.clone(),
            norms,
            bound_exponent: expo,
            fitted_slope,
            c_min,
            pass,
        });
    }
    Ok(DecayReport { sigma, rows })
}

/// Result of checking the repeated-integral representation of the
/// difference map.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegralFormulaReport {
    /// Norm of (integral representation) - (difference series).
    pub residual: f64,
    /// Norm of the omitted boundary terms at `-R_cut + i Im lambda`.
    pub tail_estimate: f64,
    /// Norm of the difference series at `lambda`.
    pub reference_norm: f64,
    /// Largest quadrature error estimate over the modes.
    pub quadrature_error: f64,
}

/// Integrates the second-derivative difference series twice along the
/// horizontal line through `lambda`, from `Re = -r_cut` to `lambda`, and
/// compares the result with the difference series at `lambda`.
pub fn verify_integral_formula(
    sd1: &SpectralData,
    sd2: &SpectralData,
    lambda: Complex64,
    m: u32,
    r_cut: f64,
) -> Result<IntegralFormulaReport> {
    if m != 2 {
        return Err(Error::InvalidParameter(format!("only m = 2 is supported, got {m}")));
    }
    if !(lambda.im > 0.0) {
        return Err(Error::InvalidParameter("Im lambda must be positive".into()));
    }
    if !(r_cut > 0.0 && -r_cut < lambda.re) {
        return Err(Error::InvalidParameter(format!("R_cut = {r_cut} must exceed -Re lambda")));
    }
    sd1.check_compatible(sd2)?;
    let grid = &sd1.grid;
    let hs = HsNorm::new(grid)?;
    let y = lambda.im;
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-11,
        max_intervals: 4000,
    };
    let kernel = |mu: f64| -> Result<(Complex64, f64)> {
        let f = |x: f64| {
            let s = Complex64::new(x, y);
            (lambda - s) * (-2.0) / (Complex64::new(mu, 0.0) - s).powi(3)
        };
        let breaks = [mu - 5.0 * y, mu, mu + 5.0 * y];
        let r = integrate_with_breaks(f, -r_cut, lambda.re, &breaks, opts)?;
        Ok((r.value, r.error))
    };
    let w = grid.weights();
    let n = grid.n_bd();
    let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
    let mut qerr = 0.0f64;
    for k in 0..sd1.k() {
        let (j1, e1) = kernel(sd1.eigenvalues[k])?;
        let (j2, e2) = kernel(sd2.eigenvalues[k])?;
        qerr = qerr.max(e1).max(e2);
        let (t1, t2) = (&sd1.traces[k], &sd2.traces[k]);
        for i in 0..n {
            for j in 0..n {
                acc[i * n + j] += j1 * (t1[i] * t1[j] * w[j]) - j2 * (t2[i] * t2[j] * w[j]);
            }
        }
    }
    let reference = dtn_difference_series(sd1, sd2, lambda, 0, &SeriesOptions::default())?.total;
    let integral = Mat::from_fn(n, n, |i, j| acc[i * n + j]);
    let as_map = |entries: Mat<Complex64>| DtnMatrix {
        entries,
        lambda,
        potential_id: String::new(),
        grid: grid.clone(),
        kind: DtnKind::Combination,
        tail_bound: None,
    };
    let residual = as_map(&integral - &reference.entries).norms(&hs)?.h12_to_l2;
    let a = Complex64::new(-r_cut, y);
    let f_a = dtn_difference_series(sd1, sd2, a, 0, &SeriesOptions::default())?.total;
    let d1 = derivative_series_unchecked(sd1, a, 1, 0, &SeriesOptions::default())?;
    let d2 = derivative_series_unchecked(sd2, a, 1, 0, &SeriesOptions::default())?;
    let dprime = &d1.entries - &d2.entries;
    let scale = lambda - a;
    let boundary = Mat::from_fn(n, n, |i, j| f_a.entries[(i, j)] + dprime[(i, j)] * scale);
    Ok(IntegralFormulaReport {
        residual,
        tail_estimate: as_map(boundary).norms(&hs)?.h12_to_l2,
        reference_norm: reference.norms(&hs)?.h12_to_l2,
        quadrature_error: qerr,
    })
}
