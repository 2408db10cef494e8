use faer::Mat;
use num_complex::Complex64;

use super::direct::boundary_layer;
use super::{DtnKind, DtnMatrix};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::numerics::sum::ComplexKahanSum;
use crate::spectral::{SpectralData, WeylReport};

/// Tail estimates for truncated eigenfunction series, built from fitted
/// spectral constants: `lambda_k >= c_star k`, `lambda_k <= c_upper k` and
/// `||trace_k|| <= C lambda_k^(3/4 + eps/2)`.  Terms beyond the index range
/// of the complete discrete spectrum vanish.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailModel {
    pub c_star: f64,
    pub c_upper: f64,
    pub trace_constant: f64,
    pub eps: f64,
    pub n_int: usize,
}

impl TailModel {
    pub fn from_report(r: &WeylReport) -> Self {
        Self {
            c_star: r.c_star,
            c_upper: r.c_upper,
            trace_constant: r.trace_constant,
            eps: r.eps,
            n_int: r.n_int,
        }
    }

    /// Upper bound for `||trace_k||^2` (one-based `k`).
    pub fn trace_sq_bound(&self, k: usize) -> f64 {
        let lam = self.c_upper * k as f64;
        (self.trace_constant * lam.powf(0.75 + 0.5 * self.eps)).powi(2)
    }

    /// Lower bound for `|lambda_k - lambda|`.
    pub fn distance_bound(&self, k: usize, lambda: Complex64) -> f64 {
        let lo = self.c_star * k as f64;
        if lo > lambda.re {
            (lo - lambda.re).hypot(lambda.im)
        } else {
            lambda.im.abs()
        }
    }

    /// Operator-norm bound of the omitted terms `k > truncation` of the m-th
    /// derivative series.
    pub fn derivative_tail(&self, truncation: usize, lambda: Complex64, m: u32) -> f64 {
        let fact = factorial(m);
        (truncation + 1..=self.n_int)
            .map(|k| fact * self.trace_sq_bound(k) / self.distance_bound(k, lambda).powi(m as i32 + 1))
            .sum()
    }

    /// Bound of the omitted terms of a difference series of two potentials
    /// sharing these constants.
    pub fn difference_tail(&self, truncation: usize, lambda: Complex64) -> f64 {
        2.0 * self.derivative_tail(truncation, lambda, 0)
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Optional tail control for series assembly.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeriesOptions {
    pub tail: Option<TailModel>,
    /// When set, assembly fails if the tail bound exceeds this value.
    pub tolerance: Option<f64>,
}

impl SeriesOptions {
    pub fn with_tail(tail: TailModel) -> Self {
        Self { tail: Some(tail), tolerance: None }
    }

    fn check<F: Fn(usize) -> f64>(&self, truncation: usize, bound: F) -> Result<Option<f64>> {
        let Some(tail) = self.tail else { return Ok(None) };
        let b = bound(truncation);
        if let Some(tol) = self.tolerance {
            if b > tol {
                let required_k = (truncation..=tail.n_int).find(|&k| bound(k) <= tol).unwrap_or(tail.n_int);
                return Err(Error::TailAboveTolerance {
                    tail: b,
                    tolerance: tol,
                    required_k,
                });
            }
        }
        Ok(Some(b))
    }
}

/// Accumulates rank-one terms `c * a (w .* b)^T` in ascending order with
/// compensated summation.
struct SeriesAccumulator {
    n: usize,
    acc: Vec<ComplexKahanSum>,
}

impl SeriesAccumulator {
    fn new(n: usize) -> Self {
        Self {
            n,
            acc: vec![ComplexKahanSum::new(); n * n],
        }
    }

    fn add(&mut self, c: Complex64, a: &[f64], b: &[f64], w: &[f64]) {
        for i in 0..self.n {
            let ca = c * a[i];
            for j in 0..self.n {
                self.acc[i * self.n + j].add(ca * (b[j] * w[j]));
            }
        }
    }

    fn finish(self) -> Mat<Complex64> {
        Mat::from_fn(self.n, self.n, |i, j| self.acc[i * self.n + j].value())
    }
}

fn check_lambda_off(sd: &SpectralData, lambda: Complex64) -> Result<()> {
    if lambda.im.abs() < 1e-6 {
        if let Some(l) = sd.eigenvalues.iter().find(|l| (*l - lambda.re).abs() < 1e-6) {
            return Err(Error::NearSpectrum {
                lambda,
                nearest: *l,
                distance: (l - lambda.re).abs(),
            });
        }
    }
    Ok(())
}

fn condition_m(n: u32, m: u32) -> Result<()> {
    let min = (n as f64 / 2.0 + 0.75).floor() as u32 + 1;
    if m < min {
        return Err(Error::InvalidParameter(format!(
            "derivative order m = {m} below the summability threshold {min}"
        )));
    }
    Ok(())
}

/// The m-th derivative in `lambda` of the Dirichlet-to-Neumann map as the
/// eigenfunction series `-m! sum_{k > shift} (lambda_k - lambda)^(-m-1)
/// <., t_k> t_k`, truncated at the available `K` pairs.
pub fn dtn_derivative_series(
    sd: &SpectralData,
    lambda: Complex64,
    m: u32,
    shift: usize,
    opts: &SeriesOptions,
) -> Result<DtnMatrix> {
    condition_m(2, m)?;
    derivative_series_unchecked(sd, lambda, m, shift, opts)
}

pub(crate) fn derivative_series_unchecked(
    sd: &SpectralData,
    lambda: Complex64,
    m: u32,
    shift: usize,
    opts: &SeriesOptions,
) -> Result<DtnMatrix> {
    if shift > sd.k() {
        return Err(Error::InvalidParameter(format!("shift {shift} exceeds K = {}", sd.k())));
    }
    check_lambda_off(sd, lambda)?;
    let tail_bound = opts.check(sd.k(), |k| {
        opts.tail.map_or(0.0, |t| t.derivative_tail(k, lambda, m))
    })?;
    let w = sd.grid.weights();
    let mut acc = SeriesAccumulator::new(sd.n_bd());
    let fact = factorial(m);
    for k in shift..sd.k() {
        let c = -fact / (Complex64::new(sd.eigenvalues[k], 0.0) - lambda).powi(m as i32 + 1);
        acc.add(c, &sd.traces[k], &sd.traces[k], &w);
    }
    Ok(DtnMatrix {
        entries: acc.finish(),
        lambda,
        potential_id: sd.potential_id.clone(),
        grid: sd.grid.clone(),
        kind: DtnKind::SeriesDerivative {
            order: m,
            truncation: sd.k(),
            shift,
        },
        tail_bound,
    })
}

/// The difference series split into the three addends of the telescoping
/// decomposition.
#[derive(Clone, Debug)]
pub struct DifferenceSeries {
    pub total: DtnMatrix,
    /// Eigenvalue differences: `(l1 - l2) / ((lambda - l1)(lambda - l2)) <., t1> t1`.
    pub i1: DtnMatrix,
    /// Trace differences on the left: `<., t1> (t1 - t2) / (lambda - l2)`.
    pub i2: DtnMatrix,
    /// Trace differences on the right: `<., t1 - t2> t2 / (lambda - l2)`.
    pub i3: DtnMatrix,
}

/// `Lambda(q1, lambda) - Lambda(q2, lambda)` from aligned spectral data,
/// summing the pairs with index greater than `shift`.
pub fn dtn_difference_series(
    sd1: &SpectralData,
    sd2: &SpectralData,
    lambda: Complex64,
    shift: usize,
    opts: &SeriesOptions,
) -> Result<DifferenceSeries> {
    sd1.check_compatible(sd2)?;
    if shift > sd1.k() {
        return Err(Error::InvalidParameter(format!("shift {shift} exceeds K = {}", sd1.k())));
    }
    check_lambda_off(sd1, lambda)?;
    check_lambda_off(sd2, lambda)?;
    let tail_bound = opts.check(sd1.k(), |k| opts.tail.map_or(0.0, |t| t.difference_tail(k, lambda)))?;
    let w = sd1.grid.weights();
    let n = sd1.n_bd();
    let (mut a1, mut a2, mut a3) = (
        SeriesAccumulator::new(n),
        SeriesAccumulator::new(n),
        SeriesAccumulator::new(n),
    );
    for k in shift..sd1.k() {
        let (l1, l2) = (sd1.eigenvalues[k], sd2.eigenvalues[k]);
        let (t1, t2) = (&sd1.traces[k], &sd2.traces[k]);
        let d1 = lambda - l1;
        let d2 = lambda - l2;
        let dt: Vec<f64> = t1.iter().zip(t2).map(|(a, b)| a - b).collect();
        a1.add(Complex64::new(l1 - l2, 0.0) / (d1 * d2), t1, t1, &w);
        a2.add(d2.inv(), &dt, t1, &w);
        a3.add(d2.inv(), t2, &dt, &w);
    }
    let id = format!("{}-{}", sd1.potential_id, sd2.potential_id);
    let kind = DtnKind::SeriesDifference {
        truncation: sd1.k(),
        shift,
    };
    let make = |entries: Mat<Complex64>, tail: Option<f64>| DtnMatrix {
        entries,
        lambda,
        potential_id: id.clone(),
        grid: sd1.grid.clone(),
        kind: kind.clone(),
        tail_bound: tail,
    };
    let (i1, i2, i3) = (a1.finish(), a2.finish(), a3.finish());
    let total = &(&i1 + &i2) + &i3;
    Ok(DifferenceSeries {
        total: make(total, tail_bound),
        i1: make(i1, None),
        i2: make(i2, None),
        i3: make(i3, None),
    })
}

/// Full map reconstructed from spectral data: the potential-independent
/// boundary layer plus `sum_k <., t_k> t_k / (lambda - lambda_k)`.
pub fn dtn_spectral(sd: &SpectralData, lambda: Complex64) -> Result<DtnMatrix> {
    check_lambda_off(sd, lambda)?;
    let hat = low_rank_sum(sd, lambda, sd.k());
    let layer = boundary_layer(&sd.grid).operator(lambda);
    Ok(DtnMatrix {
        entries: &layer + &hat,
        lambda,
        potential_id: sd.potential_id.clone(),
        grid: sd.grid.clone(),
        kind: DtnKind::Spectral { truncation: sd.k() },
        tail_bound: None,
    })
}

fn low_rank_sum(sd: &SpectralData, lambda: Complex64, n: usize) -> Mat<Complex64> {
    let w = sd.grid.weights();
    let mut acc = SeriesAccumulator::new(sd.n_bd());
    for k in 0..n {
        let c = (lambda - sd.eigenvalues[k]).inv();
        acc.add(c, &sd.traces[k], &sd.traces[k], &w);
    }
    acc.finish()
}

/// Access to the remainder of the map after the first `n` modes, which only
/// exists through derivative and difference series.
#[derive(Clone, Debug)]
pub struct TildeHandle {
    pub data: SpectralData,
    pub n: usize,
}

impl TildeHandle {
    pub fn derivative(&self, lambda: Complex64, m: u32, opts: &SeriesOptions) -> Result<DtnMatrix> {
        dtn_derivative_series(&self.data, lambda, m, self.n, opts)
    }

    pub fn difference(&self, other: &TildeHandle, lambda: Complex64, opts: &SeriesOptions) -> Result<DtnMatrix> {
        if self.n != other.n {
            return Err(Error::InvalidParameter("handles split at different N".into()));
        }
        Ok(dtn_difference_series(&self.data, &other.data, lambda, self.n, opts)?.total)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.data.grid
    }
}

/// Splits off the rank-`n` part `sum_{k <= n} <., t_k> t_k / (lambda -
/// lambda_k)`.
pub fn split_hat_tilde(sd: &SpectralData, lambda: Complex64, n: usize) -> Result<(DtnMatrix, TildeHandle)> {
    if n >= sd.k() {
        return Err(Error::InvalidParameter(format!("N = {n} must be below K = {}", sd.k())));
    }
    check_lambda_off(sd, lambda)?;
    let hat = DtnMatrix {
        entries: low_rank_sum(sd, lambda, n),
        lambda,
        potential_id: sd.potential_id.clone(),
        grid: sd.grid.clone(),
        kind: DtnKind::LowRankHat { n },
        tail_bound: None,
    };
    Ok((hat, TildeHandle { data: sd.clone(), n }))
}
