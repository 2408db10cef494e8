//! High-frequency plane-wave probes: the scattering quantity `S`, the
//! representation identity behind it, and recovery of Fourier samples of the
//! potential.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dtn::{BvpSolver, DtnOperator};
use crate::error::{Error, Result};
use crate::grid::{boundary_inner_product, BoundaryField, GridSpec};
use crate::numerics::fit::loglog_slope;
use crate::numerics::sum::ComplexKahanSum;
use crate::potential::Potential;
use crate::spectral::{solve_eigen, SpectralData};

type C64 = Complex64;

/// Principal square root, computed without a polar round trip.
pub fn principal_sqrt(z: C64) -> C64 {
    if z.im == 0.0 && z.re >= 0.0 {
        return C64::new(z.re.sqrt(), 0.0);
    }
    let r = z.norm();
    let t = ((r + z.re.abs()) * 0.5).sqrt();
    if z.re >= 0.0 {
        C64::new(t, z.im / (2.0 * t))
    } else {
        C64::new(z.im.abs() / (2.0 * t), t.copysign(z.im))
    }
}

/// Directions and frequency of a probe targeting the Fourier variable `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeGeometry {
    pub xi: [f64; 2],
    pub eta: [f64; 2],
    pub tau: f64,
    pub c_tau: f64,
    pub theta: [f64; 2],
    pub omega: [f64; 2],
    pub lambda_tau: C64,
    pub sqrt_lambda: C64,
}

/// Builds the probe for `xi != 0` and `tau > 1` with `|xi| <= 1.98 tau`:
/// `eta` is `xi` rotated by +90 degrees and normalised, `theta = c eta +
/// xi/(2 tau)`, `omega = c eta - xi/(2 tau)`, `c = sqrt(1 - |xi|^2/(4 tau^2))`.
pub fn make_geometry(xi: [f64; 2], tau: f64) -> Result<ProbeGeometry> {
    let r = xi[0].hypot(xi[1]);
    if !(tau > 1.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau = {tau} must exceed 1")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("the probe needs xi != 0".into()));
    }
    if r > 1.98 * tau {
        return Err(Error::InvalidParameter(format!(
            "|xi| = {r} exceeds 1.98 tau = {}",
            1.98 * tau
        )));
    }
    let eta = [-xi[1] / r, xi[0] / r];
    Ok(geometry_from(xi, eta, tau))
}

fn geometry_from(xi: [f64; 2], eta: [f64; 2], tau: f64) -> ProbeGeometry {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1];
    let c_tau = (1.0 - r2 / (4.0 * tau * tau)).sqrt();
    let half = [xi[0] / (2.0 * tau), xi[1] / (2.0 * tau)];
    let sqrt_lambda = C64::new(tau, 1.0);
    ProbeGeometry {
        xi,
        eta,
        tau,
        c_tau,
        theta: [c_tau * eta[0] + half[0], c_tau * eta[1] + half[1]],
        omega: [c_tau * eta[0] - half[0], c_tau * eta[1] - half[1]],
        lambda_tau: sqrt_lambda * sqrt_lambda,
        sqrt_lambda,
    }
}

impl ProbeGeometry {
    /// Degenerate probe for `xi = 0` with `theta = omega = e2`.
    pub fn dc(tau: f64) -> Result<Self> {
        if !(tau > 1.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must exceed 1")));
        }
        Ok(geometry_from([0.0, 0.0], [0.0, 1.0], tau))
    }

    /// `sqrt(lambda) (theta - omega) = xi (1 + i / tau)`.
    pub fn zeta(&self) -> [C64; 2] {
        let s = C64::new(1.0, 1.0 / self.tau);
        [s * self.xi[0], s * self.xi[1]]
    }
}

/// Which of the two plane waves of a probe to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveSign {
    /// `exp(i sqrt(lambda) omega . x)`.
    Plus,
    /// `exp(-i sqrt(lambda) theta . x)`.
    Minus,
}

fn wave(geom: &ProbeGeometry, sign: WaveSign, x: f64, y: f64) -> C64 {
    let (d, s) = match sign {
        WaveSign::Plus => (geom.omega, 1.0),
        WaveSign::Minus => (geom.theta, -1.0),
    };
    (C64::i() * geom.sqrt_lambda * (s * (d[0] * x + d[1] * y))).exp()
}

/// Samples the plane wave on the boundary nodes.
pub fn plane_wave_trace(geom: &ProbeGeometry, sign: WaveSign, grid: &GridSpec) -> BoundaryField {
    grid.sample_boundary(|x, y| wave(geom, sign, x, y))
}

/// Samples the plane wave on the interior nodes.
pub fn plane_wave_interior(geom: &ProbeGeometry, sign: WaveSign, grid: &GridSpec) -> Vec<C64> {
    (0..grid.n_int())
        .map(|p| {
            let (x, y) = grid.interior_point(p);
            wave(geom, sign, x, y)
        })
        .collect()
}

fn check_frequency(geom: &ProbeGeometry, lambda: C64) -> Result<()> {
    if (lambda - geom.lambda_tau).norm() > 1e-12 * geom.lambda_tau.norm() {
        return Err(Error::InvalidParameter(format!(
            "map frequency {lambda} does not match the probe frequency {}",
            geom.lambda_tau
        )));
    }
    Ok(())
}

/// `S = <Lambda phi_omega, phi_{-theta}>`.
pub fn scattering_s(geom: &ProbeGeometry, grid: &GridSpec, map: &dyn DtnOperator) -> Result<C64> {
    check_frequency(geom, map.lambda())?;
    let f = plane_wave_trace(geom, WaveSign::Plus, grid);
    let g = plane_wave_trace(geom, WaveSign::Minus, grid);
    boundary_inner_product(&map.apply(&f)?, &g, grid)
}

/// Riemann sum `sum_x q(x) exp(-i zeta . x) hx hy` over the interior nodes.
pub fn fourier_riemann(q: &Potential, zeta: [C64; 2], grid: &GridSpec) -> C64 {
    let mut acc = ComplexKahanSum::new();
    for (p, v) in q.values.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let (x, y) = grid.interior_point(p);
        acc.add((-C64::i() * (zeta[0] * x + zeta[1] * y)).exp() * *v);
    }
    acc.value() * grid.cell_area()
}

/// `int_0^L exp(-i z x) dx`.
fn segment_integral(z: C64, l: f64) -> C64 {
    if z.norm() * l < 1e-8 {
        return C64::new(l, 0.0) - C64::i() * z * (l * l / 2.0);
    }
    (C64::new(1.0, 0.0) - (-C64::i() * z * l).exp()) / (C64::i() * z)
}

/// Both sides of the representation identity for `S(q)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityReport {
    pub lhs: C64,
    /// `-(lambda/2) |theta - omega|^2 int exp(-i zeta . x) dx`.
    pub first_term: C64,
    /// Riemann sum of `q exp(-i zeta . x)`.
    pub fourier_term: C64,
    /// `int R(q, lambda)(q phi_omega) q phi_{-theta} dx`.
    pub remainder: C64,
    pub rhs: C64,
    /// `|lhs - rhs| / |lhs|`.
    pub residual: f64,
}

/// Evaluates both sides of the identity on a grid.
pub fn verify_identity(q: &Potential, geom: &ProbeGeometry, grid: &GridSpec) -> Result<IdentityReport> {
    let solver = BvpSolver::new(q, grid, geom.lambda_tau)?;
    let lhs = scattering_s(geom, grid, &solver)?;
    let zeta = geom.zeta();
    let d2 = (geom.theta[0] - geom.omega[0]).powi(2) + (geom.theta[1] - geom.omega[1]).powi(2);
    let first_term =
        -geom.lambda_tau * (0.5 * d2) * segment_integral(zeta[0], grid.lx()) * segment_integral(zeta[1], grid.ly());
    let fourier_term = fourier_riemann(q, zeta, grid);
    let remainder = remainder_term(&solver, q, geom, grid)?;
    let rhs = first_term + fourier_term - remainder;
    Ok(IdentityReport {
        lhs,
        first_term,
        fourier_term,
        remainder,
        rhs,
        residual: (lhs - rhs).norm() / lhs.norm(),
    })
}

fn remainder_term(solver: &BvpSolver, q: &Potential, geom: &ProbeGeometry, grid: &GridSpec) -> Result<C64> {
    let plus = plane_wave_interior(geom, WaveSign::Plus, grid);
    let minus = plane_wave_interior(geom, WaveSign::Minus, grid);
    let rhs: Vec<C64> = plus.iter().zip(&q.values).map(|(p, v)| p * *v).collect();
    let w = solver.solve_interior(&rhs)?;
    let mut acc = ComplexKahanSum::new();
    for ((wv, m), v) in w.iter().zip(&minus).zip(&q.values) {
        acc.add(wv * m * *v);
    }
    Ok(acc.value() * grid.cell_area())
}

/// Magnitude of the resolvent remainder of the identity.
pub fn remainder_magnitude(q: &Potential, geom: &ProbeGeometry, grid: &GridSpec) -> Result<f64> {
    let solver = BvpSolver::new(q, grid, geom.lambda_tau)?;
    Ok(remainder_term(&solver, q, geom, grid)?.norm())
}

/// Applies `Lambda(q, lambda) - Lambda(q_ref, lambda)` for a fixed
/// background potential `q_ref`.
pub trait DifferenceSource: Send + Sync {
    fn name(&self) -> String;
    fn lambda(&self) -> C64;
    fn apply_difference(&self, f: &BoundaryField) -> Result<BoundaryField>;
}

/// Difference of two direct solvers; the potential-independent boundary
/// layer cancels exactly.
pub struct DirectDifference {
    target: BvpSolver,
    background: BvpSolver,
}

impl DirectDifference {
    pub fn new(q: &Potential, background: &Potential, grid: &GridSpec, lambda: C64) -> Result<Self> {
        Ok(Self {
            target: BvpSolver::new(q, grid, lambda)?,
            background: BvpSolver::new(background, grid, lambda)?,
        })
    }
}

impl DifferenceSource for DirectDifference {
    fn name(&self) -> String {
        "direct".into()
    }

    fn lambda(&self) -> C64 {
        self.target.lambda()
    }

    fn apply_difference(&self, f: &BoundaryField) -> Result<BoundaryField> {
        let u1 = self.target.solve(f)?;
        let u0 = self.background.solve(f)?;
        let grid = self.target.grid();
        Ok(BoundaryField::new(
            grid.boundary()
                .iter()
                .map(|b| -(u1[b.neighbor] - u0[b.neighbor]) * (b.tangential_spacing / (b.normal_spacing * b.weight)))
                .collect(),
        ))
    }
}

/// Difference of the eigenfunction series of two data sets, omitting the
/// first `n_drop` pairs of each.
pub struct SpectralDifference {
    target: Arc<SpectralData>,
    background: Arc<SpectralData>,
    n_drop: usize,
    lambda: C64,
}

impl SpectralDifference {
    pub fn new(target: Arc<SpectralData>, background: Arc<SpectralData>, n_drop: usize, lambda: C64) -> Result<Self> {
        target.check_compatible(&background)?;
        if n_drop >= target.k() {
            return Err(Error::InvalidParameter(format!(
                "N_drop = {n_drop} leaves no pairs out of K = {}",
                target.k()
            )));
        }
        Ok(Self {
            target,
            background,
            n_drop,
            lambda,
        })
    }
}

impl DifferenceSource for SpectralDifference {
    fn name(&self) -> String {
        format!("spectral(K={},N_drop={})", self.target.k(), self.n_drop)
    }

    fn lambda(&self) -> C64 {
        self.lambda
    }

    fn apply_difference(&self, f: &BoundaryField) -> Result<BoundaryField> {
        let grid = &self.target.grid;
        grid.check_field(f)?;
        let w = grid.weights();
        let n = grid.n_bd();
        let mut acc = vec![ComplexKahanSum::new(); n];
        for k in self.n_drop..self.target.k() {
            for (sd, sign) in [(&self.target, 1.0), (&self.background, -1.0)] {
                let t = &sd.traces[k];
                let fk: C64 = t.iter().zip(&f.values).zip(&w).map(|((a, b), c)| b * (a * c)).sum();
                let c = fk * sign / (self.lambda - sd.eigenvalues[k]);
                for (a, tj) in acc.iter_mut().zip(t) {
                    a.add(c * *tj);
                }
            }
        }
        Ok(BoundaryField::new(acc.iter().map(|a| a.value()).collect()))
    }
}

/// Data source for Fourier recovery.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeSource {
    /// Boundary-value solves for the target and the zero background.
    Direct,
    /// The first `k` eigenpairs of both potentials with the lowest `n_drop`
    /// pairs left out.
    Spectral { k: usize, n_drop: usize },
}

/// A recovered value of the Fourier transform of the potential.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierSample {
    pub xi: [f64; 2],
    pub zeta: [C64; 2],
    pub value: C64,
    pub tau_used: f64,
    pub source: String,
}

/// `S(q) - S(q_ref)` for the probe, computed from a difference source.
pub fn sample_with(src: &dyn DifferenceSource, geom: &ProbeGeometry, grid: &GridSpec) -> Result<FourierSample> {
    check_frequency(geom, src.lambda())?;
    let f = plane_wave_trace(geom, WaveSign::Plus, grid);
    let g = plane_wave_trace(geom, WaveSign::Minus, grid);
    let value = boundary_inner_product(&src.apply_difference(&f)?, &g, grid)?;
    Ok(FourierSample {
        xi: geom.xi,
        zeta: geom.zeta(),
        value,
        tau_used: geom.tau,
        source: src.name(),
    })
}

fn build_source(q: &Potential, grid: &GridSpec, tau: f64, source: ProbeSource) -> Result<Box<dyn DifferenceSource>> {
    let lambda = C64::new(tau, 1.0) * C64::new(tau, 1.0);
    let zero = Potential::zero(grid);
    Ok(match source {
        ProbeSource::Direct => Box::new(DirectDifference::new(q, &zero, grid, lambda)?),
        ProbeSource::Spectral { k, n_drop } => {
            let sd_q = Arc::new(solve_eigen(q, grid, k)?);
            let sd_0 = Arc::new(solve_eigen(&zero, grid, k)?);
            Box::new(SpectralDifference::new(sd_q, sd_0, n_drop, lambda)?)
        }
    })
}

/// Estimates `q^(xi (1 + i/tau))` by `S(q) - S(0)`.
pub fn recover_fourier(
    q: &Potential,
    xi: [f64; 2],
    tau: f64,
    grid: &GridSpec,
    source: ProbeSource,
) -> Result<FourierSample> {
    let geom = if xi == [0.0, 0.0] {
        ProbeGeometry::dc(tau)?
    } else {
        make_geometry(xi, tau)?
    };
    let src = build_source(q, grid, tau, source)?;
    sample_with(src.as_ref(), &geom, grid)
}

/// Settings of the Fourier reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReconstructionOptions {
    /// Cutoff radius is `multiplier * tau^(1/(n+2))`.
    pub cutoff_multiplier: f64,
    /// Smallest admissible number of lattice modes per axis in the ball.
    pub min_modes_per_axis: usize,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            cutoff_multiplier: 3.0,
            min_modes_per_axis: 3,
        }
    }
}

/// Error budget of a reconstruction.
#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionReport {
    pub tau: f64,
    pub cutoff: f64,
    pub cutoff_multiplier: f64,
    pub modes: usize,
    pub source: String,
    /// `||q_est - q_true||` in the discrete L2 norm.
    pub l2_error: f64,
    /// Parseval norm of the coefficient errors inside the ball, against the
    /// Riemann-sum transform at real frequencies.
    pub lowfreq_residual: f64,
    /// Energy of the true potential outside the cutoff ball.
    pub highfreq_truncation: f64,
    /// `tau * max |estimate - q^(xi (1 + i/tau))|` over the samples.
    pub remainder_fit: f64,
}

/// Lattice frequencies `(2 pi a / lx, 2 pi b / ly)` inside the ball of radius
/// `cutoff` and admissible for probes at `tau`, in lexicographic order.
pub fn lattice_in_ball(grid: &GridSpec, cutoff: f64, tau: f64) -> Vec<[f64; 2]> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = cutoff.min(1.98 * tau);
    let ax = (r * grid.lx() / two_pi).floor() as i64;
    let ay = (r * grid.ly() / two_pi).floor() as i64;
    let mut out = Vec::new();
    for a in -ax..=ax {
        for b in -ay..=ay {
            let xi = [two_pi * a as f64 / grid.lx(), two_pi * b as f64 / grid.ly()];
            if xi[0].hypot(xi[1]) <= r {
                out.push(xi);
            }
        }
    }
    out
}

/// Reconstructs a potential by Fourier synthesis of probe estimates from a
/// difference source; `truth` is used only for the error report.
pub fn reconstruct_from_source(
    truth: &Potential,
    src: &dyn DifferenceSource,
    tau: f64,
    grid: &GridSpec,
    opts: &ReconstructionOptions,
) -> Result<(Potential, ReconstructionReport, Vec<FourierSample>)> {
    if !(opts.cutoff_multiplier > 0.0) {
        return Err(Error::InvalidParameter("cutoff multiplier must be positive".into()));
    }
    let cutoff = opts.cutoff_multiplier * tau.powf(0.25);
    let lattice = lattice_in_ball(grid, cutoff, tau);
    let two_pi = 2.0 * std::f64::consts::PI;
    let per_axis = |l: f64| 2 * ((cutoff.min(1.98 * tau) * l / two_pi).floor() as usize) + 1;
    if lattice.is_empty() {
        return Err(Error::InvalidParameter("cutoff ball contains no lattice modes".into()));
    }
    let min_axis = per_axis(grid.lx()).min(per_axis(grid.ly()));
    if min_axis < opts.min_modes_per_axis {
        return Err(Error::InvalidParameter(format!(
            "cutoff ball of radius {cutoff:.3} holds {min_axis} lattice modes per axis, below {}",
            opts.min_modes_per_axis
        )));
    }
    let samples: Vec<FourierSample> = lattice
        .par_iter()
        .map(|xi| {
            let geom = if *xi == [0.0, 0.0] {
                ProbeGeometry::dc(tau)?
            } else {
                make_geometry(*xi, tau)?
            };
            sample_with(src, &geom, grid)
        })
        .collect::<Result<_>>()?;
    let area = grid.area();
    let values: Vec<f64> = (0..grid.n_int())
        .map(|p| {
            let (x, y) = grid.interior_point(p);
            let s: C64 = samples
                .iter()
                .map(|s| s.value * (C64::i() * (s.xi[0] * x + s.xi[1] * y)).exp())
                .sum();
            s.re / area
        })
        .collect();
    let estimate = Potential::from_values(format!("recon({})", truth.id), values, grid)?;
    let l2_error = estimate.difference(truth, grid)?.l2_norm(grid);
    let mut low = 0.0;
    let mut captured = 0.0;
    let mut rem = 0.0f64;
    for s in &samples {
        let real = [C64::new(s.xi[0], 0.0), C64::new(s.xi[1], 0.0)];
        let exact = fourier_riemann(truth, real, grid);
        low += (s.value - exact).norm_sqr();
        captured += exact.norm_sqr();
        rem = rem.max((s.value - fourier_riemann(truth, s.zeta, grid)).norm() * tau);
    }
    let total = truth.l2_norm(grid).powi(2);
    let report = ReconstructionReport {
        tau,
        cutoff,
        cutoff_multiplier: opts.cutoff_multiplier,
        modes: samples.len(),
        source: src.name(),
        l2_error,
        lowfreq_residual: (low / area).sqrt(),
        highfreq_truncation: (total - captured / area).max(0.0).sqrt(),
        remainder_fit: rem,
    };
    Ok((estimate, report, samples))
}

/// Generates data for `q_true`, probes it at `tau` and reconstructs.
pub fn reconstruct_potential(
    q_true: &Potential,
    tau: f64,
    grid: &GridSpec,
    source: ProbeSource,
    opts: &ReconstructionOptions,
) -> Result<(Potential, ReconstructionReport)> {
    let src = build_source(q_true, grid, tau, source)?;
    let (est, report, _) = reconstruct_from_source(q_true, src.as_ref(), tau, grid, opts)?;
    Ok((est, report))
}

/// Fitted decay of the probe error `|estimate - q^(zeta)|` over a sweep of
/// `tau`: returns the errors and the log-log slope.
pub fn probe_error_sweep(
    q: &Potential,
    xi: [f64; 2],
    taus: &[f64],
    grid: &GridSpec,
) -> Result<(Vec<f64>, f64)> {
    let errs = taus
        .iter()
        .map(|&t| {
            let s = recover_fourier(q, xi, t, grid, ProbeSource::Direct)?;
            Ok((s.value - fourier_riemann(q, s.zeta, grid)).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = loglog_slope(taus, &errs)?;
    Ok((errs, slope))
}

/// Writes Fourier samples as CSV rows `(xi1, xi2, tau, re, im, source)`.
pub fn write_samples_csv(samples: &[FourierSample], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["xi1", "xi2", "tau", "re", "im", "source"])?;
    for s in samples {
        w.write_record([
            s.xi[0].to_string(),
            s.xi[1].to_string(),
            s.tau_used.to_string(),
            s.value.re.to_string(),
            s.value.im.to_string(),
            s.source.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
