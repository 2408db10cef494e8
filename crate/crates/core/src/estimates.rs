//! Numerical checks of the summation lemmas: the eigenvalue series
//! `I(lambda) = sum_j j^mu / |lambda - lambda_j|^nu`, its integral model
//! `I#(tau)` and the three power-law regimes they obey.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::fit::{least_squares, loglog_slope};
use crate::numerics::quadrature::{integrate_semi_infinite, QuadOptions};
use crate::numerics::sum::KahanSum;

/// Slack added to every predicted slope before a fit is declared passing.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Where the eigenvalues in the series come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EigenSource {
    /// `lambda_j = (c_tilde j^(1/n) + jitter sin(j phase))^2`, which obeys
    /// `|lambda_j^(1/2) - c_tilde j^(1/n)| <= jitter`.
    Synthetic {
        c_tilde: f64,
        #[serde(default)]
        jitter: f64,
        #[serde(default = "default_phase")]
        phase: f64,
    },
    /// Measured eigenvalues with Weyl constants describing the continuation
    /// beyond the list.
    Explicit { eigenvalues: Vec<f64>, c_tilde: f64, a_n: f64 },
}

fn default_phase() -> f64 {
    1.0
}

impl EigenSource {
    pub fn unit_weyl(n: u32) -> Self {
        // lambda_j ~ 4 pi j / |Omega| for the unit square
        let c = if n == 2 { (4.0 * std::f64::consts::PI).sqrt() } else { 1.0 };
        EigenSource::Synthetic {
            c_tilde: c,
            jitter: 0.0,
            phase: 1.0,
        }
    }

    fn c_tilde(&self) -> f64 {
        match self {
            EigenSource::Synthetic { c_tilde, .. } | EigenSource::Explicit { c_tilde, .. } => *c_tilde,
        }
    }

    /// The Weyl remainder constant `A_n`.
    pub fn a_n(&self) -> f64 {
        match self {
            EigenSource::Synthetic { jitter, .. } => jitter.abs(),
            EigenSource::Explicit { a_n, .. } => *a_n,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            EigenSource::Synthetic { c_tilde, jitter, phase } => {
                *c_tilde > 0.0 && jitter.abs() < *c_tilde && phase.is_finite()
            }
            EigenSource::Explicit { eigenvalues, c_tilde, a_n } => {
                !eigenvalues.is_empty()
                    && eigenvalues.iter().all(|v| v.is_finite())
                    && *c_tilde > 0.0
                    && *a_n >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid eigenvalue source {self:?}")))
        }
    }

    /// Number of available eigenvalues, `None` for unlimited.
    fn available(&self) -> Option<usize> {
        match self {
            EigenSource::Synthetic { .. } => None,
            EigenSource::Explicit { eigenvalues, .. } => Some(eigenvalues.len()),
        }
    }

    /// `lambda_j` for one-based `j`.
    fn eigenvalue(&self, j: usize, n: u32) -> f64 {
        match self {
            EigenSource::Synthetic { c_tilde, jitter, phase } => {
                let jf = j as f64;
                (c_tilde * jf.powf(1.0 / n as f64) + jitter * (jf * phase).sin()).powi(2)
            }
            EigenSource::Explicit { eigenvalues, .. } => eigenvalues[j - 1],
        }
    }

    fn first(&self, n: u32) -> f64 {
        self.eigenvalue(1, n)
    }
}

/// Denominator `|lambda - lambda_j(1)|^nu1 |lambda - lambda_j(2)|^(nu - nu1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedDenominator {
    pub nu1: f64,
    pub second: EigenSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaQuery {
    pub n: u32,
    pub mu: f64,
    pub nu: f64,
    #[serde(default)]
    pub eps: f64,
    pub eigen: EigenSource,
    #[serde(default)]
    pub mixed: Option<MixedDenominator>,
}

/// The three power-law regimes, indexed by `b = (mu + 1) n / 2 - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `b >= 0`
    BNonNegative,
    /// `-1 <= b < 0`
    BMinusOneToZero,
    /// `b < -1`
    BBelowMinusOne,
}

impl Regime {
    pub fn of_b(b: f64) -> Self {
        if b >= 0.0 {
            Regime::BNonNegative
        } else if b >= -1.0 {
            Regime::BMinusOneToZero
        } else {
            Regime::BBelowMinusOne
        }
    }

    /// Classification through the equivalent conditions on `mu`.
    pub fn of_mu(mu: f64, n: u32) -> Self {
        let nf = n as f64;
        if mu >= 2.0 / nf - 1.0 {
            Regime::BNonNegative
        } else if mu >= -1.0 {
            Regime::BMinusOneToZero
        } else {
            Regime::BBelowMinusOne
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::BNonNegative => "b>=0",
            Regime::BMinusOneToZero => "-1<=b<0",
            Regime::BBelowMinusOne => "b<-1",
        }
    }
}

/// Predicted exponent of `tau` for `I#` (and for `I((tau + i)^2)`).
pub fn lemma2_prediction(b: f64, nu: f64, eps: f64) -> f64 {
    match Regime::of_b(b) {
        Regime::BNonNegative => 2.0 * b + 1.0 - nu,
        Regime::BMinusOneToZero => eps + b + 1.0 - nu,
        Regime::BBelowMinusOne => -nu,
    }
}

impl LemmaQuery {
    pub fn synthetic(n: u32, mu: f64, nu: f64) -> Self {
        Self {
            n,
            mu,
            nu,
            eps: 0.0,
            eigen: EigenSource::unit_weyl(n),
            mixed: None,
        }
    }

    pub fn b(&self) -> f64 {
        (self.mu + 1.0) * self.n as f64 / 2.0 - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(self.nu >= 0.0) || !self.mu.is_finite() || !(self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need finite mu, nu >= 0 and eps >= 0 (mu = {}, nu = {}, eps = {})",
                self.mu, self.nu, self.eps
            )));
        }
        let limit = 2.0 * self.nu / self.n as f64 - 1.0;
        if !(self.mu < limit) {
            return Err(Error::InvalidParameter(format!(
                "series diverges: mu = {} is not below 2 nu / n - 1 = {limit}",
                self.mu
            )));
        }
        self.eigen.validate()?;
        if let Some(m) = &self.mixed {
            if !(m.nu1 >= 0.0 && m.nu1 <= self.nu) {
                return Err(Error::InvalidParameter(format!("nu1 = {} must lie in [0, nu]", m.nu1)));
            }
            m.second.validate()?;
        }
        Ok(())
    }

    fn nu_split(&self) -> (f64, f64) {
        match &self.mixed {
            Some(m) => (m.nu1, self.nu - m.nu1),
            None => (self.nu, 0.0),
        }
    }

    fn available(&self) -> Option<usize> {
        let a = self.eigen.available();
        let b = self.mixed.as_ref().and_then(|m| m.second.available());
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, None) => x,
            (None, y) => y,
        }
    }

    fn c_tilde(&self) -> f64 {
        let c = self.eigen.c_tilde();
        self.mixed.as_ref().map_or(c, |m| c.min(m.second.c_tilde()))
    }

    fn a_n(&self) -> f64 {
        let a = self.eigen.a_n();
        self.mixed.as_ref().map_or(a, |m| a.max(m.second.a_n()))
    }

    fn lambda_1(&self) -> f64 {
        let l = self.eigen.first(self.n);
        self.mixed.as_ref().map_or(l, |m| l.min(m.second.first(self.n)))
    }

    fn term(&self, j: usize, lambda: Complex64) -> f64 {
        let (nu1, nu2) = self.nu_split();
        let mut d = (lambda - self.eigen.eigenvalue(j, self.n)).norm().powf(nu1);
        if let Some(m) = &self.mixed {
            d *= (lambda - m.second.eigenvalue(j, self.n)).norm().powf(nu2);
        }
        (j as f64).powf(self.mu) / d
    }

    /// Smallest cut beyond which every eigenvalue exceeds `2 |lambda|`
    /// according to the Weyl model.
    fn auto_cut(&self, lambda: Complex64) -> usize {
        let target = 2.0 * (2.0 * lambda.norm()).sqrt() + self.a_n();
        let k = (target / self.c_tilde()).powf(self.n as f64).ceil() as usize;
        (2 * k).max(1000)
    }
}

/// Partial sum of `I(lambda)` with tail information.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub partial: f64,
    pub k_cut: usize,
    /// Integral model `int_{K+1/2}^inf x^mu / |lambda - c^2 x^(2/n)|^nu dx`.
    pub tail_estimate: f64,
    /// Rigorous bound of the omitted terms, infinite when the Weyl model
    /// does not place `lambda_{K+1}` above `2 |lambda|`.
    pub tail_bound: f64,
}

impl SeriesValue {
    pub fn value(&self) -> f64 {
        self.partial + self.tail_estimate
    }
}

/// Evaluates `I(lambda)` up to `k_cut` terms (chosen from `|lambda|` when
/// absent, capped at the available data for measured eigenvalues).
pub fn eval_series_i(query: &LemmaQuery, lambda: Complex64, k_cut: Option<usize>) -> Result<SeriesValue> {
    query.validate()?;
    let mut k = k_cut.unwrap_or_else(|| query.auto_cut(lambda));
    if let Some(avail) = query.available() {
        k = k.min(avail);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K_cut must be positive".into()));
    }
    let mut acc = KahanSum::new();
    for j in 1..=k {
        let t = query.term(j, lambda);
        if !t.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} hits eigenvalue {j}")));
        }
        acc.add(t);
    }
    let n = query.n as f64;
    let (c, a) = (query.c_tilde(), query.a_n());
    let kf = k as f64;
    let p = query.mu - 2.0 * query.nu / n;
    let kappa = 1.0 - a / (c * kf.powf(1.0 / n));
    let floor = (c * (kf + 1.0).powf(1.0 / n) - a).max(0.0).powi(2);
    let tail_bound = if query.nu == 0.0 {
        kf.powf(p + 1.0) / (-p - 1.0)
    } else if kappa > 0.0 && floor >= 2.0 * lambda.norm() {
        2f64.powf(query.nu) * (kappa * c).powf(-2.0 * query.nu) * kf.powf(p + 1.0) / (-p - 1.0)
    } else {
        f64::INFINITY
    };
    let model = |x: f64| {
        let lam = c * c * x.powf(2.0 / n);
        x.powf(query.mu) / (lambda - lam).norm().powf(query.nu)
    };
    let start = kf + 0.5;
    let (tail_estimate, _) = integrate_semi_infinite(model, start, 4.0 * start, &[], tail_quad())?;
    Ok(SeriesValue {
        partial: acc.value(),
        k_cut: k,
        tail_estimate,
        tail_bound,
    })
}

fn tail_quad() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-12,
        max_intervals: 8000,
    }
}

fn lemma_quad() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-10,
        max_intervals: 8000,
    }
}

/// Middle-band contribution of the three-band split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandReport {
    pub half_width: f64,
    pub values: Vec<f64>,
    pub fitted_slope: Option<f64>,
    pub predicted_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub lemma: String,
    pub mu: Option<f64>,
    pub nu: f64,
    pub b: f64,
    pub regime: Regime,
    /// Sweep variable: `tau` for lemmas 1 and 2, the distance from
    /// `lambda` to `[lambda_1, inf)` for lemma 3.
    pub scale: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    /// Exponent as displayed in the statement being checked.
    pub printed_slope: f64,
    pub smallest_c: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub middle_band: Option<BandReport>,
    /// Largest relative disagreement between two independent evaluations.
    pub consistency_defect: Option<f64>,
}

fn finish_report(
    lemma: &str,
    mu: Option<f64>,
    nu: f64,
    b: f64,
    scale: Vec<f64>,
    values: Vec<f64>,
    predicted: f64,
    printed: f64,
) -> Result<BoundReport> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Quadrature(format!("{lemma}: non-positive value in sweep")));
    }
    let fitted = loglog_slope(&scale, &values)?;
    let smallest_c = scale
        .iter()
        .zip(&values)
        .map(|(t, v)| v / t.powf(predicted))
        .fold(0.0, f64::max);
    Ok(BoundReport {
        lemma: lemma.to_string(),
        mu,
        nu,
        b,
        regime: Regime::of_b(b),
        scale,
        values,
        fitted_slope: fitted,
        predicted_slope: predicted,
        printed_slope: printed,
        smallest_c,
        tolerance: SLOPE_TOLERANCE,
        pass: fitted <= predicted + SLOPE_TOLERANCE,
        middle_band: None,
        consistency_defect: None,
    })
}

fn check_sweep(taus: &[f64]) -> Result<()> {
    if taus.len() < 3 || taus.iter().any(|t| !(*t > 1.0)) {
        return Err(Error::InvalidParameter("need at least 3 values of tau, all above 1".into()));
    }
    let (lo, hi) = taus.iter().fold((f64::MAX, 0.0f64), |(l, h), t| (l.min(*t), h.max(*t)));
    if hi < 10.0 * lo {
        return Err(Error::InvalidParameter("the tau sweep must span at least one decade".into()));
    }
    Ok(())
}

/// `n` values geometrically spaced over `[lo, hi]`.
pub fn geometric_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Fits the decay of `I((tau + i)^2)` and compares it with the regime
/// prediction; the middle band `|lambda_j^(1/2) - tau| <= 2 A_n` is
/// reported separately.
pub fn check_lemma1(query: &LemmaQuery, taus: &[f64]) -> Result<BoundReport> {
    query.validate()?;
    check_sweep(taus)?;
    let b = query.b();
    if Regime::of_b(b) != Regime::of_mu(query.mu, query.n) {
        return Err(Error::InvalidParameter(format!(
            "regime classification disagrees for mu = {}, b = {b}",
            query.mu
        )));
    }
    let predicted = lemma2_prediction(b, query.nu, query.eps);
    let lambdas: Vec<Complex64> = taus.iter().map(|t| Complex64::new(*t, 1.0).powi(2)).collect();
    let values = lambdas
        .iter()
        .map(|l| Ok(eval_series_i(query, *l, None)?.value()))
        .collect::<Result<Vec<f64>>>()?;
    let half_width = 2.0 * query.a_n().max(0.5);
    let band: Vec<f64> = taus
        .iter()
        .zip(&lambdas)
        .map(|(tau, lam)| middle_band(query, *tau, *lam, half_width))
        .collect();
    let n = query.n as f64;
    let band_pred = n - 1.0 + n * query.mu - query.nu;
    let band_fit = if band.iter().all(|v| *v > 0.0) {
        Some(loglog_slope(taus, &band)?)
    } else {
        None
    };
    let mut report = finish_report("lemma1", Some(query.mu), query.nu, b, taus.to_vec(), values, predicted, predicted)?;
    report.middle_band = Some(BandReport {
        half_width,
        values: band,
        fitted_slope: band_fit,
        predicted_slope: band_pred,
    });
    Ok(report)
}

fn middle_band(query: &LemmaQuery, tau: f64, lambda: Complex64, half_width: f64) -> f64 {
    let n = query.n as f64;
    let (c, a) = (query.c_tilde(), query.a_n());
    let lo = (((tau - half_width - a).max(0.0) / c).powf(n)).floor().max(1.0) as usize;
    let mut hi = (((tau + half_width + a) / c).powf(n)).ceil() as usize + 1;
    if let Some(avail) = query.available() {
        hi = hi.min(avail);
    }
    let mut acc = KahanSum::new();
    for j in lo..=hi {
        let s = query.eigen.eigenvalue(j, query.n).sqrt();
        if (s - tau).abs() <= half_width {
            acc.add(query.term(j, lambda));
        }
    }
    acc.value()
}

/// `I#(tau) = int_1^inf t^b / ((t - tau^2)^2 + 4 tau^2)^(nu/2) dt`.
pub fn i_sharp(b: f64, nu: f64, tau: f64) -> Result<f64> {
    let t2 = tau * tau;
    let mut breaks = vec![t2];
    let mut w = tau;
    while w < t2 {
        breaks.push(t2 - w);
        breaks.push(t2 + w);
        w *= 4.0;
    }
    breaks.extend(crate::numerics::quadrature::geometric_breaks(1.0, t2, 4.0));
    let f = |t: f64| t.powf(b) / ((t - t2).powi(2) + 4.0 * t2).powf(nu / 2.0);
    let split = 4.0 * t2 + 10.0;
    Ok(integrate_semi_infinite(f, 1.0, split, &breaks, lemma_quad())?.0)
}

/// The same integral after `t = tau s + tau^2`:
/// `tau^(2b+1-nu) int_{1/tau - tau}^inf (s/tau + 1)^b / (s^2 + 4)^(nu/2) ds`.
pub fn i_sharp_substituted(b: f64, nu: f64, tau: f64) -> Result<f64> {
    let lo = 1.0 / tau - tau;
    let shift = -lo;
    // integrate in r = s - lo >= 0 so the semi-infinite helper applies
    let f = |r: f64| {
        let s = r + lo;
        (s / tau + 1.0).powf(b) / (s * s + 4.0).powf(nu / 2.0)
    };
    let mut breaks = vec![shift];
    let mut w = 2.0;
    while w < 4.0 * tau {
        breaks.push(shift - w);
        breaks.push(shift + w);
        w *= 4.0;
    }
    breaks.extend(crate::numerics::quadrature::geometric_breaks(1e-3, shift, 4.0));
    let split = shift + 4.0 * tau * tau + 10.0;
    let (v, _) = integrate_semi_infinite(f, 0.0, split, &breaks, lemma_quad())?;
    Ok(tau.powf(2.0 * b + 1.0 - nu) * v)
}

/// Closed form of `I#` for `b = 0`, `nu = 2`.
pub fn i_sharp_b0_nu2(tau: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 - ((1.0 - tau * tau) / (2.0 * tau)).atan()) / (2.0 * tau)
}

/// Fits the decay of `I#` over `taus` against the three-case prediction and
/// cross-checks the substituted form of the integral.
pub fn check_lemma2(b: f64, nu: f64, eps: f64, taus: &[f64]) -> Result<BoundReport> {
    if !(b - nu < -1.0) {
        return Err(Error::InvalidParameter(format!("I# diverges: b - nu = {} is not below -1", b - nu)));
    }
    check_sweep(taus)?;
    let mut values = Vec::with_capacity(taus.len());
    let mut defect = 0.0f64;
    for &tau in taus {
        let v = i_sharp(b, nu, tau)?;
        let s = i_sharp_substituted(b, nu, tau)?;
        defect = defect.max(((v - s) / v).abs());
        values.push(v);
    }
    let predicted = lemma2_prediction(b, nu, eps);
    let mut report = finish_report("lemma2", None, nu, b, taus.to_vec(), values, predicted, predicted)?;
    report.consistency_defect = Some(defect);
    Ok(report)
}

/// Exponent of `|lambda|` for `I(lambda)` along the negative axis:
/// `(mu+1) n/2 - nu` when `mu > -1` and `-nu` when `mu < -1`.
pub fn lemma3_prediction(mu: f64, nu: f64, n: u32) -> f64 {
    if mu < -1.0 {
        -nu
    } else {
        (mu + 1.0) * n as f64 / 2.0 - nu
    }
}

/// Fits `|I(lambda)|` against the distance from `lambda` to
/// `[lambda_1, inf)` over left half-plane points.
pub fn check_lemma3(query: &LemmaQuery, lambdas: &[Complex64]) -> Result<BoundReport> {
    query.validate()?;
    if lambdas.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 spectral parameters".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.re < 0.0) || l.norm() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda = {l} must satisfy Re lambda < 0 and |lambda| >= 1"
        )));
    }
    let l1 = query.lambda_1();
    let scale: Vec<f64> = lambdas
        .iter()
        .map(|l| if l.re >= l1 { l.im.abs() } else { (l.re - l1).hypot(l.im) })
        .collect();
    let values = lambdas
        .iter()
        .map(|l| Ok(eval_series_i(query, *l, None)?.value()))
        .collect::<Result<Vec<f64>>>()?;
    let predicted = lemma3_prediction(query.mu, query.nu, query.n);
    let printed = (query.mu + 1.0) * query.n as f64 / 2.0 - 1.0 - query.nu;
    finish_report("lemma3", Some(query.mu), query.nu, query.b(), scale, values, predicted, printed)
}

/// Two-sided fit of `I#` for one `(b, nu)` case.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessRow {
    pub b: f64,
    pub nu: f64,
    pub regime: Regime,
    pub predicted: f64,
    /// `2b + 1 - nu`, the first-case exponent.
    pub first_case: f64,
    pub fitted: f64,
    /// Largest and smallest secant slope between consecutive sweep points.
    pub upper_slope: f64,
    pub lower_slope: f64,
    /// Power in the fit `log I = s log tau + r log log tau + c`.
    pub slope_with_log: f64,
    pub log_coefficient: f64,
    /// The lower envelope is closer to `2b + 1 - nu` than to the regime
    /// prediction.
    pub lower_matches_first_case: bool,
}

pub fn probe_sharpness(cases: &[(f64, f64)], taus: &[f64]) -> Result<Vec<SharpnessRow>> {
    check_sweep(taus)?;
    cases
        .iter()
        .map(|&(b, nu)| {
            let r = check_lemma2(b, nu, 0.0, taus)?;
            let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
            let lv: Vec<f64> = r.values.iter().map(|v| v.ln()).collect();
            let secants: Vec<f64> = lt
                .windows(2)
                .zip(lv.windows(2))
                .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
                .collect();
            let upper = secants.iter().copied().fold(f64::MIN, f64::max);
            let lower = secants.iter().copied().fold(f64::MAX, f64::min);
            let rows: Vec<Vec<f64>> = lt.iter().map(|x| vec![*x, x.ln(), 1.0]).collect();
            let coef = least_squares(&rows, &lv)?;
            let first_case = 2.0 * b + 1.0 - nu;
            let other = b + 1.0 - nu;
            Ok(SharpnessRow {
                b,
                nu,
                regime: Regime::of_b(b),
                predicted: r.predicted_slope,
                first_case,
                fitted: r.fitted_slope,
                upper_slope: upper,
                lower_slope: lower,
                slope_with_log: coef[0],
                log_coefficient: coef[1],
                lower_matches_first_case: (lower - first_case).abs() < (lower - other).abs(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SweepRow<'a> {
    lemma: &'a str,
    mu: Option<f64>,
    nu: f64,
    b: f64,
    regime: &'a str,
    tau: f64,
    value: f64,
    predicted_slope: f64,
    fitted_slope: f64,
    pass: bool,
}

/// Writes one CSV row per sweep point of every report.
pub fn write_bound_csv(reports: &[BoundReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        for (tau, value) in r.scale.iter().zip(&r.values) {
            w.serialize(SweepRow {
                lemma: &r.lemma,
                mu: r.mu,
                nu: r.nu,
                b: r.b,
                regime: r.regime.label(),
                tau: *tau,
                value: *value,
                predicted_slope: r.predicted_slope,
                fitted_slope: r.fitted_slope,
                pass: r.pass,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_agree() {
        for mu in [-3.0, -1.5, -1.0, -0.5, 0.0, 0.5] {
            let b = (mu + 1.0) - 1.0;
            assert_eq!(Regime::of_b(b), Regime::of_mu(mu, 2));
        }
    }

    #[test]
    fn divergent_query_rejected() {
        let q = LemmaQuery::synthetic(2, 1.0, 2.0);
        assert!(q.validate().is_err());
        assert!(check_lemma2(0.5, 1.0, 0.0, &[8.0, 16.0, 100.0]).is_err());
    }

    #[test]
    fn substitution_matches() {
        for (b, nu) in [(0.0, 2.0), (-0.5, 1.0), (-2.0, 1.0)] {
            let a = i_sharp(b, nu, 12.0).unwrap();
            let s = i_sharp_substituted(b, nu, 12.0).unwrap();
            assert!(((a - s) / a).abs() < 1e-8, "{b} {nu}: {a} vs {s}");
        }
    }
}
