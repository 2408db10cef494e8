//! Globally adaptive Gauss-Kronrod (7, 15) quadrature on finite intervals.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

/// Integral value with the accumulated Kronrod error estimate.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let value = kron * h;
    let err = ((kron - gauss) * h).norm();
    (value, err)
}

/// Integrates a complex-valued function over `[a, b]`, starting from the
/// given breakpoints (which must lie inside the interval).
pub fn integrate_with_breaks<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("interval endpoints must be finite".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|x| *x > lo && *x < hi))
        .chain(std::iter::once(hi))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut panels: Vec<Panel> = pts
        .windows(2)
        .map(|w| {
            let (value, error) = gk15(&f, w[0], w[1]);
            Panel {
                a: w[0],
                b: w[1],
                value,
                error,
            }
        })
        .collect();
    loop {
        let total: Complex64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(Error::Quadrature("integrand produced a non-finite value".into()));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            return Ok(QuadResult {
                value: total * sign,
                error: err,
            });
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} above tolerance after {} panels",
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature("panel width reached machine resolution".into()));
        }
        for (a, b) in [(p.a, mid), (mid, p.b)] {
            let (value, error) = gk15(&f, a, b);
            panels.push(Panel { a, b, value, error });
        }
    }
}

pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_with_breaks(f, a, b, &[], opts)
}

/// Real-valued convenience wrapper around [`integrate_with_breaks`].
pub fn integrate_real<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<(f64, f64)> {
    let r = integrate_with_breaks(|x| Complex64::new(f(x), 0.0), a, b, breaks, opts)?;
    Ok((r.value.re, r.error))
}

/// Integral of a real function over `[a, inf)`: `[a, split]` directly with
/// the given breakpoints and `[split, inf)` through `t = split / u`.  The
/// piece `u < 1e-30` is dropped, which is harmless for integrands decaying
/// faster than `1/t`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    split: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<(f64, f64)> {
    if !(split > a && split > 0.0) {
        return Err(Error::Quadrature("split point must exceed the lower limit and be positive".into()));
    }
    let (head, e1) = integrate_real(&f, a, split, breaks, opts)?;
    let ubreaks = geometric_breaks(1e-30, 1.0, 8.0);
    let (tail, e2) = integrate_real(|u| f(split / u) * split / (u * u), 0.0, 1.0, &ubreaks, opts)?;
    Ok((head + tail, e1 + e2))
}

/// Breakpoints `a, a r, a r^2, ...` up to `b`, used to resolve integrands that
/// vary on a logarithmic scale.
pub fn geometric_breaks(a: f64, b: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if a <= 0.0 || ratio <= 1.0 {
        return out;
    }
    let mut x = a;
    while x < b {
        out.push(x);
        x *= ratio;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semi_infinite_power() {
        let r = integrate_semi_infinite(|x| x.powf(-2.5), 1.0, 4.0, &[], QuadOptions::default()).unwrap();
        assert!((r.0 - 1.0 / 1.5).abs() < 1e-10);
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_real(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, &[], QuadOptions::default()).unwrap();
        assert!((r.0 - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_resolved() {
        // Lorentzian of width 1e-3 centred inside the interval.
        let w = 1e-3;
        let r = integrate_real(|x| w / (x * x + w * w), -1.0, 1.0, &[0.0], QuadOptions::default()).unwrap();
        let exact = 2.0 * (1.0 / w).atan();
        assert!((r.0 - exact).abs() < 1e-9);
    }

    #[test]
    fn reversed_interval_changes_sign() {
        let f = |x: f64| x.exp();
        let a = integrate_real(f, 0.0, 1.0, &[], QuadOptions::default()).unwrap().0;
        let b = integrate_real(f, 1.0, 0.0, &[], QuadOptions::default()).unwrap().0;
        assert!((a + b).abs() < 1e-15 && (a - (1f64.exp() - 1.0)).abs() < 1e-13);
    }
}
