//! Least-squares fits used by the convergence and decay checks.

use crate::error::{Error, Result};

/// Ordinary least squares with a design matrix given row by row.
/// Returns the coefficient vector minimising the residual sum of squares.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: y.len(),
        });
    }
    let p = rows.first().map_or(0, Vec::len);
    if p == 0 || rows.len() < p {
        return Err(Error::InvalidParameter(format!(
            "least squares needs at least {p} observations, got {}",
            rows.len()
        )));
    }
    let a = faer::Mat::<f64>::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let b = faer::Mat::<f64>::from_fn(y.len(), 1, |i, _| y[i]);
    let qr = a.qr();
    let x = faer::linalg::solvers::SolveLstsq::solve_lstsq(&qr, &b);
    let out: Vec<f64> = (0..p).map(|j| x[(j, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("rank-deficient least squares".into()));
    }
    Ok(out)
}

/// Straight line fit `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&xi| vec![1.0, xi]).collect();
    let c = least_squares(&rows, y)?;
    Ok((c[0], c[1]))
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "log-log fit needs strictly positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.1)
}
