//! Dirichlet-to-Neumann maps: direct boundary-value solves, spectral series
//! for derivatives and differences, and checks of their decay and integral
//! representation.

mod checks;
mod direct;
mod series;

use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryField, GridSpec, HsNorm};

pub use checks::{
    divided_difference, verify_dtn_decay, verify_integral_formula, DecayReport, DecayRow, IntegralFormulaReport,
};
pub use direct::{boundary_layer, dtn_direct, solve_bvp, BoundaryLayer, BvpSolver};
pub use series::{
    dtn_derivative_series, dtn_difference_series, dtn_spectral, split_hat_tilde, DifferenceSeries, SeriesOptions,
    TailModel, TildeHandle,
};

/// How a [`DtnMatrix`] was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DtnKind {
    Direct,
    SeriesDerivative { order: u32, truncation: usize, shift: usize },
    SeriesDifference { truncation: usize, shift: usize },
    /// Boundary-layer part plus the full eigenfunction series.
    Spectral { truncation: usize },
    LowRankHat { n: usize },
    /// Linear combination of other maps.
    Combination,
}

/// A Dirichlet-to-Neumann type operator on the boundary nodes of a grid.
/// `entries` act on node values; the bilinear pairing uses the boundary
/// quadrature weights.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    pub entries: Mat<Complex64>,
    pub lambda: Complex64,
    pub potential_id: String,
    pub grid: GridSpec,
    pub kind: DtnKind,
    pub tail_bound: Option<f64>,
}

/// Discrete surrogates of the `L2 -> L2` and `H^{1/2} -> L2` operator norms
/// on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorms {
    pub l2_to_l2: f64,
    pub h12_to_l2: f64,
}

/// Anything that maps Dirichlet data at a fixed spectral parameter to
/// Neumann data.
pub trait DtnOperator: Send + Sync {
    fn lambda(&self) -> Complex64;
    fn apply(&self, f: &BoundaryField) -> Result<BoundaryField>;
}

fn max_singular_value(m: &Mat<Complex64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let s = m
        .singular_values()
        .map_err(|e| Error::SolverBreakdown(format!("singular values failed: {e:?}")))?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

impl DtnMatrix {
    pub fn n_bd(&self) -> usize {
        self.entries.nrows()
    }

    pub fn zeros(grid: &GridSpec, lambda: Complex64, potential_id: &str, kind: DtnKind) -> Self {
        let n = grid.n_bd();
        Self {
            entries: Mat::zeros(n, n),
            lambda,
            potential_id: potential_id.to_string(),
            grid: grid.clone(),
            kind,
            tail_bound: None,
        }
    }

    pub fn apply_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_bd();
        (0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)] * f[j]).sum())
            .collect()
    }

    /// The bilinear pairing `<Lambda f, g>`.
    pub fn pairing(&self, f: &BoundaryField, g: &BoundaryField) -> Result<Complex64> {
        let lf = DtnOperator::apply(self, f)?;
        crate::grid::boundary_inner_product(&lf, g, &self.grid)
    }

    /// Largest entry of `D Lambda - (D Lambda)^T` relative to the largest
    /// entry of `D Lambda`, where `D` holds the quadrature weights.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n_bd();
        let w = self.grid.weights();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.entries[(i, j)] * w[i];
                let b = self.entries[(j, i)] * w[j];
                num = num.max((a - b).norm());
                den = den.max(a.norm());
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn norms(&self, hs: &HsNorm) -> Result<OperatorNorms> {
        let n = self.n_bd();
        let sw = hs.sqrt_weights();
        if sw.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sw.len() });
        }
        let l2 = Mat::<Complex64>::from_fn(n, n, |i, j| self.entries[(i, j)] * (sw[i] / sw[j]));
        let winv = hs.inverse_weight(0.5);
        let dl = Mat::<Complex64>::from_fn(n, n, |i, j| self.entries[(i, j)] * sw[i]);
        let h12 = dl * winv;
        Ok(OperatorNorms {
            l2_to_l2: max_singular_value(&l2)?,
            h12_to_l2: max_singular_value(&h12)?,
        })
    }

    fn check_same(&self, other: &DtnMatrix) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("maps live on different grids".into()));
        }
        Ok(())
    }

    /// `self - other`.
    pub fn difference(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        self.check_same(other)?;
        Ok(DtnMatrix {
            entries: &self.entries - &other.entries,
            lambda: self.lambda,
            potential_id: format!("{}-{}", self.potential_id, other.potential_id),
            grid: self.grid.clone(),
            kind: DtnKind::Combination,
            tail_bound: match (self.tail_bound, other.tail_bound) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            },
        })
    }

    /// `self + other`.
    pub fn sum(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        self.check_same(other)?;
        Ok(DtnMatrix {
            entries: &self.entries + &other.entries,
            lambda: self.lambda,
            potential_id: self.potential_id.clone(),
            grid: self.grid.clone(),
            kind: DtnKind::Combination,
            tail_bound: match (self.tail_bound, other.tail_bound) {
                (Some(a), Some(b)) => Some(a + b),
                (a, b) => a.or(b),
            },
        })
    }

    pub fn scaled(&self, c: Complex64) -> DtnMatrix {
        let mut out = self.clone();
        let n = self.n_bd();
        out.entries = Mat::from_fn(n, n, |i, j| self.entries[(i, j)] * c);
        out.kind = DtnKind::Combination;
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let n = self.n_bd();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                m = m.max(self.entries[(i, j)].norm());
            }
        }
        m
    }

    /// Writes `<stem>.csv` with rows `(row, col, re, im)` and `<stem>.json`
    /// with the metadata.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            lambda: [f64; 2],
            kind: &'a DtnKind,
            #[serde(rename = "K")]
            k: Option<usize>,
            #[serde(rename = "N")]
            n: Option<usize>,
            tail_bound: Option<f64>,
            potential_id: &'a str,
        }
        let (k, n) = match &self.kind {
            DtnKind::SeriesDerivative { truncation, shift, .. } | DtnKind::SeriesDifference { truncation, shift } => {
                (Some(*truncation), Some(*shift))
            }
            DtnKind::Spectral { truncation } => (Some(*truncation), None),
            DtnKind::LowRankHat { n } => (None, Some(*n)),
            _ => (None, None),
        };
        let meta = Meta {
            lambda: [self.lambda.re, self.lambda.im],
            kind: &self.kind,
            k,
            n,
            tail_bound: self.tail_bound,
            potential_id: &self.potential_id,
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        w.write_record(["row", "col", "re", "im"])?;
        for i in 0..self.n_bd() {
            for j in 0..self.n_bd() {
                let v = self.entries[(i, j)];
                w.write_record([i.to_string(), j.to_string(), v.re.to_string(), v.im.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl DtnOperator for DtnMatrix {
    fn lambda(&self) -> Complex64 {
        self.lambda
    }

    fn apply(&self, f: &BoundaryField) -> Result<BoundaryField> {
        self.grid.check_field(f)?;
        Ok(BoundaryField::new(self.apply_values(&f.values)))
    }
}
