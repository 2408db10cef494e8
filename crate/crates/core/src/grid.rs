//! Discrete geometry of the rectangle: interior lattice, boundary nodes,
//! boundary quadrature and the Sobolev surrogate norms on the boundary.

use std::ops::{Add, Mul, Sub};

use faer::{Mat, Side as FaerSide};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form of a grid: side lengths and interior node counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Side of the rectangle a boundary node lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// A boundary node together with the data needed by boundary quadrature and
/// the discrete normal derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub side: Side,
    pub x: f64,
    pub y: f64,
    pub arclength: f64,
    /// Interior node adjacent in the inward normal direction.
    pub neighbor: usize,
    /// Grid spacing across the boundary.
    pub normal_spacing: f64,
    /// Grid spacing along the side.
    pub tangential_spacing: f64,
    /// Periodic trapezoid weight in arclength.
    pub weight: f64,
}

impl BoundaryNode {
    /// Ratio of the flux length of the node to its quadrature weight.  It is
    /// 1 except next to corners, where the weight also covers the gap across
    /// the corner.
    pub fn flux_factor(&self) -> f64 {
        self.tangential_spacing / self.weight
    }
}

/// Uniform lattice on `[0, lx] x [0, ly]` with `nx * ny` interior nodes
/// (row-major, x fastest) and `2 nx + 2 ny` boundary nodes ordered
/// counterclockwise from the corner at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct GridSpec {
    params: GridParams,
    hx: f64,
    hy: f64,
    boundary: Vec<BoundaryNode>,
}

impl TryFrom<GridParams> for GridSpec {
    type Error = Error;
    fn try_from(p: GridParams) -> Result<Self> {
        build_grid(p.lx, p.ly, p.nx, p.ny)
    }
}

impl From<GridSpec> for GridParams {
    fn from(g: GridSpec) -> Self {
        g.params
    }
}

/// Builds a grid; rejects non-positive lengths and fewer than 8 interior
/// nodes per axis.
pub fn build_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<GridSpec> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "side lengths must be positive and finite, got {lx} x {ly}"
        )));
    }
    if nx < 8 || ny < 8 {
        return Err(Error::InvalidGrid(format!(
            "at least 8 interior nodes per axis are required, got {nx} x {ny}"
        )));
    }
    let hx = lx / (nx + 1) as f64;
    let hy = ly / (ny + 1) as f64;
    let idx = |i: usize, j: usize| (j - 1) * nx + (i - 1);
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    let mut push = |side, x, y, s, neighbor, hn, ht| {
        boundary.push(BoundaryNode {
            side,
            x,
            y,
            arclength: s,
            neighbor,
            normal_spacing: hn,
            tangential_spacing: ht,
            weight: 0.0,
        })
    };
    for i in 1..=nx {
        let x = i as f64 * hx;
        push(Side::Bottom, x, 0.0, x, idx(i, 1), hy, hx);
    }
    for j in 1..=ny {
        let y = j as f64 * hy;
        push(Side::Right, lx, y, lx + y, idx(nx, j), hx, hy);
    }
    for i in (1..=nx).rev() {
        let x = i as f64 * hx;
        push(Side::Top, x, ly, lx + ly + (lx - x), idx(i, ny), hy, hx);
    }
    for j in (1..=ny).rev() {
        let y = j as f64 * hy;
        push(Side::Left, 0.0, y, 2.0 * lx + ly + (ly - y), idx(1, j), hx, hy);
    }
    let perimeter = 2.0 * (lx + ly);
    let n = boundary.len();
    for k in 0..n {
        let next = if k + 1 == n {
            boundary[0].arclength + perimeter
        } else {
            boundary[k + 1].arclength
        };
        let prev = if k == 0 {
            boundary[n - 1].arclength - perimeter
        } else {
            boundary[k - 1].arclength
        };
        boundary[k].weight = 0.5 * (next - prev);
    }
    Ok(GridSpec {
        params: GridParams { lx, ly, nx, ny },
        hx,
        hy,
        boundary,
    })
}

impl GridSpec {
    pub fn params(&self) -> GridParams {
        self.params
    }
    pub fn lx(&self) -> f64 {
        self.params.lx
    }
    pub fn ly(&self) -> f64 {
        self.params.ly
    }
    pub fn nx(&self) -> usize {
        self.params.nx
    }
    pub fn ny(&self) -> usize {
        self.params.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    /// Area of one interior cell, `hx * hy`.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn n_int(&self) -> usize {
        self.params.nx * self.params.ny
    }
    pub fn n_bd(&self) -> usize {
        self.boundary.len()
    }
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.params.lx + self.params.ly)
    }
    pub fn area(&self) -> f64 {
        self.params.lx * self.params.ly
    }
    /// Largest spacing, used as the mesh size `h`.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }
    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }
    pub fn weights(&self) -> Vec<f64> {
        self.boundary.iter().map(|b| b.weight).collect()
    }

    /// Row-major index of the interior node `(i, j)` with `1 <= i <= nx`,
    /// `1 <= j <= ny`.
    pub fn interior_index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.nx()).contains(&i) && (1..=self.ny()).contains(&j));
        (j - 1) * self.params.nx + (i - 1)
    }

    /// Lattice indices `(i, j)` of an interior node.
    pub fn interior_ij(&self, p: usize) -> (usize, usize) {
        (p % self.params.nx + 1, p / self.params.nx + 1)
    }

    pub fn interior_point(&self, p: usize) -> (f64, f64) {
        let (i, j) = self.interior_ij(p);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    /// Distance from an interior node to the boundary of the rectangle.
    pub fn distance_to_boundary(&self, p: usize) -> f64 {
        let (x, y) = self.interior_point(p);
        x.min(self.lx() - x).min(y).min(self.ly() - y)
    }

    /// Samples a function of the position at the boundary nodes.
    pub fn sample_boundary<F: Fn(f64, f64) -> Complex64>(&self, f: F) -> BoundaryField {
        BoundaryField::new(self.boundary.iter().map(|b| f(b.x, b.y)).collect())
    }

    /// Samples a function of the arclength at the boundary nodes.
    pub fn sample_arclength<F: Fn(f64) -> Complex64>(&self, f: F) -> BoundaryField {
        BoundaryField::new(self.boundary.iter().map(|b| f(b.arclength)).collect())
    }

    /// The four corners with the two nearest boundary nodes on each adjacent
    /// side: `(a1, a2, b1, b2)` where `a*` precede and `b*` follow the corner
    /// in counterclockwise order.
    pub fn corner_stencils(&self) -> [[usize; 4]; 4] {
        let (nx, ny) = (self.nx(), self.ny());
        let n = self.n_bd();
        let starts = [0, nx, nx + ny, 2 * nx + ny];
        let mut out = [[0; 4]; 4];
        for (c, &s) in starts.iter().enumerate() {
            let a1 = (s + n - 1) % n;
            let a2 = (s + n - 2) % n;
            out[c] = [a1, a2, s, s + 1];
        }
        out
    }

    pub fn check_field(&self, f: &BoundaryField) -> Result<()> {
        if f.len() != self.n_bd() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bd(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Complex samples at the boundary nodes of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    pub values: Vec<Complex64>,
}

impl BoundaryField {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }
    pub fn zeros(n: usize) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); n])
    }
    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn scale(&self, c: Complex64) -> Self {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }
    /// Largest modulus of the samples.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Add for &BoundaryField {
    type Output = BoundaryField;
    fn add(self, rhs: Self) -> BoundaryField {
        assert_eq!(self.len(), rhs.len());
        BoundaryField::new(self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &BoundaryField {
    type Output = BoundaryField;
    fn sub(self, rhs: Self) -> BoundaryField {
        assert_eq!(self.len(), rhs.len());
        BoundaryField::new(self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect())
    }
}

impl Mul<Complex64> for &BoundaryField {
    type Output = BoundaryField;
    fn mul(self, c: Complex64) -> BoundaryField {
        self.scale(c)
    }
}

/// Trapezoid approximation of the bilinear pairing `int_Gamma f g dsigma`
/// (no complex conjugation).
pub fn boundary_inner_product(f: &BoundaryField, g: &BoundaryField, grid: &GridSpec) -> Result<Complex64> {
    grid.check_field(f)?;
    grid.check_field(g)?;
    Ok(pairing(&f.values, &g.values, grid))
}

pub(crate) fn pairing(f: &[Complex64], g: &[Complex64], grid: &GridSpec) -> Complex64 {
    let mut acc = crate::numerics::sum::ComplexKahanSum::new();
    for ((a, b), node) in f.iter().zip(g).zip(grid.boundary()) {
        acc.add((a * b) * node.weight);
    }
    acc.value()
}

/// Weighted L2(Gamma) norm, `sqrt(sum w |f|^2)`.
pub fn l2_norm(f: &BoundaryField, grid: &GridSpec) -> Result<f64> {
    grid.check_field(f)?;
    Ok(f.values
        .iter()
        .zip(grid.boundary())
        .map(|(v, b)| v.norm_sqr() * b.weight)
        .sum::<f64>()
        .sqrt())
}

/// Periodic Fourier frequencies in the order used by [`HsNorm`]:
/// `0, 1, -1, 2, -2, ...`, ending with `n/2` when `n` is even.
pub fn fourier_frequencies(n: usize) -> Vec<i64> {
    let mut ks = Vec::with_capacity(n);
    ks.push(0);
    let mut k = 1;
    while ks.len() < n {
        ks.push(k);
        if ks.len() < n {
            ks.push(-k);
        }
        k += 1;
    }
    ks
}

/// Sobolev surrogate norms on the boundary.
///
/// The periodic modes `exp(2 pi i k s / P) / sqrt(P)`, sampled at the boundary
/// nodes, are orthonormalised in the trapezoid inner product in order of
/// increasing `|k|`.  A field is expanded in the resulting basis and the
/// coefficient of frequency `k` is weighted by `(1 + k^2)^(s/2)`.
pub struct HsNorm {
    freqs: Vec<i64>,
    /// `L^H F^{-1}`: maps samples to orthonormal coefficients.
    analysis: Mat<Complex64>,
    /// `F L^{-H}`: maps orthonormal coefficients back to samples.
    synthesis: Mat<Complex64>,
    weights: Vec<f64>,
}

impl HsNorm {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let n = grid.n_bd();
        let freqs = fourier_frequencies(n);
        let p = grid.perimeter();
        let f = Mat::<Complex64>::from_fn(n, n, |j, c| {
            let s = grid.boundary()[j].arclength;
            Complex64::from_polar(1.0 / p.sqrt(), 2.0 * std::f64::consts::PI * freqs[c] as f64 * s / p)
        });
        let w = grid.weights();
        let gram = Mat::<Complex64>::from_fn(n, n, |a, b| {
            (0..n).map(|j| f[(j, a)].conj() * f[(j, b)] * w[j]).sum()
        });
        let llt = gram
            .llt(FaerSide::Lower)
            .map_err(|_| Error::SolverBreakdown("boundary Fourier Gram matrix is not positive definite".into()))?;
        let l = llt.L().to_owned();
        let lu = f.partial_piv_lu();
        let finv = faer::linalg::solvers::Solve::solve(&lu, Mat::<Complex64>::identity(n, n));
        let analysis = l.adjoint() * &finv;
        // F L^{-H} = (L^{-1} F^H)^H, computed by a triangular solve.
        let mut linv_fh = f.adjoint().to_owned();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), linv_fh.as_mut(), faer::Par::Seq);
        let synthesis = linv_fh.adjoint().to_owned();
        Ok(Self {
            freqs,
            analysis,
            synthesis,
            weights: w,
        })
    }

    pub fn frequencies(&self) -> &[i64] {
        &self.freqs
    }

    /// Orthonormal coefficients of a field.
    pub fn coefficients(&self, f: &BoundaryField) -> Result<Vec<Complex64>> {
        if f.len() != self.freqs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.freqs.len(),
                got: f.len(),
            });
        }
        let n = f.len();
        Ok((0..n)
            .map(|r| (0..n).map(|c| self.analysis[(r, c)] * f.values[c]).sum())
            .collect())
    }

    pub fn norm(&self, f: &BoundaryField, s: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!("Sobolev index {s} outside [-1, 1]")));
        }
        let c = self.coefficients(f)?;
        Ok(c.iter()
            .zip(&self.freqs)
            .map(|(v, &k)| (1.0 + (k * k) as f64).powf(s) * v.norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Matrix `W^{-1}` with `||f||_{H^s} = ||W f||_2`, evaluated for `s`.
    pub fn inverse_weight(&self, s: f64) -> Mat<Complex64> {
        let n = self.freqs.len();
        Mat::from_fn(n, n, |r, c| {
            let k = self.freqs[c] as f64;
            self.synthesis[(r, c)] * (1.0 + k * k).powf(-0.5 * s)
        })
    }

    /// Square roots of the trapezoid weights.
    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }
}

/// One-shot Sobolev surrogate norm; builds the basis for the grid each call.
pub fn hs_norm(f: &BoundaryField, s: f64, grid: &GridSpec) -> Result<f64> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("Sobolev index {s} outside [-1, 1]")));
    }
    grid.check_field(f)?;
    HsNorm::new(grid)?.norm(f, s)
}
