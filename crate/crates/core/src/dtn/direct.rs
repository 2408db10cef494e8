use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{DtnKind, DtnMatrix, DtnOperator};
use crate::error::{Error, Result};
use crate::grid::{BoundaryField, GridSpec};
use crate::numerics::banded::{BandedLu, BandedMatrix};
use crate::potential::Potential;
use crate::spectral::{assemble_operator, NodeOrdering, SchrodingerOperator};

/// The part of the discrete Dirichlet-to-Neumann map that is independent of
/// the potential.  It collects the half cells along the boundary: the
/// diagonal flux coefficients, a tangential stiffness along each side
/// (corner values extrapolated linearly from both adjacent sides) and the
/// boundary-strip mass.  As a bilinear form it equals
/// `diag + stiffness - lambda * mass`.
#[derive(Clone, Debug)]
pub struct BoundaryLayer {
    /// `h_tangential / h_normal` per node.
    pub flux: Vec<f64>,
    pub stiffness: Mat<f64>,
    pub mass: Mat<f64>,
    weights: Vec<f64>,
}

/// Builds the boundary layer of a grid.
pub fn boundary_layer(grid: &GridSpec) -> BoundaryLayer {
    let n = grid.n_bd();
    let nodes = grid.boundary();
    let mut stiffness = Mat::<f64>::zeros(n, n);
    let mut mass = Mat::<f64>::zeros(n, n);
    let add_outer = |m: &mut Mat<f64>, v: &[(usize, f64)], c: f64| {
        for &(a, va) in v {
            for &(b, vb) in v {
                m[(a, b)] += c * va * vb;
            }
        }
    };
    for j in 0..n {
        let b = &nodes[j];
        mass[(j, j)] += 0.5 * b.normal_spacing * b.tangential_spacing;
        let k = (j + 1) % n;
        if nodes[k].side == b.side {
            let c = 0.5 * b.normal_spacing / b.tangential_spacing;
            add_outer(&mut stiffness, &[(j, 1.0), (k, -1.0)], c);
        }
    }
    let quarter = 0.25 * grid.cell_area();
    for [a1, a2, b1, b2] in grid.corner_stencils() {
        let corner = [(a1, 1.0), (b1, 1.0), (a2, -0.5), (b2, -0.5)];
        add_outer(&mut mass, &corner, quarter);
        for end in [a1, b1] {
            let node = &nodes[end];
            let c = 0.5 * node.normal_spacing / node.tangential_spacing;
            let mut v: Vec<(usize, f64)> = corner.iter().map(|&(i, x)| (i, -x)).collect();
            v.push((end, 1.0));
            add_outer(&mut stiffness, &v, c);
        }
    }
    BoundaryLayer {
        flux: nodes.iter().map(|b| b.tangential_spacing / b.normal_spacing).collect(),
        stiffness,
        mass,
        weights: grid.weights(),
    }
}

impl BoundaryLayer {
    /// The operator `D^{-1} (diag + stiffness - lambda mass)` acting on node
    /// values, with `D` the quadrature weights.
    pub fn operator(&self, lambda: Complex64) -> Mat<Complex64> {
        let n = self.flux.len();
        Mat::from_fn(n, n, |i, j| {
            let mut v = Complex64::new(self.stiffness[(i, j)], 0.0) - lambda * self.mass[(i, j)];
            if i == j {
                v += self.flux[i];
            }
            v / self.weights[i]
        })
    }

    /// Derivative of [`BoundaryLayer::operator`] in `lambda`.
    pub fn derivative(&self) -> Mat<Complex64> {
        let n = self.flux.len();
        Mat::from_fn(n, n, |i, j| Complex64::new(-self.mass[(i, j)] / self.weights[i], 0.0))
    }
}

/// Factorised boundary-value solver for `(-Delta_h + q - lambda) u = 0` with
/// Dirichlet data on the boundary nodes.
pub struct BvpSolver {
    op: SchrodingerOperator,
    lambda: Complex64,
    ordering: NodeOrdering,
    matrix: BandedMatrix,
    lu: BandedLu,
    layer: BoundaryLayer,
    potential_id: String,
}

impl BvpSolver {
    pub fn new(q: &Potential, grid: &GridSpec, lambda: Complex64) -> Result<Self> {
        Self::with_ordering(q, grid, lambda, NodeOrdering::narrowest(grid))
    }

    pub fn with_ordering(q: &Potential, grid: &GridSpec, lambda: Complex64, ordering: NodeOrdering) -> Result<Self> {
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            return Err(Error::InvalidParameter(format!("spectral parameter {lambda} is not finite")));
        }
        let op = assemble_operator(q, grid)?;
        let matrix = op.shifted_banded(lambda, ordering);
        let lu = match matrix.factor() {
            Ok(lu) => lu,
            Err(_) => {
                return Err(Error::NearSpectrum {
                    lambda,
                    nearest: lambda.re,
                    distance: 0.0,
                })
            }
        };
        let solver = Self {
            layer: boundary_layer(grid),
            op,
            lambda,
            ordering,
            matrix,
            lu,
            potential_id: q.id.clone(),
        };
        if lambda.im.abs() < 1e-6 {
            solver.check_distance_to_spectrum()?;
        }
        Ok(solver)
    }

    /// Estimates the distance from `lambda` to the spectrum by inverse
    /// iteration; the residual of the iterate bounds the distance from above.
    fn check_distance_to_spectrum(&self) -> Result<()> {
        let n = self.op.dim();
        let mut x: Vec<Complex64> = (0..n)
            .map(|p| Complex64::new(1.0 + 0.37 * ((p * 7919) % 101) as f64 / 101.0, 0.0))
            .collect();
        for _ in 0..3 {
            self.lu.solve_in_place(&mut x);
            let nrm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(Error::SolverBreakdown("inverse iteration overflowed".into()));
            }
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        let ax = self.op.apply_complex(&x);
        let dist = ax
            .iter()
            .zip(&x)
            .map(|(a, v)| (a - self.lambda * v).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if dist < 1e-6 {
            let rq: Complex64 = ax.iter().zip(&x).map(|(a, v)| a * v.conj()).sum();
            return Err(Error::NearSpectrum {
                lambda: self.lambda,
                nearest: rq.re,
                distance: dist,
            });
        }
        Ok(())
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn grid(&self) -> &GridSpec {
        self.op.grid()
    }

    pub fn potential_id(&self) -> &str {
        &self.potential_id
    }

    pub fn operator(&self) -> &SchrodingerOperator {
        &self.op
    }

    pub fn boundary_layer(&self) -> &BoundaryLayer {
        &self.layer
    }

    /// Solves `(A(q) - lambda) u = rhs` on the interior (row-major data).
    pub fn solve_interior(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let grid = self.op.grid();
        let n = self.op.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
        }
        let pos: Vec<usize> = (0..n).map(|p| self.ordering.position(grid, p)).collect();
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for p in 0..n {
            b[pos[p]] = rhs[p];
        }
        let mut x = self.lu.solve(&b);
        let bnorm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for attempt in 0..2 {
            let ax = self.matrix.matvec(&x);
            let r: Vec<Complex64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
            let rnorm = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if rnorm <= 1e-10 * bnorm.max(f64::MIN_POSITIVE) || bnorm == 0.0 {
                break;
            }
            if attempt == 1 {
                return Err(Error::SolverBreakdown(format!(
                    "relative residual {:e} after refinement",
                    rnorm / bnorm
                )));
            }
            let d = self.lu.solve(&r);
            x.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        Ok((0..n).map(|p| x[pos[p]]).collect())
    }

    /// Interior values of the discrete solution with boundary data `f`.
    pub fn solve(&self, f: &BoundaryField) -> Result<Vec<Complex64>> {
        let grid = self.op.grid();
        grid.check_field(f)?;
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.op.dim()];
        for (b, v) in grid.boundary().iter().zip(&f.values) {
            rhs[b.neighbor] += v / (b.normal_spacing * b.normal_spacing);
        }
        self.solve_interior(&rhs)
    }

    /// Neumann data of the solution `u` with boundary values `f`.
    pub fn neumann_data(&self, f: &BoundaryField, u: &[Complex64]) -> BoundaryField {
        let grid = self.op.grid();
        let bl = self.layer.operator(self.lambda);
        let n = grid.n_bd();
        BoundaryField::new(
            (0..n)
                .map(|i| {
                    let b = &grid.boundary()[i];
                    let layer: Complex64 = (0..n).map(|j| bl[(i, j)] * f.values[j]).sum();
                    layer - u[b.neighbor] * (self.layer.flux[i] / b.weight)
                })
                .collect(),
        )
    }
}

impl DtnOperator for BvpSolver {
    fn lambda(&self) -> Complex64 {
        self.lambda
    }

    fn apply(&self, f: &BoundaryField) -> Result<BoundaryField> {
        let u = self.solve(f)?;
        Ok(self.neumann_data(f, &u))
    }
}

/// Solves the Dirichlet problem for `-Delta_h + q - lambda` with data `f`.
pub fn solve_bvp(q: &Potential, lambda: Complex64, f: &BoundaryField, grid: &GridSpec) -> Result<Vec<Complex64>> {
    BvpSolver::new(q, grid, lambda)?.solve(f)
}

/// The discrete Dirichlet-to-Neumann map assembled column by column.
pub fn dtn_direct(q: &Potential, lambda: Complex64, grid: &GridSpec) -> Result<DtnMatrix> {
    let solver = BvpSolver::new(q, grid, lambda)?;
    dtn_from_solver(&solver)
}

pub(crate) fn dtn_from_solver(solver: &BvpSolver) -> Result<DtnMatrix> {
    let grid = solver.grid();
    let n = grid.n_bd();
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = BoundaryField::zeros(n);
            e.values[j] = Complex64::new(1.0, 0.0);
            solver.apply(&e).map(|c| c.values)
        })
        .collect::<Result<_>>()?;
    Ok(DtnMatrix {
        entries: Mat::from_fn(n, n, |i, j| columns[j][i]),
        lambda: solver.lambda(),
        potential_id: solver.potential_id().to_string(),
        grid: grid.clone(),
        kind: DtnKind::Direct,
        tail_bound: None,
    })
}
