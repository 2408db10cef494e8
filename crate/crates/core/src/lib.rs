//! Numerical lab for multidimensional Borg-Levinson stability on rectangles.
//!
//! The crate discretises `-Delta + q` on a rectangle, computes Dirichlet
//! spectral data and Dirichlet-to-Neumann maps, recovers Fourier samples of
//! the potential from high-frequency boundary probes, and measures stability
//! exponents and the summation lemmas behind them.

pub mod dtn;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod numerics;
pub mod potential;
pub mod probe;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{boundary_inner_product, build_grid, hs_norm, BoundaryField, GridSpec, HsNorm};
pub use potential::{Potential, PotentialSpec};
pub use spectral::{align_traces, assemble_operator, solve_eigen, weyl_validate, SpectralData, WeylReport};

/// Runs dense factorisations on the calling thread so results do not depend
/// on the size of the worker pool.
pub fn sequential_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}
