//! Numerical building blocks shared by the lab modules.

pub mod banded;
pub mod fit;
pub mod quadrature;
pub mod sum;
