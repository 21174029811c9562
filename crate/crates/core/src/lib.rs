//! Kirchhoff divergence and Laplace operators built from a pair of distributions `(T, S)`.
//!
//! Given `T` on `X` and `S` on `X x X`, the Kirchhoff divergence of a two-point field
//! `Phi` is the function `psi` with `<T, phi psi> = <<S, phi Phi>>` for every test
//! function `phi`; the Laplacian of `f` is the divergence of `f(y) - f(x)`.
//!
//! Modules cover weighted graphs, lattices `hZ^n`, dyadic trees on `R^+`, metric
//! measure nets, fractional and principal-value kernels on `R^n`, the Hilbert kernel,
//! coupling measures, and limits of parameterized families.

pub mod acceptance;
pub mod builtins;
pub mod continuum;
pub mod convergence;
pub mod couplings;
pub mod deriv;
pub mod division;
pub mod dyadic;
pub mod error;
pub mod field;
pub mod graph;
pub mod lattice;
pub mod measure;
pub mod metric;
pub mod quad;

pub use deriv::{num_y_derivs, YDerivs};
pub use division::{check_division, DivisionReport};
pub use error::{KirError, Result};
pub use field::{grad0, Decay, Point, ScalarField, TwoPointField};
pub use measure::{CouplingWeights, NodeMeasure};
