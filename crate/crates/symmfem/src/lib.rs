//! Tensor-product finite elements on anisotropic grids, a permutation-based
//! vector transform for symmetric solutions, and two-scale combination
//! discretizations for elliptic source and eigenvalue problems.
//!
//! The central observation: when the continuous solution is invariant under
//! coordinate permutations, the Galerkin solution on the grid that is fine in
//! direction `i` is an index permutation of the solution on the grid that is
//! fine in direction `1`. The symmetrized two-scale drivers exploit this to
//! replace `d - 1` anisotropic solves with linear-time vector transforms.

// numeric kernels walk several parallel arrays per direction; indexed loops
// keep those bodies readable
#![allow(clippy::needless_range_loop)]

pub mod acceptance;
pub mod analysis;
pub mod assembly;
pub mod error;
pub mod grid;
pub mod problems;
pub mod solvers;
pub mod symmetrize;
pub mod two_scale;

pub use error::{Error, Result};
pub use grid::{BoundaryMode, GridSpec, LinearIndex, MultiIndex, NodalVector};
pub use symmetrize::{transform, Permutation, TransformStats};
