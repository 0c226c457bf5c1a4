//! Potential theory for X-elliptic operators `L u = Σ ∂_i(b_ij ∂_j u)` on Cartesian grids:
//! control-metric balls, variational capacities, capacitary potentials, Green functions, and the
//! Wiener and cone tests for boundary regularity.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod metric;
pub mod potential;
pub mod solver;
pub mod wiener;

pub use error::{Error, Result};
