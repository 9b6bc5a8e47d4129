//! Recovery of sparse polynomial vector fields from trajectories with
//! interval-structured outliers.
//!
//! The pipeline simulates (or loads) a trajectory, corrupts it, estimates
//! derivatives by finite differences, builds a monomial dictionary `Φ` and
//! solves `Φ·C + E = V` for a sparse coefficient matrix `C` and a row-sparse
//! outlier matrix `E`.

pub mod analysis;
pub mod basis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod preprocess;
pub mod solver;

pub use error::{Error, Result};
