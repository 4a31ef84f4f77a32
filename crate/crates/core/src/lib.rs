//! Trace-constrained semidefinite relaxations with rank-1 refinement for pose estimation and
//! robot calibration.

use openblas_src as _;

pub mod bench;
pub mod error;
pub mod manifolds;
pub mod refine;
pub mod robots;
pub mod solver;
pub mod symeig;
pub mod tcsdp;

pub use error::{Error, Result};
