//! Deterministic fault-tolerant geometric multigrid for a partitioned 3D
//! Poisson problem.

pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod operators;
pub mod problem;
pub mod resilience;
pub mod solvers;

pub use error::{Error, Result};
