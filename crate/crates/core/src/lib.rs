//! Sparse estimation and linear hypothesis testing for high-dimensional
//! regression with an unknown monotone response transformation, by partial
//! penalized composite probit regression.

pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod penalty;
pub mod probit;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use inference::{run_linear_test, TestConfig, TestReport};
pub use model::{CoefVector, CompositeDesign, Dataset};
pub use penalty::{PenaltyFamily, PenaltySpec};
pub use solver::{FitResult, LinearHypothesis, Problem, SolverConfig};
