//! Active-set acceleration for l1-regularized least squares and logistic
//! regression.
//!
//! The outer loop in [`driver`] keeps most variables pinned at zero and calls
//! one of the inner solvers in [`solvers`] on the small set of free variables,
//! releasing pinned variables whose partial derivative exceeds the penalty
//! weight ([`kkt`]).

pub mod angle;
pub mod bench;
pub mod datagen;
pub mod driver;
pub mod error;
pub mod kkt;
pub mod libsvm;
pub mod model;
pub mod solvers;

pub use driver::{run_active_solver, tau_default, ActiveSet, DriverConfig, DriverTrace};
pub use error::{LassoError, Result};
pub use kkt::{eligibility, kkt_residual, EligibilityReport};
pub use model::{DesignMatrix, LossKind, ProblemInstance};
pub use solvers::{solve, solve_unconstrained, SolveReport, SolveStatus, SolverConfig, SolverKind};
