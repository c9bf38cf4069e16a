//! Solvers used by the estimators: the operator-splitting QP relaxation,
//! branch and bound over binaries, and the exact sweep over the hyperplane
//! arrangement of the factor rows.

pub mod admm;
pub mod arrangement;
pub mod bnb;
pub mod problem;
pub mod sparse;

pub use admm::{solve_relaxation, AdmmSettings, AdmmSolver, RelaxStatus, Relaxation};
pub use arrangement::enumerate_cells;
pub use bnb::{branch_and_bound, branch_and_bound_with, BnbHooks, Completion, NoHooks};
pub use problem::{MioProblem, MioSolution, SolverConfig};
pub use sparse::Csc;
