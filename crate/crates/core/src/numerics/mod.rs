//! Small dense kernels: simplex projection, vertex minimization, a tableau
//! LP solver, and the separable QP solved by progressive hedging.

pub mod lp;
pub mod qp;
pub mod simplex;

pub use lp::{solve_lp, LpSolution};
pub use qp::solve_separable_qp;
pub use simplex::{min_vertex, project_simplex, vertex};
