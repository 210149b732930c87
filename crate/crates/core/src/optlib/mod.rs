//! Numerical kernels: a dense LP solver with dual prices and bipartite
//! maximum-weight matching.

pub mod lp;
pub mod matching;

pub use lp::{lp_solve, Constraint, LinearProgram, LpSolution, LpStatus, RowKind};
pub use matching::{max_weight_matching, Matching};
