//! Conic programs and a first-order solver for them.

mod program;
mod solver;
mod sparse;

pub use program::{svec_index, svec_pairs, ConeKind, ConeMembership, ConicProgram, SparseRow, VarBlock};
pub use solver::{solve_conic, solve_conic_with, ConicSolution, DualSolution, SolveStatus, SolverSettings};
