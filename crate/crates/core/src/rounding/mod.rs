//! Rounding relaxed scores to a feasible hard assignment.

mod assignment;
mod coloring;
mod flow;
mod pipeline;

pub use assignment::{linearize_conflicts, solve_assignment, AssignmentProblem, AssignmentSolution, BranchState, Sense};
pub use coloring::{k_coloring, min_feasible_k, FeasibilityReport};
pub use pipeline::{round_pipeline, round_pipeline_with, PipelineOptions, PipelineResult};
