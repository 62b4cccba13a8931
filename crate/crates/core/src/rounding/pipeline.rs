//! Scores to hard clusters: a max-score assignment, its centroids, then a
//! min-distance reassignment, both under the same conflict exclusions.

use std::time::Duration;

use serde::Serialize;

use crate::data::{squared_distance, Assignment, ConflictGraph, Dataset, DistanceMatrix, Radius};
use crate::error::{input_err, Result};
use crate::relaxation::SdpScores;
use crate::rounding::assignment::{solve_assignment, AssignmentProblem, Sense};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    /// Repeat centroid update and reassignment until the labels stop changing.
    pub refine: bool,
    pub max_refinements: usize,
    pub time_limit: Duration,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            refine: false,
            max_refinements: 100,
            time_limit: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult<T> {
    pub assignment: Assignment<T>,
    /// Labels after the score-maximising step.
    pub score_labels: Vec<usize>,
    /// k-means cost of the score-step partition around its own centroids.
    pub score_step_objective: T,
    /// k-means cost of the returned assignment around the centroids it was assigned to.
    pub assignment_objective: T,
    /// Both assignment solves finished within their time limits.
    pub optimal: bool,
    pub refinements: usize,
}

fn total_cost<T: Real>(data: &Dataset<T>, labels: &[usize], assignment: &Assignment<T>) -> T {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(data.point(i), assignment.centroid(l)))
        .sum()
}

pub fn round_pipeline<T: Real>(
    data: &Dataset<T>,
    distances: &DistanceMatrix<T>,
    scores: &SdpScores<T>,
    k: usize,
    radius: Radius<T>,
) -> Result<PipelineResult<T>> {
    round_pipeline_with(data, distances, scores, k, radius, PipelineOptions::default())
}

pub fn round_pipeline_with<T: Real>(
    data: &Dataset<T>,
    distances: &DistanceMatrix<T>,
    scores: &SdpScores<T>,
    k: usize,
    radius: Radius<T>,
    options: PipelineOptions,
) -> Result<PipelineResult<T>> {
    let n = data.len();
    if distances.len() != n || scores.k() != k || scores.len() != n {
        return input_err("scores, distances and data disagree on N or K");
    }
    let conflicts = ConflictGraph::new(distances, radius);
    let score_costs: Vec<T> = (0..n).flat_map(|i| scores.b.iter().map(move |row| row[i])).collect();
    let step2 = AssignmentProblem::new(n, k, score_costs, Sense::Max)?
        .with_conflicts(conflicts.clone())?
        .with_time_limit(options.time_limit);
    let first = solve_assignment(&step2)?;
    let mut optimal = first.optimal;
    let score_labels = first.labels;

    let mut current = Assignment::from_labels(data, score_labels.clone(), k)?;
    let score_step_objective = total_cost(data, &score_labels, &current);
    let mut refinements = 0;
    loop {
        let costs: Vec<T> = (0..n)
            .flat_map(|i| current.centroids().map(move |c| squared_distance(data.point(i), c)).collect::<Vec<_>>())
            .collect();
        let step4 = AssignmentProblem::new(n, k, costs, Sense::Min)?
            .with_conflicts(conflicts.clone())?
            .with_incumbent(current.labels().to_vec())
            .with_time_limit(options.time_limit);
        let second = solve_assignment(&step4)?;
        optimal &= second.optimal;
        let objective = second.objective;
        let next = Assignment::from_labels(data, second.labels, k)?;
        let stable = next.labels() == current.labels();
        if !options.refine || stable || refinements >= options.max_refinements {
            return Ok(PipelineResult {
                assignment: next,
                score_labels,
                score_step_objective,
                assignment_objective: objective,
                optimal,
                refinements,
            });
        }
        refinements += 1;
        current = next;
    }
}
