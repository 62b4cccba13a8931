//! Clustering objectives and the imbalance-robustness metrics.
//!
//! The partition radius of a cluster is half its diameter,
//! `0.5 * sqrt(max d_ij)` over intra-cluster pairs. A cluster satisfying the
//! radius constraint `d_ij <= 4 r^2` therefore has partition radius at most
//! `r`, while its k-radius (largest distance to the cluster mean) is at most
//! `2 r`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{squared_distance, Assignment, ConflictGraph, Dataset, DistanceMatrix};
use crate::error::{input_err, Error, Result};
use crate::scalar::Real;

fn require_non_empty<T: Real>(assignment: &Assignment<T>) -> Result<()> {
    match assignment.sizes().iter().position(|&s| s == 0) {
        Some(k) => Err(Error::Evaluation(format!("cluster {k} is empty"))),
        None => Ok(()),
    }
}

/// Sum of squared distances from every point to its cluster mean.
pub fn kmeans_objective<T: Real>(data: &Dataset<T>, assignment: &Assignment<T>) -> Result<T> {
    require_non_empty(assignment)?;
    Ok(assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(data.point(i), assignment.centroid(l)))
        .sum())
}

/// `1/2 sum_k (1/n_k) <1_k 1_k^T, D>`; equal to [`kmeans_objective`] for any partition.
pub fn pairwise_objective<T: Real>(distances: &DistanceMatrix<T>, assignment: &Assignment<T>) -> Result<T> {
    require_non_empty(assignment)?;
    let members = assignment.members();
    let mut total = T::zero();
    for (k, m) in members.iter().enumerate() {
        let mut s = T::zero();
        for &i in m {
            for &j in m {
                s += distances.get(i, j);
            }
        }
        total += s / T::from_usize_lossy(assignment.sizes()[k]);
    }
    Ok(total * T::lit(0.5))
}

/// Per-cluster half-diameters and their maximum. Singletons and empty clusters give 0.
pub fn partition_radius<T: Real>(distances: &DistanceMatrix<T>, assignment: &Assignment<T>) -> (Vec<T>, T) {
    let radii: Vec<T> = assignment
        .members()
        .iter()
        .map(|m| {
            let mut worst = T::zero();
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    worst = worst.max(distances.get(i, j));
                }
            }
            T::lit(0.5) * worst.sqrt()
        })
        .collect();
    let max = radii.iter().copied().fold(T::zero(), T::max);
    (radii, max)
}

/// Per-cluster largest distance to the centroid and their maximum.
pub fn k_radius<T: Real>(data: &Dataset<T>, assignment: &Assignment<T>) -> (Vec<T>, T) {
    let mut radii = vec![T::zero(); assignment.k()];
    for (i, &l) in assignment.labels().iter().enumerate() {
        let d = squared_distance(data.point(i), assignment.centroid(l)).sqrt();
        radii[l] = radii[l].max(d);
    }
    let max = radii.iter().copied().fold(T::zero(), T::max);
    (radii, max)
}

/// Majority region tag of every non-empty cluster; ties go to the smaller tag.
pub fn cluster_regions<T: Real>(data: &Dataset<T>, assignment: &Assignment<T>) -> Result<Vec<Option<String>>> {
    let Some(labels) = data.labels() else {
        return input_err("region counts need labelled data");
    };
    Ok(assignment
        .members()
        .iter()
        .map(|m| {
            let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
            for &i in m {
                *votes.entry(labels[i].as_str()).or_default() += 1;
            }
            // BTreeMap iterates tags in increasing order; keep the first maximum.
            let mut best: Option<(&str, usize)> = None;
            for (tag, c) in votes {
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((tag, c));
                }
            }
            best.map(|(t, _)| t.to_string())
        })
        .collect())
}

/// Number of centroids attributed to each region tag.
pub fn region_centroid_counts<T: Real>(data: &Dataset<T>, assignment: &Assignment<T>) -> Result<BTreeMap<String, usize>> {
    let labels = data.labels().ok_or_else(|| Error::Input("region counts need labelled data".into()))?;
    let mut counts: BTreeMap<String, usize> = labels.iter().map(|l| (l.clone(), 0)).collect();
    for tag in cluster_regions(data, assignment)?.into_iter().flatten() {
        *counts.entry(tag).or_default() += 1;
    }
    Ok(counts)
}

/// Summary of one clustering run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport<T> {
    pub objective: T,
    pub max_partition_radius: T,
    pub max_k_radius: T,
    pub region_counts: BTreeMap<String, usize>,
    pub lower_bound: Option<T>,
    pub feasible: bool,
}

impl<T: Real> MetricsReport<T> {
    /// Evaluates `assignment`. `feasible` means every cluster is non-empty and,
    /// when a conflict graph is given, no conflict pair shares a cluster.
    pub fn evaluate(
        data: &Dataset<T>,
        distances: &DistanceMatrix<T>,
        assignment: &Assignment<T>,
        conflicts: Option<&ConflictGraph<T>>,
        lower_bound: Option<T>,
    ) -> Result<Self> {
        let objective = kmeans_objective(data, assignment)?;
        let (_, max_partition_radius) = partition_radius(distances, assignment);
        let (_, max_k_radius) = k_radius(data, assignment);
        let region_counts = if data.labels().is_some() {
            region_centroid_counts(data, assignment)?
        } else {
            BTreeMap::new()
        };
        let feasible = assignment.is_valid()
            && conflicts.is_none_or(|g| assignment.violations(g).is_empty());
        Ok(Self {
            objective,
            max_partition_radius,
            max_k_radius,
            region_counts,
            lower_bound,
            feasible,
        })
    }
}
