//! Smallest number of clusters admitting a conflict-respecting partition.

use serde::Serialize;

use crate::data::{ConflictGraph, DistanceMatrix, Radius};
use crate::error::{input_err, Certificate, Result};
use crate::scalar::Real;

/// Outcome of [`min_feasible_k`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    /// Smallest feasible K, if one exists up to `k_max`.
    pub k: Option<usize>,
    /// Size of the largest conflict clique found (a lower bound on K).
    pub clique_bound: usize,
    pub clique: Vec<usize>,
    /// A conflict-free partition into `k` clusters when one was found.
    pub labels: Option<Vec<usize>>,
    /// Why no K up to `k_max` works.
    pub certificate: Option<Certificate>,
}

/// Exact search for a proper `k`-colouring of `graph` (DSATUR order,
/// backtracking). The given clique is precoloured `0, 1, ...`, which loses no
/// generality because its members need distinct colours anyway.
pub fn k_coloring<T: Real>(graph: &ConflictGraph<T>, k: usize, clique: &[usize]) -> Option<Vec<usize>> {
    let n = graph.len();
    if clique.len() > k {
        return None;
    }
    if n == 0 {
        return Some(Vec::new());
    }
    let mut colour = vec![usize::MAX; n];
    // per-vertex count of neighbours holding each colour
    let mut seen = vec![0u32; n * k];
    let mut sat = vec![0usize; n];
    let assign = |v: usize, c: usize, colour: &mut Vec<usize>, seen: &mut Vec<u32>, sat: &mut Vec<usize>| {
        colour[v] = c;
        for &w in graph.neighbors(v) {
            let s = &mut seen[w * k + c];
            if *s == 0 {
                sat[w] += 1;
            }
            *s += 1;
        }
    };
    let unassign = |v: usize, c: usize, colour: &mut Vec<usize>, seen: &mut Vec<u32>, sat: &mut Vec<usize>| {
        colour[v] = usize::MAX;
        for &w in graph.neighbors(v) {
            let s = &mut seen[w * k + c];
            *s -= 1;
            if *s == 0 {
                sat[w] -= 1;
            }
        }
    };
    for (c, &v) in clique.iter().enumerate() {
        assign(v, c, &mut colour, &mut seen, &mut sat);
    }
    let used = clique.len();
    type Update<'a> = &'a dyn Fn(usize, usize, &mut Vec<usize>, &mut Vec<u32>, &mut Vec<usize>);
    #[allow(clippy::too_many_arguments)]
    fn search<T: Real>(
        graph: &ConflictGraph<T>,
        k: usize,
        used: usize,
        colour: &mut Vec<usize>,
        seen: &mut Vec<u32>,
        sat: &mut Vec<usize>,
        assign: Update<'_>,
        unassign: Update<'_>,
    ) -> bool {
        let n = graph.len();
        let mut pick = None;
        for v in 0..n {
            if colour[v] != usize::MAX {
                continue;
            }
            let key = (sat[v], graph.neighbors(v).len());
            if pick.is_none_or(|(_, best)| key > best) {
                pick = Some((v, key));
            }
        }
        let Some((v, _)) = pick else { return true };
        if sat[v] >= k {
            return false;
        }
        // a colour never used before is interchangeable with any other unused one
        let limit = (used + 1).min(k);
        for c in 0..limit {
            if seen[v * k + c] > 0 {
                continue;
            }
            assign(v, c, colour, seen, sat);
            if search(graph, k, used.max(c + 1), colour, seen, sat, assign, unassign) {
                return true;
            }
            unassign(v, c, colour, seen, sat);
        }
        false
    }
    if search(graph, k, used, &mut colour, &mut seen, &mut sat, &assign, &unassign) {
        Some(colour)
    } else {
        None
    }
}

/// Smallest `K <= k_max` for which the points can be split into `K`
/// non-empty clusters without a conflict pair sharing one; the greedy clique
/// size is the starting point and each K above it is an exact feasibility
/// solve.
pub fn min_feasible_k<T: Real>(distances: &DistanceMatrix<T>, radius: Radius<T>, k_max: usize) -> Result<FeasibilityReport> {
    if k_max == 0 {
        return input_err("k_max must be at least 1");
    }
    let graph = ConflictGraph::new(distances, radius);
    let n = graph.len();
    let clique = graph.greedy_clique();
    let lb = clique.len().max(1);
    let mut report = FeasibilityReport {
        k: None,
        clique_bound: clique.len(),
        clique: clique.clone(),
        labels: None,
        certificate: None,
    };
    if lb > k_max {
        report.certificate = Some(Certificate::Clique { members: clique });
        return Ok(report);
    }
    for k in lb..=k_max.min(n) {
        if let Some(labels) = k_coloring(&graph, k, &clique) {
            // DSATUR opens colours in order, so exactly `k` are in use here:
            // fewer would mean the previous K already succeeded.
            report.k = Some(k);
            report.labels = Some(labels);
            return Ok(report);
        }
    }
    report.certificate = Some(Certificate::Exhaustive {
        members: Vec::new(),
        nodes: 0,
    });
    Ok(report)
}
