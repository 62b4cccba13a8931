//! Convex relaxation of radius-constrained k-means.
//!
//! A cluster with indicator vector `y` and size `n_k` is represented by the
//! scaled variables `u = 1 / n_k`, `ỹ = y / n_k` and `Ỹ = y y^T / n_k`. For
//! each cluster the program holds the bordered block
//!
//! ```text
//! [ u   ỹ^T ]
//! [ ỹ   Ỹ   ]  psd,   diag(Ỹ) = ỹ,   1^T ỹ = 1,   Ỹ_ij <= ỹ_i,   1/N <= u <= 1
//! ```
//!
//! and the clusters are coupled by `sum_k Ỹ^k 1 = 1`, which is the scaled
//! form of "every point belongs to exactly one cluster". Sizes enter through
//! `[[n̄_k, 1], [1, u_k]]` psd with `sum_k n̄_k = N`. Conflict pairs get
//! `Ỹ^k_ij = 0`. The objective `sum_k sum_{i<j} d_ij Ỹ^k_ij` is the pairwise
//! k-means cost, exact at every integral point.
//!
//! Cluster labels are interchangeable, so the optimal set is symmetric under
//! relabelling and a solver is free to return the label-averaged point, whose
//! scores carry no information. When the conflict graph contains a clique
//! `a_1, ..., a_m` (`m >= 2`), point `a_j` is pinned to cluster `j`: every
//! feasible partition can be relabelled to satisfy this, so the bound stays
//! valid while the symmetry is broken.

use serde::Serialize;

use crate::baselines::{kcenter_greedy, BaselineConfig};
use crate::conic::{solve_conic_with, ConicProgram, ConicSolution, SolverSettings, VarBlock};
use crate::data::{squared_distance, ConflictGraph, Dataset, DistanceMatrix, Radius};
use crate::error::{input_err, Certificate, Error, Result};
use crate::linalg::min_eigenvalue;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelaxationOptions {
    /// Add `Ỹ_ij >= 0` on non-conflict pairs. Without it the scaled radius
    /// inequality `d_ij Ỹ_ij <= 4 r^2 u` is emitted for those pairs instead.
    pub strengthen: bool,
    /// Pin the members of a conflict clique to distinct clusters. This breaks
    /// the label symmetry that otherwise makes every cluster's scores equal.
    /// The bound stays valid, but the clique depends on `r`, so programs for
    /// different radii are no longer nested; turn it off when comparing
    /// optimal values across radii.
    pub anchor_clique: bool,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            strengthen: true,
            anchor_clique: true,
        }
    }
}

/// A built relaxation: the conic program plus the layout needed to read it.
#[derive(Debug, Clone)]
pub struct Relaxation<T> {
    pub program: ConicProgram<T>,
    pub n: usize,
    pub k: usize,
    /// `anchors[j]` is pinned to cluster `j`; empty when no anchoring applies.
    pub anchors: Vec<usize>,
    pub conflicts: ConflictGraph<T>,
}

impl<T: Real> Relaxation<T> {
    /// The order-`N+1` block of cluster `k`; entry `(0, 0)` is `u_k`.
    pub fn cluster_block(&self, k: usize) -> &VarBlock {
        self.program.block(&format!("cluster{k}")).expect("cluster block")
    }

    pub fn size_block(&self, k: usize) -> &VarBlock {
        self.program.block(&format!("size{k}")).expect("size block")
    }

    /// Scaled image of a hard partition: a feasible point of the program whose
    /// objective is the partition's k-means cost. Labels must be in `0..K`
    /// with no empty cluster.
    pub fn integral_point(&self, labels: &[usize]) -> Result<Vec<T>> {
        if labels.len() != self.n || labels.iter().any(|&l| l >= self.k) {
            return input_err("labels do not match the relaxation");
        }
        let mut sizes = vec![0usize; self.k];
        for &l in labels {
            sizes[l] += 1;
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Evaluation(format!("cluster {k} is empty")));
        }
        let mut v = vec![T::zero(); self.program.num_vars()];
        for k in 0..self.k {
            let b = self.cluster_block(k);
            let s = self.size_block(k);
            let u = T::one() / T::from_usize_lossy(sizes[k]);
            v[b.entry(0, 0)] = u;
            for i in (0..self.n).filter(|&i| labels[i] == k) {
                v[b.entry(0, i + 1)] = u;
                for j in (i..self.n).filter(|&j| labels[j] == k) {
                    v[b.entry(i + 1, j + 1)] = u;
                }
            }
            v[s.entry(0, 0)] = T::from_usize_lossy(sizes[k]);
            v[s.entry(0, 1)] = T::one();
            v[s.entry(1, 1)] = u;
        }
        Ok(v)
    }
}

/// Builds the relaxation with default options.
pub fn build_relaxation<T: Real>(distances: &DistanceMatrix<T>, k: usize, radius: Radius<T>) -> Result<Relaxation<T>> {
    build_relaxation_with(distances, k, radius, RelaxationOptions::default())
}

pub fn build_relaxation_with<T: Real>(
    distances: &DistanceMatrix<T>,
    k: usize,
    radius: Radius<T>,
    options: RelaxationOptions,
) -> Result<Relaxation<T>> {
    let n = distances.len();
    if k < 2 {
        return input_err("the relaxation needs K >= 2");
    }
    if k > n {
        return input_err(format!("K={k} exceeds the number of points N={n}"));
    }
    let conflicts = ConflictGraph::new(distances, radius);
    let clique = conflicts.greedy_clique();
    if clique.len() > k {
        return Err(Error::Infeasible(Certificate::Clique { members: clique }));
    }
    let anchors = if options.anchor_clique && clique.len() >= 2 {
        clique
    } else {
        Vec::new()
    };

    let nt = T::from_usize_lossy(n);
    let mut p = ConicProgram::new();
    let mut blocks = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    for c in 0..k {
        blocks.push(p.add_psd_block(format!("cluster{c}"), n + 1));
        sizes.push(p.add_psd_block(format!("size{c}"), 2));
    }
    for c in 0..k {
        let b = &blocks[c];
        let u = b.entry(0, 0);
        let yt = |i: usize| b.entry(0, i + 1);
        let yy = |i: usize, j: usize| b.entry(i + 1, j + 1);
        for i in 0..n {
            for j in i + 1..n {
                let d = distances.get(i, j);
                if d != T::zero() && !conflicts.conflicts(i, j) {
                    p.set_objective(yy(i, j), d);
                }
            }
        }
        for i in 0..n {
            p.add_equality(vec![(yy(i, i), T::one()), (yt(i), -T::one())], T::zero());
        }
        p.add_equality((0..n).map(|i| (yt(i), T::one())).collect(), T::one());
        let mut nonneg = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if conflicts.conflicts(i, j) {
                    p.add_equality(vec![(yy(i, j), T::one())], T::zero());
                    continue;
                }
                p.add_inequality(vec![(yy(i, j), T::one()), (yt(i), -T::one())], T::zero());
                p.add_inequality(vec![(yy(i, j), T::one()), (yt(j), -T::one())], T::zero());
                if options.strengthen {
                    nonneg.push(yy(i, j));
                } else if let Some(th) = radius.threshold() {
                    p.add_inequality(vec![(yy(i, j), distances.get(i, j)), (u, -th)], T::zero());
                }
            }
        }
        p.add_nonnegative(nonneg);
        p.add_inequality(vec![(u, -T::one())], -T::one() / nt);
        p.add_inequality(vec![(u, T::one())], T::one());
        let s = &sizes[c];
        p.add_equality(vec![(s.entry(0, 1), T::one())], T::one());
        p.add_equality(vec![(s.entry(1, 1), T::one()), (u, -T::one())], T::zero());
    }
    for i in 0..n {
        let mut row = Vec::with_capacity(k * n);
        for b in &blocks {
            for j in 0..n {
                row.push((b.entry(i + 1, j + 1), T::one()));
            }
        }
        p.add_equality(row, T::one());
    }
    p.add_equality(sizes.iter().map(|s| (s.entry(0, 0), T::one())).collect(), nt);

    for (c, &a) in anchors.iter().enumerate() {
        for (other, b) in blocks.iter().enumerate() {
            if other == c {
                p.add_equality(vec![(b.entry(0, a + 1), T::one()), (b.entry(0, 0), -T::one())], T::zero());
                for l in (0..n).filter(|&l| l != a) {
                    p.add_equality(vec![(b.entry(a + 1, l + 1), T::one()), (b.entry(0, l + 1), -T::one())], T::zero());
                }
            } else {
                p.add_equality(vec![(b.entry(0, a + 1), T::one())], T::zero());
            }
        }
    }

    Ok(Relaxation {
        program: p,
        n,
        k,
        anchors,
        conflicts,
    })
}

/// The Peng–Wei relaxation `min 1/2 <D, Z>` over `Z psd, Z >= 0, Z 1 = 1,
/// tr Z = K`, which ignores the radius constraint entirely.
pub fn peng_wei_program<T: Real>(distances: &DistanceMatrix<T>, k: usize) -> ConicProgram<T> {
    let n = distances.len();
    let mut p = ConicProgram::new();
    let z = p.add_psd_block("Z", n);
    let mut nonneg = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            p.set_objective(z.entry(i, j), distances.get(i, j));
            nonneg.push(z.entry(i, j));
        }
        p.add_equality((0..n).map(|j| (z.entry(i, j), T::one())).collect(), T::one());
    }
    p.add_equality((0..n).map(|i| (z.entry(i, i), T::one())).collect(), T::from_usize_lossy(k));
    p.add_nonnegative(nonneg);
    p
}

/// Feasibility summary of one cluster block at the returned primal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockCheck<T> {
    pub min_eigenvalue: T,
    /// `max_i |Ỹ_ii - ỹ_i|`.
    pub diag_residual: T,
    pub u: T,
}

/// Relaxed cluster scores read off a relaxation solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpScores<T> {
    /// `b[k][i]` in `[-1, 1]`; larger means point `i` leans to cluster `k`.
    pub b: Vec<Vec<T>>,
    /// Relaxed cluster sizes.
    pub n: Vec<T>,
    pub block_checks: Vec<BlockCheck<T>>,
    pub lower_bound: Option<T>,
}

impl<T: Real> SdpScores<T> {
    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn len(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads scores from an optimal solution of `relaxation`.
///
/// The relaxed membership of point `i` in cluster `k` is the row sum
/// `y_i = sum_j Ỹ^k_ij` and the relaxed size is `n_k = 1^T Ỹ^k 1`; both equal
/// the indicator and the cluster size at integral points, and they satisfy
/// `sum_k y^k = 1`, `sum_k n_k = N` and `n_k >= 1/u_k >= 1` exactly on the
/// feasible set. Scores are `b = 2 y - 1`. The lower bound is the smaller of
/// the primal and dual objectives.
pub fn extract_scores<T: Real>(solution: &ConicSolution<T>, relaxation: &Relaxation<T>) -> Result<SdpScores<T>> {
    if !solution.is_optimal() {
        return Err(Error::Evaluation(format!("relaxation solve ended with status {:?}", solution.status)));
    }
    let tol = T::lit(1e-9).max(solution.max_residual());
    let (n, k) = (relaxation.n, relaxation.k);
    let v = &solution.primal;
    let mut b = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    let mut checks = Vec::with_capacity(k);
    for c in 0..k {
        let blk = relaxation.cluster_block(c);
        let u = v[blk.entry(0, 0)];
        if u <= tol {
            return Err(Error::DegenerateCluster(c));
        }
        let mut row = vec![T::zero(); n];
        let mut total = T::zero();
        let mut diag_residual = T::zero();
        for i in 0..n {
            let s: T = (0..n).map(|j| v[blk.entry(i + 1, j + 1)]).sum();
            row[i] = T::lit(2.0) * s - T::one();
            total += s;
            diag_residual = diag_residual.max((v[blk.entry(i + 1, i + 1)] - v[blk.entry(0, i + 1)]).abs());
        }
        let order = n + 1;
        let mut m = vec![T::zero(); order * order];
        for i in 0..order {
            for j in 0..order {
                m[i * order + j] = v[blk.entry(i, j)];
            }
        }
        checks.push(BlockCheck {
            min_eigenvalue: min_eigenvalue(&m, order),
            diag_residual,
            u,
        });
        b.push(row);
        sizes.push(total);
    }
    Ok(SdpScores {
        b,
        n: sizes,
        block_checks: checks,
        lower_bound: Some(solution.primal_objective.min(solution.dual_objective)),
    })
}

/// Scores from greedy k-center instead of the relaxation:
/// `b_i^k = 1 - 2 dist(x_i, c_k) / max_j dist(x_j, c_k)`.
pub fn kcenter_scores<T: Real>(data: &Dataset<T>, config: &BaselineConfig) -> Result<SdpScores<T>> {
    let run = kcenter_greedy(data, config)?;
    let centers = run.medoids.as_ref().expect("k-center reports its centers");
    let n = data.len();
    let mut b = Vec::with_capacity(centers.len());
    for &c in centers {
        let dist: Vec<T> = (0..n).map(|i| squared_distance(data.point(i), data.point(c)).sqrt()).collect();
        let far = dist.iter().copied().fold(T::zero(), T::max);
        b.push(
            dist.iter()
                .map(|&d| if far > T::zero() { T::one() - T::lit(2.0) * d / far } else { T::one() })
                .collect(),
        );
    }
    Ok(SdpScores {
        b,
        n: run.assignment.sizes().iter().map(|&s| T::from_usize_lossy(s)).collect(),
        block_checks: Vec::new(),
        lower_bound: None,
    })
}

/// Farthest-first centers on the distance matrix, seeded with `anchors`
/// (or point 0), and the nearest-center labels. Used as a solver warm start.
fn farthest_first_labels<T: Real>(distances: &DistanceMatrix<T>, k: usize, anchors: &[usize]) -> Vec<usize> {
    let n = distances.len();
    let mut centers: Vec<usize> = if anchors.is_empty() { vec![0] } else { anchors.to_vec() };
    let mut near: Vec<T> = (0..n)
        .map(|i| centers.iter().map(|&c| distances.get(i, c)).fold(T::infinity(), T::min))
        .collect();
    while centers.len() < k {
        let (far, _) = near
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        centers.push(far);
        for i in 0..n {
            near[i] = near[i].min(distances.get(i, far));
        }
    }
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if distances.get(i, centers[c]) < distances.get(i, centers[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    for (c, &p) in centers.iter().enumerate() {
        labels[p] = c;
    }
    labels
}

/// Relaxation, solution and scores from one call.
#[derive(Debug, Clone)]
pub struct RelaxationRun<T> {
    pub relaxation: Relaxation<T>,
    pub solution: ConicSolution<T>,
    pub scores: SdpScores<T>,
}

/// Builds and solves the relaxation, warm-started from a farthest-first
/// partition, and extracts the scores.
pub fn solve_relaxation<T: Real>(
    distances: &DistanceMatrix<T>,
    k: usize,
    radius: Radius<T>,
    options: RelaxationOptions,
    settings: &SolverSettings<T>,
) -> Result<RelaxationRun<T>> {
    let relaxation = build_relaxation_with(distances, k, radius, options)?;
    let mut settings = settings.clone();
    if settings.warm_start.is_none() {
        let labels = farthest_first_labels(distances, k, &relaxation.anchors);
        settings.warm_start = relaxation.integral_point(&labels).ok();
    }
    let solution = solve_conic_with(&relaxation.program, &settings)?;
    let scores = extract_scores(&solution, &relaxation)?;
    Ok(RelaxationRun {
        relaxation,
        solution,
        scores,
    })
}
