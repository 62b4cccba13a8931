//! Classical k-clustering baselines: Lloyd k-means, alternating k-medoids,
//! greedy k-center and cardinality-constrained k-means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{squared_distance, Assignment, Dataset};
use crate::error::{input_err, Result};
use crate::rounding::{solve_assignment, AssignmentProblem, Sense};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    RandomPoints,
    #[default]
    KMeansPlusPlus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub init: Init,
    /// Per-cluster `(lower, upper)` sizes for the cardinality-constrained method.
    pub cardinality_bounds: Option<Vec<(usize, usize)>>,
}

impl BaselineConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 300,
            seed,
            init: Init::default(),
            cardinality_bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(usize, usize)>) -> Self {
        self.cardinality_bounds = Some(bounds);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return input_err("K must be at least 1");
        }
        if self.k > n {
            return input_err(format!("K={} exceeds the number of points N={n}", self.k));
        }
        if self.max_iters == 0 {
            return input_err("max_iters must be at least 1");
        }
        Ok(())
    }
}

/// Output of a baseline run.
#[derive(Debug, Clone)]
pub struct Clustering<T> {
    pub assignment: Assignment<T>,
    /// Data-point centers for k-medoids and k-center.
    pub medoids: Option<Vec<usize>>,
    /// Objective after every iteration; non-increasing for the descent methods.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> Clustering<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("at least one iteration")
    }
}

fn nearest<T: Real>(x: &[T], centers: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Picks `k` distinct seed points.
fn seed_points<T: Real>(data: &Dataset<T>, k: usize, init: Init, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    match init {
        Init::RandomPoints => rand::seq::index::sample(rng, n, k).into_vec(),
        Init::KMeansPlusPlus => {
            let mut chosen = vec![rng.random_range(0..n)];
            let mut d2: Vec<f64> = (0..n)
                .map(|i| squared_distance(data.point(i), data.point(chosen[0])).to_f64_lossy())
                .collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut t = rng.random::<f64>() * total;
                    let mut pick = n - 1;
                    for (i, &w) in d2.iter().enumerate() {
                        if w > 0.0 && t < w {
                            pick = i;
                            break;
                        }
                        t -= w;
                    }
                    if d2[pick] == 0.0 {
                        // rounding pushed us to a chosen point; take the farthest instead
                        argmax(&d2)
                    } else {
                        pick
                    }
                } else {
                    // all remaining points coincide with chosen ones
                    (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
                };
                chosen.push(next);
                for i in 0..n {
                    d2[i] = d2[i].min(squared_distance(data.point(i), data.point(next)).to_f64_lossy());
                }
            }
            chosen
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn means<T: Real>(data: &Dataset<T>, labels: &[usize], k: usize) -> Result<(Vec<Vec<T>>, Vec<usize>)> {
    let a = Assignment::from_labels(data, labels.to_vec(), k)?;
    Ok((a.centroids().map(<[T]>::to_vec).collect(), a.sizes().to_vec()))
}

fn cost<T: Real>(data: &Dataset<T>, labels: &[usize], centers: &[Vec<T>]) -> T {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(data.point(i), &centers[l]))
        .sum()
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty<T: Real>(data: &Dataset<T>, labels: &mut [usize], centers: &mut [Vec<T>], sizes: &mut [usize]) {
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = squared_distance(data.point(i), &centers[l]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let Some(i) = far else { return };
        let old = labels[i];
        labels[i] = empty;
        sizes[old] -= 1;
        sizes[empty] = 1;
        centers[empty] = data.point(i).to_vec();
        // recompute the donor mean so the objective keeps decreasing
        let dim = data.dim();
        let mut m = vec![T::zero(); dim];
        for (j, &l) in labels.iter().enumerate() {
            if l == old {
                for (a, &x) in m.iter_mut().zip(data.point(j)) {
                    *a += x;
                }
            }
        }
        let inv = T::one() / T::from_usize_lossy(sizes[old]);
        centers[old] = m.into_iter().map(|x| x * inv).collect();
    }
}

/// Lloyd's alternating minimisation. Empty clusters are reseeded with the
/// point farthest from its current centroid.
pub fn lloyd_kmeans<T: Real>(data: &Dataset<T>, config: &BaselineConfig) -> Result<Clustering<T>> {
    config.validate(data.len())?;
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers: Vec<Vec<T>> = seed_points(data, k, config.init, &mut rng)
        .into_iter()
        .map(|i| data.point(i).to_vec())
        .collect();
    let mut labels: Vec<usize> = (0..data.len()).map(|i| nearest(data.point(i), &centers).0).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let (mut new_centers, mut sizes) = means(data, &labels, k)?;
        repair_empty(data, &mut labels, &mut new_centers, &mut sizes);
        centers = new_centers;
        trace.push(cost(data, &labels, &centers));
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let (c, d) = nearest(data.point(i), &centers);
            // keep the current label on ties so the loop terminates
            if c != *l && d < squared_distance(data.point(i), &centers[*l]) {
                *l = c;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let assignment = Assignment::from_labels(data, labels, k)?;
    Ok(Clustering {
        assignment,
        medoids: None,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Alternating k-medoids on squared Euclidean distances: assign to the nearest
/// medoid, then move each medoid to the member minimising in-cluster cost.
pub fn kmedoids<T: Real>(data: &Dataset<T>, config: &BaselineConfig) -> Result<Clustering<T>> {
    config.validate(data.len())?;
    let (n, k) = (data.len(), config.k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut medoids = seed_points(data, k, config.init, &mut rng);
    let d = |i: usize, j: usize| squared_distance(data.point(i), data.point(j));
    let assign = |medoids: &[usize]| -> Vec<usize> {
        let mut labels: Vec<usize> = (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..k {
                    if d(i, medoids[c]) < d(i, medoids[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect();
        for (c, &m) in medoids.iter().enumerate() {
            labels[m] = c;
        }
        labels
    };
    let total = |labels: &[usize], medoids: &[usize]| -> T { (0..n).map(|i| d(i, medoids[labels[i]])).sum() };
    let mut labels = assign(&medoids);
    let mut trace = vec![total(&labels, &medoids)];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let mut moved = false;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            let within = |m: usize| -> T { members.iter().map(|&i| d(i, m)).sum() };
            let mut best = medoids[c];
            let mut best_cost = within(best);
            for &m in &members {
                let cm = within(m);
                if cm < best_cost {
                    best = m;
                    best_cost = cm;
                }
            }
            if best != medoids[c] {
                medoids[c] = best;
                moved = true;
            }
        }
        let new_labels = assign(&medoids);
        let new_cost = total(&new_labels, &medoids);
        if !moved && new_labels == labels {
            converged = true;
            break;
        }
        // nearest-medoid reassignment can only lower the cost
        labels = new_labels;
        trace.push(new_cost);
    }
    let assignment = Assignment::from_labels(data, labels, k)?;
    Ok(Clustering {
        assignment,
        medoids: Some(medoids),
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Gonzalez farthest-first traversal. The first center is drawn from the
/// seed; each next center is the point farthest from the chosen set (lowest
/// index on ties). Points go to their nearest center.
pub fn kcenter_greedy<T: Real>(data: &Dataset<T>, config: &BaselineConfig) -> Result<Clustering<T>> {
    config.validate(data.len())?;
    let (n, k) = (data.len(), config.k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers = vec![rng.random_range(0..n)];
    let mut near: Vec<T> = (0..n).map(|i| squared_distance(data.point(i), data.point(centers[0]))).collect();
    let mut labels = vec![0usize; n];
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if near[i] > near[far] {
                far = i;
            }
        }
        let c = centers.len();
        centers.push(far);
        for i in 0..n {
            let d = squared_distance(data.point(i), data.point(far));
            if d < near[i] {
                near[i] = d;
                labels[i] = c;
            }
        }
    }
    for (c, &p) in centers.iter().enumerate() {
        labels[p] = c;
    }
    let assignment = Assignment::from_labels(data, labels, k)?;
    let radius = (0..n)
        .map(|i| squared_distance(data.point(i), data.point(centers[assignment.labels()[i]])))
        .fold(T::zero(), T::max)
        .sqrt();
    Ok(Clustering {
        assignment,
        medoids: Some(centers),
        objective_trace: vec![radius],
        iterations: 1,
        converged: true,
    })
}

/// Lloyd iterations whose assignment step is the exact size-bounded
/// min-cost assignment. Without explicit bounds every cluster gets `(1, N)`.
pub fn cardinality_constrained_kmeans<T: Real>(data: &Dataset<T>, config: &BaselineConfig) -> Result<Clustering<T>> {
    config.validate(data.len())?;
    let (n, k) = (data.len(), config.k);
    let bounds = config.cardinality_bounds.clone().unwrap_or_else(|| vec![(1, n); k]);
    if bounds.len() != k {
        return input_err("one (lower, upper) bound per cluster is required");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers: Vec<Vec<T>> = seed_points(data, k, config.init, &mut rng)
        .into_iter()
        .map(|i| data.point(i).to_vec())
        .collect();
    let step = |centers: &[Vec<T>], incumbent: Option<&[usize]>| -> Result<Vec<usize>> {
        let costs: Vec<T> = (0..n)
            .flat_map(|i| centers.iter().map(move |c| squared_distance(data.point(i), c)))
            .collect();
        let mut problem = AssignmentProblem::new(n, k, costs, Sense::Min)?.with_bounds(bounds.clone())?;
        if let Some(inc) = incumbent {
            problem = problem.with_incumbent(inc.to_vec());
        }
        Ok(solve_assignment(&problem)?.labels)
    };
    let mut labels = step(&centers, None)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        centers = means(data, &labels, k)?.0;
        trace.push(cost(data, &labels, &centers));
        let next = step(&centers, Some(&labels))?;
        if cost(data, &next, &centers) >= cost(data, &labels, &centers) {
            converged = true;
            break;
        }
        labels = next;
    }
    let assignment = Assignment::from_labels(data, labels, k)?;
    Ok(Clustering {
        assignment,
        medoids: None,
        objective_trace: trace,
        iterations,
        converged,
    })
}
