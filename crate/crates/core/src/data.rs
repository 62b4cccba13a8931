//! Datasets, squared-distance matrices, radius conflict graphs and cluster
//! assignments.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{input_err, Error, Result};
use crate::scalar::Real;

/// `N` points in `m` dimensions, stored row-major, with optional region tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    points: Vec<T>,
    n: usize,
    dim: usize,
    labels: Option<Vec<String>>,
    seed: Option<u64>,
}

impl<T: Real> Dataset<T> {
    pub fn from_rows(rows: &[Vec<T>], labels: Option<Vec<String>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return input_err("rows have inconsistent dimension");
        }
        Self::from_flat(rows.concat(), dim, labels)
    }

    pub fn from_flat(points: Vec<T>, dim: usize, labels: Option<Vec<String>>) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return input_err("dataset needs at least one point and one coordinate");
        }
        if !points.len().is_multiple_of(dim) {
            return input_err("coordinate count is not a multiple of the dimension");
        }
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return input_err(format!("non-finite coordinate at point {}", bad / dim));
        }
        let n = points.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return input_err(format!("{} labels for {} points", l.len(), n));
            }
        }
        Ok(Self {
            points,
            n,
            dim,
            labels,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[T] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Reads the `x0,...,x{m-1}[,label]` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let has_label = headers.iter().next_back() == Some("label");
        let dim = headers.len() - usize::from(has_label);
        for (c, h) in headers.iter().take(dim).enumerate() {
            if h != format!("x{c}") {
                return input_err(format!("unexpected column header {h:?}"));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for c in 0..dim {
                let v: f64 = rec[c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Input(format!("bad coordinate {:?}", &rec[c])))?;
                points.push(T::lit(v));
            }
            if has_label {
                labels.push(rec[dim].to_string());
            }
        }
        Self::from_flat(points, dim, has_label.then_some(labels))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|c| format!("x{c}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v}")).collect();
            if let Some(l) = &self.labels {
                row.push(l[i].clone());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Symmetric matrix of squared Euclidean distances `d_ij = ||x_i - x_j||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    n: usize,
    entries: Vec<T>,
}

impl<T: Real> DistanceMatrix<T> {
    pub fn from_dataset(data: &Dataset<T>) -> Self {
        let n = data.len();
        let mut entries = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = squared_distance(data.point(i), data.point(j));
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Self { n, entries }
    }

    /// Builds from explicit entries after checking symmetry, zero diagonal and sign.
    pub fn from_entries(n: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return input_err("distance matrix must be n x n with n >= 1");
        }
        for i in 0..n {
            if entries[i * n + i] != T::zero() {
                return input_err("distance matrix diagonal must be zero");
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < T::zero() || v != entries[j * n + i] {
                    return input_err(format!("invalid distance entry ({i},{j})"));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn max(&self) -> T {
        self.entries.iter().copied().fold(T::zero(), T::max)
    }
}

/// Squared distances of a dataset; fails on non-finite input.
pub fn squared_pairwise_distances<T: Real>(data: &Dataset<T>) -> Result<DistanceMatrix<T>> {
    if data.flat().iter().any(|v| !v.is_finite()) {
        return input_err("non-finite coordinates");
    }
    Ok(DistanceMatrix::from_dataset(data))
}

pub(crate) fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Maximal cluster radius `r`; `Unbounded` is the `r = inf` limit with no conflicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> Radius<T> {
    pub fn new(r: T) -> Result<Self> {
        if r.is_nan() || r <= T::zero() {
            return input_err(format!("radius must be positive, got {r}"));
        }
        Ok(if r.is_infinite() {
            Radius::Unbounded
        } else {
            Radius::Finite(r)
        })
    }

    /// `4 r^2`, the largest squared distance allowed inside one cluster.
    pub fn threshold(&self) -> Option<T> {
        match *self {
            Radius::Finite(r) => Some(T::lit(4.0) * r * r),
            Radius::Unbounded => None,
        }
    }

    pub fn value(&self) -> Option<T> {
        match *self {
            Radius::Finite(r) => Some(r),
            Radius::Unbounded => None,
        }
    }
}

impl<T: Real> std::str::FromStr for Radius<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Radius::Unbounded);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Input(format!("cannot parse radius {s:?}")))?;
        Radius::new(T::lit(v))
    }
}

/// Pairs that can never share a cluster under radius `r`: `d_ij > 4 r^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGraph<T> {
    n: usize,
    edges: Vec<(usize, usize)>,
    radius: Radius<T>,
    adjacency: Vec<Vec<usize>>,
    matrix: Vec<bool>,
}

impl<T: Real> ConflictGraph<T> {
    pub fn new(distances: &DistanceMatrix<T>, radius: Radius<T>) -> Self {
        let n = distances.len();
        let mut edges = Vec::new();
        if let Some(th) = radius.threshold() {
            for i in 0..n {
                for j in i + 1..n {
                    if distances.get(i, j) > th {
                        edges.push((i, j));
                    }
                }
            }
        }
        Self::from_edges(n, edges, radius)
    }

    /// Builds a graph from an explicit edge list (deduplicated and sorted here).
    pub fn from_edges(n: usize, mut edges: Vec<(usize, usize)>, radius: Radius<T>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.retain(|&(i, j)| i != j && j < n);
        edges.sort_unstable();
        edges.dedup();
        let mut adjacency = vec![Vec::new(); n];
        let mut matrix = vec![false; n * n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
            matrix[i * n + j] = true;
            matrix[j * n + i] = true;
        }
        for a in adjacency.iter_mut() {
            a.sort_unstable();
        }
        Self {
            n,
            edges,
            radius,
            adjacency,
            matrix,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_edges(n, Vec::new(), Radius::Unbounded)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn radius(&self) -> Radius<T> {
        self.radius
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn conflicts(&self, i: usize, j: usize) -> bool {
        self.matrix[i * self.n + j]
    }

    /// Large pairwise-conflicting set from multi-start greedy growth.
    ///
    /// Every start vertex is tried; the candidate with the most neighbours
    /// inside the remaining candidate set is added until none remain.
    pub fn greedy_clique(&self) -> Vec<usize> {
        let mut best: Vec<usize> = if self.n > 0 { vec![0] } else { Vec::new() };
        for start in 0..self.n {
            if self.adjacency[start].len() < best.len() {
                continue;
            }
            let mut clique = vec![start];
            let mut cand: Vec<usize> = self.adjacency[start].clone();
            while !cand.is_empty() {
                let (pick, _) = cand
                    .iter()
                    .map(|&v| (v, cand.iter().filter(|&&w| self.conflicts(v, w)).count()))
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty");
                clique.push(pick);
                cand.retain(|&w| w != pick && self.conflicts(pick, w));
            }
            if clique.len() > best.len() {
                best = clique;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Conflict graph of `distances` under radius `r` (edge iff `d_ij > 4 r^2`, exact comparison).
pub fn conflict_graph<T: Real>(distances: &DistanceMatrix<T>, r: T) -> Result<ConflictGraph<T>> {
    Ok(ConflictGraph::new(distances, Radius::new(r)?))
}

/// Hard assignment of `N` points to `K` clusters with per-cluster means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment<T> {
    labels: Vec<usize>,
    k: usize,
    dim: usize,
    centroids: Vec<T>,
    sizes: Vec<usize>,
}

impl<T: Real> Assignment<T> {
    /// Computes sizes and centroids from point labels. Empty clusters get a
    /// zero centroid and make the assignment invalid.
    pub fn from_labels(data: &Dataset<T>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != data.len() {
            return input_err("one cluster label per point is required");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return input_err(format!("cluster label {bad} out of range for K={k}"));
        }
        let dim = data.dim();
        let mut centroids = vec![T::zero(); k * dim];
        let mut sizes = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            for (c, &v) in centroids[l * dim..(l + 1) * dim].iter_mut().zip(data.point(i)) {
                *c += v;
            }
        }
        for (l, &s) in sizes.iter().enumerate() {
            if s > 0 {
                let inv = T::one() / T::from_usize_lossy(s);
                centroids[l * dim..(l + 1) * dim].iter_mut().for_each(|c| *c *= inv);
            }
        }
        Ok(Self {
            labels,
            k,
            dim,
            centroids,
            sizes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn centroid(&self, k: usize) -> &[T] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[T]> {
        self.centroids.chunks_exact(self.dim)
    }

    /// Binary `N x K` matrix with `pi[i][k] = 1` iff point `i` is in cluster `k`.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        self.labels
            .iter()
            .map(|&l| (0..self.k).map(|k| u8::from(k == l)).collect())
            .collect()
    }

    /// Points of each cluster in increasing index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.sizes.iter().all(|&s| s >= 1)
    }

    /// Intra-cluster conflict pairs; empty for a radius-feasible assignment.
    pub fn violations(&self, graph: &ConflictGraph<T>) -> Vec<(usize, usize)> {
        graph
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| self.labels[i] == self.labels[j])
            .collect()
    }
}

/// Standard interleaving half-circles; `imbalance` fractions go to (concave, convex).
///
/// The concave moon is the unit upper half-circle, the convex moon its mirror
/// image shifted by `(1, -0.5)`. Points are evenly spaced in angle and then
/// perturbed by isotropic Gaussian noise.
pub fn make_two_moons<T: Real>(
    n: usize,
    imbalance: (f64, f64),
    noise: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    let (f1, f2) = imbalance;
    if n < 2 {
        return input_err("two moons needs n >= 2");
    }
    if !(f1 > 0.0 && f2 > 0.0 && ((f1 + f2) - 1.0).abs() < 1e-9) {
        return input_err("imbalance fractions must be positive and sum to 1");
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return input_err("noise must be a finite non-negative standard deviation");
    }
    let n1 = ((n as f64) * f1).round() as usize;
    let n2 = n - n1;
    if n1 == 0 || n2 == 0 {
        return input_err("imbalance leaves one moon empty");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std-dev");
    let spacing = |i: usize, m: usize| {
        if m == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut push = |x: f64, y: f64, rng: &mut ChaCha8Rng, tag: &str| {
        let (dx, dy) = if noise > 0.0 {
            (normal.sample(rng), normal.sample(rng))
        } else {
            (0.0, 0.0)
        };
        points.push(T::lit(x + dx));
        points.push(T::lit(y + dy));
        labels.push(tag.to_string());
    };
    for i in 0..n1 {
        let t = spacing(i, n1);
        push(t.cos(), t.sin(), &mut rng, "concave");
    }
    for i in 0..n2 {
        let t = spacing(i, n2);
        push(1.0 - t.cos(), 0.5 - t.sin(), &mut rng, "convex");
    }
    Ok(Dataset::from_flat(points, 2, Some(labels))?.with_seed(seed))
}

/// Generating intervals of the one-dimensional benchmark.
pub const TRIPLE_UNIFORM_INTERVALS: [(f64, f64); 3] = [(-3.0, -1.0), (-1.0, 1.0), (1.0, 3.0)];

/// One-dimensional samples from `U(-3,-1)`, `U(-1,1)`, `U(1,3)`, labelled `0`, `1`, `2`.
pub fn make_1d_triple_uniform<T: Real>(counts: [usize; 3], seed: u64) -> Result<Dataset<T>> {
    if counts.contains(&0) {
        return input_err("all interval counts must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (tag, (&count, &(lo, hi))) in counts.iter().zip(&TRIPLE_UNIFORM_INTERVALS).enumerate() {
        for _ in 0..count {
            points.push(T::lit(rng.random_range(lo..hi)));
            labels.push(tag.to_string());
        }
    }
    Ok(Dataset::from_flat(points, 1, Some(labels))?.with_seed(seed))
}
