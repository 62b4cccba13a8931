//! Independent exhaustive oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radius_kmeans::rounding::{AssignmentProblem, Sense};
use radius_kmeans::conic::{svec_index, ConeKind, ConicProgram, ConicSolution};
use radius_kmeans::{Dataset, DistanceMatrix};

/// Calls `f` on every labelling in `0..k` of `n` points.
pub fn for_each_labelling(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut labels = vec![0usize; n];
    loop {
        f(&labels);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Best objective over all labellings feasible for `problem`, by enumeration.
pub fn brute_force_assignment(problem: &AssignmentProblem<f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    for_each_labelling(problem.n(), problem.k(), |labels| {
        if !problem.is_feasible(labels) {
            return;
        }
        let v = problem.objective(labels);
        let better = match (best, problem.sense()) {
            (None, _) => true,
            (Some(b), Sense::Min) => v < b,
            (Some(b), Sense::Max) => v > b,
        };
        if better {
            best = Some(v);
        }
    });
    best
}

/// Minimum k-means cost over all partitions into `k` non-empty clusters whose
/// pairwise squared distances stay within `threshold` (`None`: unconstrained).
pub fn brute_force_clustering(data: &Dataset<f64>, k: usize, threshold: Option<f64>) -> Option<(f64, Vec<usize>)> {
    let n = data.len();
    let d = DistanceMatrix::from_dataset(data);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_labelling(n, k, |labels| {
        // canonical form: first occurrences of labels in increasing order
        let mut next = 0;
        for &l in labels {
            if l > next {
                return;
            }
            if l == next {
                next += 1;
            }
        }
        if next != k {
            return;
        }
        if let Some(th) = threshold {
            for i in 0..n {
                for j in i + 1..n {
                    if labels[i] == labels[j] && d.get(i, j) > th {
                        return;
                    }
                }
            }
        }
        // cost via means computed directly
        let dim = data.dim();
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for t in 0..dim {
                sums[l * dim + t] += data.point(i)[t];
            }
        }
        let mut cost = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            for t in 0..dim {
                let c = sums[l * dim + t] / counts[l] as f64;
                cost += (data.point(i)[t] - c).powi(2);
            }
        }
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, labels.to_vec()));
        }
    });
    best
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Dataset<f64> {
    let flat: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::from_flat(flat, dim, None).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random standard-form SDP `min <C, X> s.t. <A_k, X> = b_k, X psd` of
/// order `n` with `m` constraints, built around a planted strictly
/// complementary pair so the optimal value is known in closed form.
pub struct PlantedSdp {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub value: f64,
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

fn sym_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PlantedSdp {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Self {
        let q = orthonormal(rng, n);
        let rank = rng.random_range(1..n.max(2));
        let mut x = vec![0.0; n * n];
        let mut z = vec![0.0; n * n];
        for (t, v) in q.iter().enumerate() {
            let (target, w) = if t < rank {
                (&mut x, rng.random_range(0.5..2.0))
            } else {
                (&mut z, rng.random_range(0.5..2.0))
            };
            for i in 0..n {
                for j in 0..n {
                    target[i * n + j] += w * v[i] * v[j];
                }
            }
        }
        let mut a = Vec::with_capacity(m);
        for _ in 0..m {
            let mut ak = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = rng.random_range(-1.0..1.0);
                    ak[i * n + j] = v;
                    ak[j * n + i] = v;
                }
            }
            a.push(ak);
        }
        let b: Vec<f64> = a.iter().map(|ak| sym_dot(ak, &x)).collect();
        let mut c = z.clone();
        for ak in &a {
            let y = rng.random_range(-1.0..1.0);
            c.iter_mut().zip(ak).for_each(|(ci, ai)| *ci += y * ai);
        }
        let value = sym_dot(&c, &x);
        Self { n, c, a, b, value }
    }

    /// The program over one psd block named "X".
    pub fn program(&self) -> ConicProgram<f64> {
        let n = self.n;
        let mut p = ConicProgram::new();
        let blk = p.add_psd_block("X", n);
        let terms = |mat: &[f64]| -> Vec<(usize, f64)> {
            let mut t = Vec::new();
            for i in 0..n {
                for j in i..n {
                    let w = if i == j { 1.0 } else { 2.0 };
                    t.push((blk.entry(i, j), w * mat[i * n + j]));
                }
            }
            t
        };
        for (var, coef) in terms(&self.c) {
            p.set_objective(var, coef);
        }
        for (ak, &bk) in self.a.iter().zip(&self.b) {
            p.add_equality(terms(ak), bk);
        }
        p
    }

    /// Independent KKT residuals of a returned solution:
    /// (max |<A_k, X> - b_k|, max |C - sum_k y_k A_k - Z|, |<X, Z>|), plus
    /// whether `X + eps I` and `Z + eps I` admit a Cholesky factor.
    pub fn kkt(&self, sol: &ConicSolution<f64>, eps: f64) -> (f64, f64, f64, bool) {
        let n = self.n;
        let blk = sol_block(n);
        let mut x = vec![0.0; n * n];
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let idx = blk(i, j);
                x[i * n + j] = sol.primal[idx];
                x[j * n + i] = sol.primal[idx];
                z[i * n + j] = sol.dual.cones[0][idx];
                z[j * n + i] = sol.dual.cones[0][idx];
            }
        }
        let pres = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(ak, bk)| (sym_dot(ak, &x) - bk).abs())
            .fold(0.0, f64::max);
        let mut r = self.c.clone();
        for (ak, yk) in self.a.iter().zip(&sol.dual.equalities) {
            r.iter_mut().zip(ak).for_each(|(ri, ai)| *ri -= yk * ai);
        }
        let dres = r.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let comp = sym_dot(&x, &z).abs();
        let psd = cholesky_ok(&x, n, eps) && cholesky_ok(&z, n, eps);
        (pres, dres, comp, psd)
    }
}

fn sol_block(n: usize) -> impl Fn(usize, usize) -> usize {
    // row-major upper triangle, the order used by a single psd block at offset 0
    move |i, j| i * n - i * (i + 1) / 2 + j
}

/// Whether `a + eps I` is positive definite.
pub fn cholesky_ok(a: &[f64], n: usize, eps: f64) -> bool {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j] + eps - (0..j).map(|t| l[j * n + t] * l[j * n + t]).sum::<f64>();
        if d <= 0.0 {
            return false;
        }
        d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|t| l[i * n + t] * l[j * n + t]).sum::<f64>();
            l[i * n + j] = s / d;
        }
    }
    true
}

/// Optimal value of `program` from an independent interior-point solver;
/// `+inf` when it proves the program infeasible. Much more accurate than the
/// first-order solver on small programs.
pub fn interior_point_value(program: &ConicProgram<f64>) -> Result<f64, String> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

    let n = program.num_vars();
    let (mut ri, mut ci, mut vi, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut cones = Vec::new();
    let mut row = 0;
    let mut push_rows = |rows: &[radius_kmeans::conic::SparseRow<f64>], row: &mut usize, b: &mut Vec<f64>| {
        for r in rows {
            for &(j, a) in &r.terms {
                ri.push(*row);
                ci.push(j);
                vi.push(a);
            }
            b.push(r.rhs);
            *row += 1;
        }
    };
    push_rows(program.equalities(), &mut row, &mut b);
    cones.push(SupportedConeT::ZeroConeT(program.equalities().len()));
    push_rows(program.inequalities(), &mut row, &mut b);
    cones.push(SupportedConeT::NonnegativeConeT(program.inequalities().len()));
    for cone in program.cones() {
        match cone.kind {
            ConeKind::Nonnegative => {
                for &j in &cone.indices {
                    ri.push(row);
                    ci.push(j);
                    vi.push(-1.0);
                    b.push(0.0);
                    row += 1;
                }
                cones.push(SupportedConeT::NonnegativeConeT(cone.indices.len()));
            }
            ConeKind::Psd { order } => {
                // scaled upper triangle, column by column
                for j in 0..order {
                    for i in 0..=j {
                        ri.push(row);
                        ci.push(cone.indices[svec_index(order, i, j)]);
                        vi.push(if i == j { -1.0 } else { -std::f64::consts::SQRT_2 });
                        b.push(0.0);
                        row += 1;
                    }
                }
                cones.push(SupportedConeT::PSDTriangleConeT(order));
            }
        }
    }
    let a = CscMatrix::new_from_triplets(row, n, ri, ci, vi);
    let p = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(500)
        .build()
        .map_err(|e| e.to_string())?;
    let mut solver =
        DefaultSolver::new(&p, program.objective(), &a, &b, &cones, settings).map_err(|e| format!("{e:?}"))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved => Ok(solver.solution.obj_val + program.objective_offset()),
        SolverStatus::PrimalInfeasible => Ok(f64::INFINITY),
        other => Err(format!("{other:?}")),
    }
}
