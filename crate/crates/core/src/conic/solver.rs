//! First-order operator-splitting solver for [`ConicProgram`]s.
//!
//! The program is first presolved: equality rows with a single free variable
//! fix that variable, and PSD blocks whose diagonal entry is fixed at zero
//! lose that row and column (a PSD matrix with a zero diagonal entry has a
//! zero row). What remains is written as
//!
//! ```text
//! minimise c^T x  subject to  A x + s = b,  s in {0}^p x R+^q x S+^{n_1} x ...
//! ```
//!
//! and solved by ADMM with over-relaxation, where the affine step solves
//! `(sigma I + A^T R A) x = rhs` by preconditioned conjugate gradients and
//! the cone step projects each PSD block through a symmetric
//! eigendecomposition. Rows and columns are Ruiz-equilibrated; residuals and
//! objectives are always reported in the original units.

use std::sync::Arc;
use std::time::Instant;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut, Par, Side};

use crate::conic::program::{svec_pairs, ConeKind, ConicProgram};
use crate::conic::sparse::{dot, inf_norm, Csr};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, project_psd};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Primal infeasible; `ConicSolution::ray` holds a dual improving direction.
    Infeasible,
    /// Dual infeasible; `ConicSolution::ray` holds a primal improving direction.
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolverSettings<T> {
    pub tol: T,
    pub max_iters: usize,
    /// Over-relaxation parameter in `(0, 2)`.
    pub alpha: T,
    pub sigma: T,
    pub rho: T,
    /// Multiplier applied to `rho` on equality rows.
    pub rho_equality_scale: T,
    pub adaptive_rho: bool,
    pub check_every: usize,
    pub scaling_passes: usize,
    /// Initial primal point in the program's variable space.
    pub warm_start: Option<Vec<T>>,
    /// Print residuals to stderr at every check.
    pub verbose: bool,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            max_iters: 50_000,
            alpha: T::lit(1.6),
            sigma: T::lit(1e-6),
            rho: T::lit(0.1),
            rho_equality_scale: T::lit(1e3),
            adaptive_rho: true,
            check_every: 10,
            scaling_passes: 15,
            warm_start: None,
            verbose: false,
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn with_tol(tol: T, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            ..Self::default()
        }
    }
}

/// Multipliers in the convention
/// `c = E^T lambda - G^T mu + sum_cones d<Z, X>/dv` with `mu >= 0` and each
/// cone multiplier in the (self-dual) cone.
#[derive(Debug, Clone, Default)]
pub struct DualSolution<T> {
    pub equalities: Vec<T>,
    pub inequalities: Vec<T>,
    /// One value per cone index: `z_j` for nonnegative cones, the matrix entry
    /// `Z_ij` for PSD cones.
    pub cones: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct ConicSolution<T> {
    pub status: SolveStatus,
    pub primal: Vec<T>,
    pub dual: DualSolution<T>,
    pub primal_objective: T,
    pub dual_objective: T,
    /// Normalised residuals, comparable against the requested tolerance.
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
    pub iterations: usize,
    pub ray: Option<Vec<T>>,
    /// Variables and rows left after presolve.
    pub reduced_size: (usize, usize),
    pub seconds: f64,
}

impl<T: Real> ConicSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn max_residual(&self) -> T {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }
}

/// Solves `program` to tolerance `tol` within `max_iters` iterations.
pub fn solve_conic<T: Real>(program: &ConicProgram<T>, tol: T, max_iters: usize) -> Result<ConicSolution<T>> {
    solve_conic_with(program, &SolverSettings::with_tol(tol, max_iters))
}

pub fn solve_conic_with<T: Real>(program: &ConicProgram<T>, settings: &SolverSettings<T>) -> Result<ConicSolution<T>> {
    program.validate()?;
    let started = Instant::now();
    let pre = match Presolve::run(program) {
        Ok(p) => p,
        Err(row) => return Ok(infeasible_at_presolve(program, row, started)),
    };
    let internal = Internal::build(program, &pre);
    let mut sol = Admm::new(&internal, settings, &pre, program).run()?;
    sol.seconds = started.elapsed().as_secs_f64();
    Ok(sol)
}

fn infeasible_at_presolve<T: Real>(program: &ConicProgram<T>, _row: usize, started: Instant) -> ConicSolution<T> {
    ConicSolution {
        status: SolveStatus::Infeasible,
        primal: vec![T::zero(); program.num_vars()],
        dual: DualSolution::default(),
        primal_objective: T::infinity(),
        dual_objective: T::infinity(),
        primal_residual: T::infinity(),
        dual_residual: T::zero(),
        gap: T::zero(),
        iterations: 0,
        ray: None,
        reduced_size: (0, 0),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Result of presolve, mapping the original program onto the reduced one.
struct Presolve<T> {
    fixed: Vec<Option<T>>,
    /// Original variable -> reduced column.
    column: Vec<Option<usize>>,
    free_vars: Vec<usize>,
    /// `(equality row, variable)` in fixing order.
    defining: Vec<(usize, usize)>,
    kept_eq: Vec<usize>,
    kept_ineq: Vec<usize>,
    /// `(cone, position in cone)` of nonnegative memberships on free variables.
    nonneg: Vec<(usize, usize)>,
    /// `(cone, kept matrix rows)` of PSD memberships that remain.
    psd: Vec<(usize, Vec<usize>)>,
}

impl<T: Real> Presolve<T> {
    /// Returns the index of an inconsistent row (equalities first, then
    /// inequalities, then cones) when presolve proves infeasibility.
    fn run(p: &ConicProgram<T>) -> std::result::Result<Self, usize> {
        let n = p.num_vars();
        let eqs = p.equalities();
        let mut fixed: Vec<Option<T>> = vec![None; n];
        let mut used = vec![false; eqs.len()];
        let mut defining = Vec::new();
        let feas = |rhs: T, r: T| r.abs() <= T::lit(1e-9) * (T::one() + rhs.abs());
        let mut var_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, row) in eqs.iter().enumerate() {
            for &(j, a) in &row.terms {
                if a != T::zero() {
                    var_rows[j].push(r);
                }
            }
        }
        let mut queue: Vec<usize> = (0..eqs.len()).collect();
        loop {
            while let Some(r) = queue.pop() {
                if used[r] {
                    continue;
                }
                let row = &eqs[r];
                let mut rhs = row.rhs;
                let mut free: Vec<(usize, T)> = Vec::new();
                for &(j, a) in &row.terms {
                    if a == T::zero() {
                        continue;
                    }
                    match fixed[j] {
                        Some(v) => rhs -= a * v,
                        None => match free.iter_mut().find(|f| f.0 == j) {
                            Some(f) => f.1 += a,
                            None => free.push((j, a)),
                        },
                    }
                }
                free.retain(|f| f.1 != T::zero());
                let nfree = free.len();
                match nfree {
                    0 => {
                        if !feas(row.rhs, rhs) {
                            return Err(r);
                        }
                        used[r] = true;
                    }
                    1 => {
                        let (j, a) = free[0];
                        fixed[j] = Some(rhs / a);
                        used[r] = true;
                        defining.push((r, j));
                        queue.extend(var_rows[j].iter().copied().filter(|&q| !used[q]));
                    }
                    _ => {}
                }
            }
            // PSD rows whose diagonal is fixed at zero must vanish entirely.
            let mut changed = false;
            for cone in p.cones() {
                let ConeKind::Psd { order } = cone.kind else { continue };
                let idx = |i: usize, j: usize| cone.indices[crate::conic::program::svec_index(order, i, j)];
                for i in 0..order {
                    match fixed[idx(i, i)] {
                        Some(v) if v.abs() <= T::lit(1e-14) => {
                            for j in 0..order {
                                let var = idx(i, j);
                                match fixed[var] {
                                    None => {
                                        fixed[var] = Some(T::zero());
                                        changed = true;
                                        queue.extend(var_rows[var].iter().copied().filter(|&q| !used[q]));
                                    }
                                    Some(w) if w.abs() > T::lit(1e-9) => {
                                        return Err(eqs.len() + p.inequalities().len());
                                    }
                                    _ => {}
                                }
                            }
                        }
                        Some(v) if v < T::lit(-1e-9) => return Err(eqs.len() + p.inequalities().len()),
                        _ => {}
                    }
                }
            }
            if !changed && queue.is_empty() {
                break;
            }
        }

        let mut column = vec![None; n];
        let mut free_vars = Vec::new();
        for j in 0..n {
            if fixed[j].is_none() {
                column[j] = Some(free_vars.len());
                free_vars.push(j);
            }
        }
        let kept_eq: Vec<usize> = (0..eqs.len()).filter(|&r| !used[r]).collect();
        let mut kept_ineq = Vec::new();
        for (r, row) in p.inequalities().iter().enumerate() {
            let mut lhs = T::zero();
            let mut any_free = false;
            for &(j, a) in &row.terms {
                match fixed[j] {
                    Some(v) => lhs += a * v,
                    None => any_free |= a != T::zero(),
                }
            }
            if any_free {
                kept_ineq.push(r);
            } else if lhs > row.rhs + T::lit(1e-9) * (T::one() + row.rhs.abs()) {
                return Err(eqs.len() + r);
            }
        }
        let mut nonneg = Vec::new();
        let mut psd = Vec::new();
        for (c, cone) in p.cones().iter().enumerate() {
            match cone.kind {
                ConeKind::Nonnegative => {
                    for (pos, &j) in cone.indices.iter().enumerate() {
                        match fixed[j] {
                            None => nonneg.push((c, pos)),
                            Some(v) if v < T::lit(-1e-9) => return Err(eqs.len() + p.inequalities().len() + c),
                            _ => {}
                        }
                    }
                }
                ConeKind::Psd { order } => {
                    let idx = |i: usize, j: usize| cone.indices[crate::conic::program::svec_index(order, i, j)];
                    let rows: Vec<usize> = (0..order)
                        .filter(|&i| !matches!(fixed[idx(i, i)], Some(v) if v.abs() <= T::lit(1e-14)))
                        .collect();
                    if rows.is_empty() {
                        continue;
                    }
                    let all_fixed = rows.iter().all(|&i| rows.iter().all(|&j| fixed[idx(i, j)].is_some()));
                    if all_fixed {
                        let k = rows.len();
                        let mut m = vec![T::zero(); k * k];
                        for (a, &i) in rows.iter().enumerate() {
                            for (b, &j) in rows.iter().enumerate() {
                                m[a * k + b] = fixed[idx(i, j)].expect("fixed");
                            }
                        }
                        if min_eigenvalue(&m, k) < T::lit(-1e-9) {
                            return Err(eqs.len() + p.inequalities().len() + c);
                        }
                        continue;
                    }
                    psd.push((c, rows));
                }
            }
        }
        Ok(Self {
            fixed,
            column,
            free_vars,
            defining,
            kept_eq,
            kept_ineq,
            nonneg,
            psd,
        })
    }
}

/// Cone layout of the internal slack vector.
#[derive(Debug, Clone)]
struct Layout {
    zero: usize,
    nonneg: usize,
    /// `(first row, order)` of each PSD block.
    psd: Vec<(usize, usize)>,
}

impl Layout {
    fn project<T: Real>(&self, v: &mut [T], dual: bool, work: &mut Vec<T>) {
        if !dual {
            v[..self.zero].iter_mut().for_each(|x| *x = T::zero());
        }
        let nn = self.zero..self.zero + self.nonneg;
        v[nn].iter_mut().for_each(|x| *x = x.max(T::zero()));
        for &(start, order) in &self.psd {
            project_svec(&mut v[start..start + order * (order + 1) / 2], order, work);
        }
    }
}

fn sqrt2<T: Real>() -> T {
    T::lit(std::f64::consts::SQRT_2)
}

/// Projects a scaled svec (off-diagonals multiplied by `sqrt 2`) onto the PSD cone.
fn project_svec<T: Real>(v: &mut [T], order: usize, work: &mut Vec<T>) {
    if order == 1 {
        v[0] = v[0].max(T::zero());
        return;
    }
    let inv = T::one() / sqrt2::<T>();
    work.clear();
    work.resize(order * order, T::zero());
    let mut p = 0;
    for i in 0..order {
        for j in i..order {
            let val = if i == j { v[p] } else { v[p] * inv };
            work[i * order + j] = val;
            work[j * order + i] = val;
            p += 1;
        }
    }
    project_psd(work, order);
    let s2 = sqrt2::<T>();
    let mut p = 0;
    for i in 0..order {
        for j in i..order {
            v[p] = if i == j { work[i * order + j] } else { work[i * order + j] * s2 };
            p += 1;
        }
    }
}

/// What an internal row stands for, used to map duals back.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Equality(usize),
    Inequality(usize),
    Nonneg { cone: usize, pos: usize },
    Psd { cone: usize, i: usize, j: usize },
}

struct Internal<T> {
    n: usize,
    a: Csr<T>,
    b: Vec<T>,
    c: Vec<T>,
    offset: T,
    layout: Layout,
    origin: Vec<RowOrigin>,
}

impl<T: Real> Internal<T> {
    fn build(p: &ConicProgram<T>, pre: &Presolve<T>) -> Self {
        let n = pre.free_vars.len();
        let mut rows: Vec<Vec<(usize, T)>> = Vec::new();
        let mut b = Vec::new();
        let mut origin = Vec::new();
        let push_linear = |row: &crate::conic::program::SparseRow<T>, o: RowOrigin, rows: &mut Vec<Vec<(usize, T)>>, b: &mut Vec<T>, origin: &mut Vec<RowOrigin>| {
            let mut rhs = row.rhs;
            let mut terms = Vec::with_capacity(row.terms.len());
            for &(j, a) in &row.terms {
                match (pre.fixed[j], pre.column[j]) {
                    (Some(v), _) => rhs -= a * v,
                    (None, Some(col)) => terms.push((col, a)),
                    (None, None) => unreachable!("free variable without column"),
                }
            }
            rows.push(terms);
            b.push(rhs);
            origin.push(o);
        };
        for &r in &pre.kept_eq {
            push_linear(&p.equalities()[r], RowOrigin::Equality(r), &mut rows, &mut b, &mut origin);
        }
        let zero = rows.len();
        for &r in &pre.kept_ineq {
            push_linear(&p.inequalities()[r], RowOrigin::Inequality(r), &mut rows, &mut b, &mut origin);
        }
        for &(cone, pos) in &pre.nonneg {
            let var = p.cones()[cone].indices[pos];
            rows.push(vec![(pre.column[var].expect("free"), -T::one())]);
            b.push(T::zero());
            origin.push(RowOrigin::Nonneg { cone, pos });
        }
        let nonneg = rows.len() - zero;
        let mut psd = Vec::new();
        for (cone, kept) in &pre.psd {
            let cm = &p.cones()[*cone];
            let ConeKind::Psd { order } = cm.kind else { unreachable!() };
            psd.push((rows.len(), kept.len()));
            for (a, b_) in svec_pairs(kept.len()) {
                let (i, j) = (kept[a], kept[b_]);
                let var = cm.indices[crate::conic::program::svec_index(order, i, j)];
                let w = if i == j { T::one() } else { sqrt2::<T>() };
                match pre.fixed[var] {
                    Some(v) => {
                        rows.push(Vec::new());
                        b.push(w * v);
                    }
                    None => {
                        rows.push(vec![(pre.column[var].expect("free"), -w)]);
                        b.push(T::zero());
                    }
                }
                origin.push(RowOrigin::Psd { cone: *cone, i, j });
            }
        }
        let a = Csr::from_rows(&rows, n);
        let c: Vec<T> = pre.free_vars.iter().map(|&j| p.objective()[j]).collect();
        let offset = p.objective_offset()
            + pre
                .fixed
                .iter()
                .zip(p.objective())
                .filter_map(|(f, &cj)| f.map(|v| v * cj))
                .sum::<T>();
        Self {
            n,
            a,
            b,
            c,
            offset,
            layout: Layout { zero, nonneg, psd },
            origin,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }
}

struct Admm<'a, T> {
    prob: &'a Internal<T>,
    settings: &'a SolverSettings<T>,
    pre: &'a Presolve<T>,
    program: &'a ConicProgram<T>,
}

/// Equilibrated copy of the internal data.
struct Scaled<T> {
    a: Csr<T>,
    at: Csr<T>,
    b: Vec<T>,
    c: Vec<T>,
    /// Row factors `E`.
    e: Vec<T>,
    /// Column factors `D`.
    d: Vec<T>,
    beta: T,
    gamma: T,
}

impl<T: Real> Scaled<T> {
    fn new(prob: &Internal<T>, passes: usize) -> Self {
        let (m, n) = (prob.m(), prob.n);
        let mut a = prob.a.clone();
        let mut e = vec![T::one(); m];
        let mut d = vec![T::one(); n];
        let lo = T::lit(1e-4);
        let hi = T::lit(1e4);
        for _ in 0..passes {
            let mut rn = vec![T::zero(); m];
            let mut cn = vec![T::zero(); n];
            for i in 0..m {
                for (j, v) in a.row(i) {
                    let av = v.abs();
                    rn[i] = rn[i].max(av);
                    cn[j] = cn[j].max(av);
                }
            }
            for &(start, order) in &prob.layout.psd {
                let len = order * (order + 1) / 2;
                let g = rn[start..start + len].iter().copied().fold(T::zero(), T::max);
                rn[start..start + len].iter_mut().for_each(|x| *x = g);
            }
            let re: Vec<T> = rn.iter().map(|&x| if x > T::zero() { T::one() / x.sqrt() } else { T::one() }).collect();
            let ce: Vec<T> = cn.iter().map(|&x| if x > T::zero() { T::one() / x.sqrt() } else { T::one() }).collect();
            let mut rf = vec![T::one(); m];
            let mut cf = vec![T::one(); n];
            for i in 0..m {
                let new = (e[i] * re[i]).max(lo).min(hi);
                rf[i] = new / e[i];
                e[i] = new;
            }
            for j in 0..n {
                let new = (d[j] * ce[j]).max(lo).min(hi);
                cf[j] = new / d[j];
                d[j] = new;
            }
            a.scale(&rf, &cf);
        }
        let mut b: Vec<T> = prob.b.iter().zip(&e).map(|(&x, &s)| x * s).collect();
        let mut c: Vec<T> = prob.c.iter().zip(&d).map(|(&x, &s)| x * s).collect();
        let clamp = |x: T| x.max(T::lit(1e-4)).min(T::lit(1e4));
        let bn = inf_norm(&b);
        let cnorm = inf_norm(&c);
        let beta = if bn > T::zero() { clamp(T::one() / bn) } else { T::one() };
        let gamma = if cnorm > T::zero() { clamp(T::one() / cnorm) } else { T::one() };
        b.iter_mut().for_each(|x| *x *= beta);
        c.iter_mut().for_each(|x| *x *= gamma);
        let at = a.transpose();
        Self {
            a,
            at,
            b,
            c,
            e,
            d,
            beta,
            gamma,
        }
    }
}

struct Residuals<T> {
    primal: T,
    dual: T,
    gap: T,
    pobj: T,
    dobj: T,
    /// Un-normalised scaled-space norms used by the rho update.
    p_ratio: T,
    d_ratio: T,
}

impl<'a, T: Real> Admm<'a, T> {
    fn new(prob: &'a Internal<T>, settings: &'a SolverSettings<T>, pre: &'a Presolve<T>, program: &'a ConicProgram<T>) -> Self {
        Self {
            prob,
            settings,
            pre,
            program,
        }
    }

    fn run(&self) -> Result<ConicSolution<T>> {
        let prob = self.prob;
        let st = self.settings;
        let (m, n) = (prob.m(), prob.n);
        let sc = Scaled::new(prob, st.scaling_passes);
        let layout = &prob.layout;

        let mut rho_base = st.rho;
        let make_rho = |base: T| -> Vec<T> {
            (0..m)
                .map(|i| if i < layout.zero { base * st.rho_equality_scale } else { base })
                .collect()
        };
        let mut rho = make_rho(rho_base);

        let mut x = vec![T::zero(); n];
        if let Some(ws) = &st.warm_start {
            for (col, &var) in self.pre.free_vars.iter().enumerate() {
                x[col] = ws.get(var).copied().unwrap_or_else(T::zero) / sc.d[col] * sc.beta;
            }
        }
        let mut work = Vec::new();
        let mut ax = vec![T::zero(); m];
        sc.a.mul_into(&x, &mut ax);
        let mut s: Vec<T> = sc.b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        layout.project(&mut s, false, &mut work);
        let mut y = vec![T::zero(); m];
        let mut xt = x.clone();
        let mut st_ = vec![T::zero(); m];
        let mut rhs = vec![T::zero(); n];
        let mut tmp_m = vec![T::zero(); m];
        let mut aty = vec![T::zero(); n];
        let mut y_prev = y.clone();
        let mut shat = vec![T::zero(); m];
        let mut x_prev = x.clone();
        let mut linsys = LinearSystem::new(&sc, &rho, st.sigma, None);
        let mut last_res = T::one();
        let mut trace: Vec<String> = Vec::new();
        let mut infeasible_hits = 0usize;
        let mut unbounded_hits = 0usize;
        let alpha = st.alpha;
        let one_minus = T::one() - alpha;

        let mut iter = 0;
        let status = loop {
            if iter >= st.max_iters {
                break SolveStatus::MaxIterations;
            }
            iter += 1;
            // affine step
            for i in 0..m {
                tmp_m[i] = rho[i] * (sc.b[i] - s[i]) + y[i];
            }
            sc.at.mul_into(&tmp_m, &mut rhs);
            for j in 0..n {
                rhs[j] += st.sigma * x[j] - sc.c[j];
            }
            let cg_tol = (T::lit(1e-2) * last_res).max(T::lit(1e-12)).min(T::lit(1e-6));
            linsys.solve(&sc, &rho, st.sigma, &rhs, &mut xt, cg_tol);
            sc.a.mul_into(&xt, &mut tmp_m);
            for i in 0..m {
                st_[i] = sc.b[i] - tmp_m[i];
            }
            // relaxation and cone step
            x_prev.copy_from_slice(&x);
            for j in 0..n {
                x[j] = alpha * xt[j] + one_minus * x[j];
            }
            y_prev.copy_from_slice(&y);
            for i in 0..m {
                shat[i] = alpha * st_[i] + one_minus * s[i];
                ax[i] = alpha * tmp_m[i] + one_minus * ax[i];
                s[i] = shat[i] + y[i] / rho[i];
            }
            layout.project(&mut s, false, &mut work);
            for i in 0..m {
                y[i] += rho[i] * (shat[i] - s[i]);
            }

            if x.iter().chain(&s).chain(&y).any(|v| !v.is_finite()) {
                return Err(Error::Solver {
                    message: "non-finite iterate".into(),
                    iteration: iter,
                    trace,
                });
            }

            if iter % st.check_every != 0 && iter != st.max_iters {
                continue;
            }
            sc.a.mul_into(&x, &mut ax);
            sc.at.mul_into(&y, &mut aty);
            let res = self.residuals(&sc, &x, &s, &y, &ax, &aty);
            last_res = res.primal.max(res.dual);
            if trace.len() >= 40 {
                trace.remove(0);
            }
            trace.push(format!(
                "it {iter} pres {:.3e} dres {:.3e} gap {:.3e} rho {:.3e}",
                res.primal.to_f64_lossy(),
                res.dual.to_f64_lossy(),
                res.gap.to_f64_lossy(),
                rho_base.to_f64_lossy()
            ));
            if st.verbose {
                eprintln!("{}", trace.last().expect("just pushed"));
            }
            let done = res.primal <= st.tol && res.dual <= st.tol && res.gap <= st.tol;
            if done {
                break SolveStatus::Optimal;
            }
            // infeasibility certificates from successive differences
            if self.primal_infeasible(&sc, &y, &y_prev, &mut work) {
                infeasible_hits += 1;
                if infeasible_hits >= 3 {
                    break SolveStatus::Infeasible;
                }
            } else {
                infeasible_hits = 0;
            }
            if self.dual_infeasible(&sc, &x, &x_prev, &mut work) {
                unbounded_hits += 1;
                if unbounded_hits >= 3 {
                    break SolveStatus::Unbounded;
                }
            } else {
                unbounded_hits = 0;
            }
            if st.adaptive_rho && iter % (st.check_every * 5) == 0 && res.d_ratio > T::zero() && res.p_ratio > T::zero() {
                let factor = (res.primal.max(T::lit(1e-14)) / res.dual.max(T::lit(1e-14))).sqrt();
                if factor > T::lit(5.0) || factor < T::lit(0.2) {
                    rho_base = (rho_base * factor).max(T::lit(1e-6)).min(T::lit(1e6));
                    rho = make_rho(rho_base);
                    linsys = LinearSystem::new(&sc, &rho, st.sigma, Some(linsys));
                }
            }
        };

        sc.a.mul_into(&x, &mut ax);
        sc.at.mul_into(&y, &mut aty);
        let res = self.residuals(&sc, &x, &s, &y, &ax, &aty);
        let ray = match status {
            SolveStatus::Infeasible => Some(self.dual_full(&sc, &y.iter().zip(&y_prev).map(|(&a, &b)| a - b).collect::<Vec<_>>()).0),
            SolveStatus::Unbounded => Some(self.primal_full(&sc, &x.iter().zip(&x_prev).map(|(&a, &b)| a - b).collect::<Vec<_>>(), false)),
            _ => None,
        };
        let primal = self.primal_full(&sc, &x, true);
        let (ybar, dual) = self.dual_full(&sc, &y);
        let _ = ybar;
        Ok(ConicSolution {
            status,
            primal,
            dual,
            primal_objective: res.pobj,
            dual_objective: res.dobj,
            primal_residual: res.primal,
            dual_residual: res.dual,
            gap: res.gap,
            iterations: iter,
            ray,
            reduced_size: (n, m),
            seconds: 0.0,
        })
    }

    fn residuals(&self, sc: &Scaled<T>, x: &[T], s: &[T], y: &[T], ax: &[T], aty: &[T]) -> Residuals<T> {
        let m = self.prob.m();
        let n = self.prob.n;
        // unscaled: x = D xh / beta, s = E^-1 sh / beta, ybar = -E yh / gamma
        let mut pr = T::zero();
        let mut axn = T::zero();
        let mut sn = T::zero();
        let mut bn = T::zero();
        let mut pr_s = T::zero();
        let mut scale_p = T::zero();
        for i in 0..m {
            let inv = T::one() / (sc.e[i] * sc.beta);
            let r = (ax[i] + s[i] - sc.b[i]) * inv;
            pr = pr.max(r.abs());
            axn = axn.max((ax[i] * inv).abs());
            sn = sn.max((s[i] * inv).abs());
            bn = bn.max((sc.b[i] * inv).abs());
            pr_s = pr_s.max((ax[i] + s[i] - sc.b[i]).abs());
            scale_p = scale_p.max(ax[i].abs()).max(s[i].abs()).max(sc.b[i].abs());
        }
        let mut dr = T::zero();
        let mut cn = T::zero();
        let mut atyn = T::zero();
        let mut dr_s = T::zero();
        let mut scale_d = T::zero();
        for j in 0..n {
            let inv = T::one() / (sc.d[j] * sc.gamma);
            let r = (sc.c[j] - aty[j]) * inv;
            dr = dr.max(r.abs());
            cn = cn.max((sc.c[j] * inv).abs());
            atyn = atyn.max((aty[j] * inv).abs());
            dr_s = dr_s.max((sc.c[j] - aty[j]).abs());
            scale_d = scale_d.max(sc.c[j].abs()).max(aty[j].abs());
        }
        let bg = sc.beta * sc.gamma;
        let pobj = dot(&sc.c, x) / bg + self.prob.offset;
        let dobj = dot(&sc.b, y) / bg + self.prob.offset;
        let gap = (pobj - dobj).abs() / (T::one() + pobj.abs() + dobj.abs());
        let eps = T::lit(1e-12);
        Residuals {
            primal: pr / (T::one() + axn.max(sn).max(bn)),
            dual: dr / (T::one() + cn.max(atyn)),
            gap,
            pobj,
            dobj,
            p_ratio: pr_s / (scale_p + eps),
            d_ratio: dr_s / (scale_d + eps),
        }
    }

    fn primal_infeasible(&self, sc: &Scaled<T>, y: &[T], y_prev: &[T], work: &mut Vec<T>) -> bool {
        // certificate ybar = -(y - y_prev) in K*, A^T ybar = 0, b^T ybar < 0
        let m = self.prob.m();
        let dy: Vec<T> = (0..m).map(|i| -(y[i] - y_prev[i])).collect();
        let norm = inf_norm(&dy);
        if norm <= T::lit(1e-10) {
            return false;
        }
        let bty = dot(&sc.b, &dy);
        let eps = T::lit(1e-3);
        if bty >= -eps * norm {
            return false;
        }
        let mut aty = vec![T::zero(); self.prob.n];
        sc.at.mul_into(&dy, &mut aty);
        if inf_norm(&aty) > eps * norm {
            return false;
        }
        let mut proj = dy.clone();
        self.prob.layout.project(&mut proj, true, work);
        let dist = dy.iter().zip(&proj).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        dist <= eps * norm
    }

    fn dual_infeasible(&self, sc: &Scaled<T>, x: &[T], x_prev: &[T], work: &mut Vec<T>) -> bool {
        // certificate dx with -A dx in K and c^T dx < 0
        let n = self.prob.n;
        let dx: Vec<T> = (0..n).map(|j| x[j] - x_prev[j]).collect();
        let norm = inf_norm(&dx);
        if norm <= T::lit(1e-10) {
            return false;
        }
        let eps = T::lit(1e-3);
        if dot(&sc.c, &dx) >= -eps * norm * inf_norm(&sc.c).max(T::lit(1e-12)) {
            return false;
        }
        let mut adx = vec![T::zero(); self.prob.m()];
        sc.a.mul_into(&dx, &mut adx);
        let neg: Vec<T> = adx.iter().map(|&v| -v).collect();
        let mut proj = neg.clone();
        self.prob.layout.project(&mut proj, false, work);
        let dist = neg.iter().zip(&proj).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        dist <= eps * norm
    }

    /// Maps a scaled reduced primal vector back to the original variables.
    fn primal_full(&self, sc: &Scaled<T>, x: &[T], with_fixed: bool) -> Vec<T> {
        let mut out: Vec<T> = if with_fixed {
            self.pre.fixed.iter().map(|f| f.unwrap_or_else(T::zero)).collect()
        } else {
            vec![T::zero(); self.program.num_vars()]
        };
        for (col, &var) in self.pre.free_vars.iter().enumerate() {
            out[var] = x[col] * sc.d[col] / sc.beta;
        }
        out
    }

    /// Unscaled internal multipliers and the original-convention duals.
    fn dual_full(&self, sc: &Scaled<T>, y: &[T]) -> (Vec<T>, DualSolution<T>) {
        let p = self.program;
        let ybar: Vec<T> = y.iter().zip(&sc.e).map(|(&v, &e)| -v * e / sc.gamma).collect();
        let mut dual = DualSolution {
            equalities: vec![T::zero(); p.equalities().len()],
            inequalities: vec![T::zero(); p.inequalities().len()],
            cones: p.cones().iter().map(|c| vec![T::zero(); c.indices.len()]).collect(),
        };
        let inv_s2 = T::one() / sqrt2::<T>();
        for (row, origin) in self.prob.origin.iter().enumerate() {
            match *origin {
                RowOrigin::Equality(r) => dual.equalities[r] = -ybar[row],
                RowOrigin::Inequality(r) => dual.inequalities[r] = ybar[row],
                RowOrigin::Nonneg { cone, pos } => dual.cones[cone][pos] = ybar[row],
                RowOrigin::Psd { cone, i, j } => {
                    let ConeKind::Psd { order } = p.cones()[cone].kind else { unreachable!() };
                    let pos = crate::conic::program::svec_index(order, i, j);
                    dual.cones[cone][pos] = if i == j { ybar[row] } else { ybar[row] * inv_s2 };
                }
            }
        }
        // multipliers of rows consumed by presolve, in reverse fixing order
        if !self.pre.defining.is_empty() {
            // stationarity residual c - E^T lambda + G^T mu - cone terms over known multipliers
            let mut grad: Vec<T> = p.objective().to_vec();
            for (r, row) in p.inequalities().iter().enumerate() {
                for &(j, g) in &row.terms {
                    grad[j] += g * dual.inequalities[r];
                }
            }
            for (c, cone) in p.cones().iter().enumerate() {
                match cone.kind {
                    ConeKind::Nonnegative => {
                        for (pos, &j) in cone.indices.iter().enumerate() {
                            grad[j] -= dual.cones[c][pos];
                        }
                    }
                    ConeKind::Psd { order } => {
                        for (pos, (i, jj)) in svec_pairs(order).into_iter().enumerate() {
                            let w = if i == jj { T::one() } else { T::lit(2.0) };
                            grad[cone.indices[pos]] -= w * dual.cones[c][pos];
                        }
                    }
                }
            }
            for (r, row) in p.equalities().iter().enumerate() {
                for &(j, a) in &row.terms {
                    grad[j] -= a * dual.equalities[r];
                }
            }
            // a defining row only involves its own variable and ones fixed
            // before it, so later rows are already resolved when we reach it
            for &(r, var) in self.pre.defining.iter().rev() {
                let row = &p.equalities()[r];
                let coef: T = row.terms.iter().filter(|t| t.0 == var).map(|t| t.1).sum();
                if coef == T::zero() {
                    continue;
                }
                let lambda = grad[var] / coef;
                dual.equalities[r] = lambda;
                for &(j, a) in &row.terms {
                    grad[j] -= a * lambda;
                }
            }
        }
        (ybar, dual)
    }
}

/// Largest reduced variable count for which `sigma I + A^T R A` is formed
/// densely and factorised; larger systems use a sparse factorisation.
const DENSE_LIMIT: usize = 256;

/// Rows with more nonzeros than this are kept out of the sparse factor and
/// handled by a low-rank correction.
const DENSE_ROW: usize = 64;

/// Solver for the affine step, refactorised whenever `rho` changes.
enum LinearSystem<T> {
    Dense { factor: Vec<T>, n: usize },
    Sparse(Box<SparseSystem>),
    Iterative { pcg: Pcg<T>, precond: Vec<T> },
}

impl<T: Real> LinearSystem<T> {
    fn new(sc: &Scaled<T>, rho: &[T], sigma: T, previous: Option<Self>) -> Self {
        let n = sc.a.ncols;
        if n <= DENSE_LIMIT {
            let mut k = vec![T::zero(); n * n];
            for i in 0..n {
                k[i * n + i] = sigma;
            }
            for (r, &rr) in rho.iter().enumerate().take(sc.a.nrows) {
                let row: Vec<(usize, T)> = sc.a.row(r).collect();
                for &(p, vp) in &row {
                    let w = rr * vp;
                    for &(q, vq) in &row {
                        if q <= p {
                            k[p * n + q] += w * vq;
                        }
                    }
                }
            }
            if crate::linalg::cholesky_in_place(&mut k, n).is_ok() {
                return Self::Dense { factor: k, n };
            }
        } else {
            let symbolic = match previous {
                Some(Self::Sparse(s)) => Some(s.symbolic),
                _ => None,
            };
            if let Some(s) = SparseSystem::new(sc, rho, sigma, symbolic) {
                return Self::Sparse(Box::new(s));
            }
        }
        let mut diag = vec![sigma; n];
        for i in 0..sc.a.nrows {
            for (j, v) in sc.a.row(i) {
                diag[j] += rho[i] * v * v;
            }
        }
        Self::Iterative {
            pcg: Pcg::new(n),
            precond: diag.iter().map(|&d| T::one() / d).collect(),
        }
    }

    fn solve(&mut self, sc: &Scaled<T>, rho: &[T], sigma: T, rhs: &[T], x: &mut [T], rel_tol: T) {
        match self {
            Self::Dense { factor, n } => {
                x.copy_from_slice(rhs);
                crate::linalg::cholesky_solve(factor, *n, x);
            }
            Self::Sparse(s) => {
                let mut w: Vec<f64> = rhs.iter().map(|v| v.to_f64_lossy()).collect();
                s.solve(&mut w);
                for (xi, wi) in x.iter_mut().zip(w) {
                    *xi = T::lit(wi);
                }
            }
            Self::Iterative { pcg, precond } => {
                pcg.solve(sc, rho, sigma, precond, rhs, x, rel_tol);
            }
        }
    }
}

/// `sigma I + A_s^T R_s A_s + A_d^T R_d A_d` with a sparse Cholesky factor of
/// the first two terms and the dense rows `A_d` folded in through the
/// Woodbury identity. Works in `f64`.
struct SparseSystem {
    symbolic: Arc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
    n: usize,
    /// Dense rows as sparse vectors.
    dense: Vec<Vec<(usize, f64)>>,
    /// `M_s^-1 A_d^T`, column-major `n x d`.
    u: Vec<f64>,
    /// Cholesky factor of `R_d^-1 + A_d M_s^-1 A_d^T`.
    cap: Vec<f64>,
    solve_buf: MemBuffer,
}

impl SparseSystem {
    fn new<T: Real>(sc: &Scaled<T>, rho: &[T], sigma: T, symbolic: Option<Arc<SymbolicCholesky<usize>>>) -> Option<Self> {
        let n = sc.a.ncols;
        let mut entries: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, sigma.to_f64_lossy())).collect();
        let mut dense = Vec::new();
        let mut dense_rho = Vec::new();
        for r in 0..sc.a.nrows {
            let row: Vec<(usize, f64)> = sc.a.row(r).map(|(j, v)| (j, v.to_f64_lossy())).collect();
            let rr = rho[r].to_f64_lossy();
            if row.len() > DENSE_ROW {
                dense.push(row);
                dense_rho.push(rr);
                continue;
            }
            for &(p, vp) in &row {
                for &(q, vq) in &row {
                    if q >= p {
                        // lower triangle in column-major: (row q, col p)
                        entries.push((p, q, rr * vp * vq));
                    }
                }
            }
        }
        entries.sort_unstable_by_key(|&(c, r, _)| (c, r));
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(entries.len());
        for (c, r, v) in entries {
            match triplets.last_mut() {
                Some(t) if t.col == c && t.row == r => t.val += v,
                _ => triplets.push(Triplet::new(r, c, v)),
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets).ok()?;
        let symbolic = match symbolic {
            Some(s) => s,
            None => Arc::new(
                factorize_symbolic_cholesky(mat.symbolic(), Side::Lower, SymmetricOrdering::Amd, Default::default()).ok()?,
            ),
        };
        let mut values = vec![0.0; symbolic.len_val()];
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_llt::<f64>(
                &mut values,
                mat.as_ref(),
                Side::Lower,
                LltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .ok()?;
        let d = dense.len();
        let solve_buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(d.max(1), Par::Seq));
        let mut sys = Self {
            symbolic,
            values,
            n,
            dense,
            u: vec![0.0; n * d],
            cap: Vec::new(),
            solve_buf,
        };
        for (k, row) in sys.dense.iter().enumerate() {
            for &(j, v) in row {
                sys.u[k * n + j] = v;
            }
        }
        if d > 0 {
            let mut u = std::mem::take(&mut sys.u);
            sys.base_solve(&mut u, d);
            sys.u = u;
        }
        let mut cap = vec![0.0; d * d];
        for (a, row) in sys.dense.iter().enumerate() {
            for b in 0..=a {
                cap[a * d + b] = row.iter().map(|&(j, v)| v * sys.u[b * n + j]).sum();
            }
            cap[a * d + a] += 1.0 / dense_rho[a];
        }
        crate::linalg::cholesky_in_place(&mut cap, d).ok()?;
        sys.cap = cap;
        Some(sys)
    }

    /// Solves with the sparse factor for `cols` right-hand sides in place.
    fn base_solve(&mut self, b: &mut [f64], cols: usize) {
        let llt = LltRef::<usize, f64>::new(&self.symbolic, &self.values);
        llt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(b, self.n, cols),
            Par::Seq,
            MemStack::new(&mut self.solve_buf),
        );
    }

    fn solve(&mut self, b: &mut [f64]) {
        self.base_solve(b, 1);
        let d = self.dense.len();
        if d == 0 {
            return;
        }
        let mut t: Vec<f64> = self.dense.iter().map(|row| row.iter().map(|&(j, v)| v * b[j]).sum()).collect();
        crate::linalg::cholesky_solve(&self.cap, d, &mut t);
        for (k, &tk) in t.iter().enumerate() {
            let col = &self.u[k * self.n..(k + 1) * self.n];
            for (bi, &ui) in b.iter_mut().zip(col) {
                *bi -= tk * ui;
            }
        }
    }
}

/// Preconditioned conjugate gradients on `sigma I + A^T R A`.
struct Pcg<T> {
    r: Vec<T>,
    z: Vec<T>,
    p: Vec<T>,
    ap: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Pcg<T> {
    fn new(n: usize) -> Self {
        Self {
            r: vec![T::zero(); n],
            z: vec![T::zero(); n],
            p: vec![T::zero(); n],
            ap: vec![T::zero(); n],
            tmp: Vec::new(),
        }
    }

    fn apply(&mut self, sc: &Scaled<T>, rho: &[T], sigma: T, v: &[T], out: &mut [T]) {
        self.tmp.resize(sc.a.nrows, T::zero());
        sc.a.mul_into(v, &mut self.tmp);
        for (t, &r) in self.tmp.iter_mut().zip(rho) {
            *t *= r;
        }
        sc.at.mul_into(&self.tmp, out);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += sigma * vi;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn solve(&mut self, sc: &Scaled<T>, rho: &[T], sigma: T, minv: &[T], b: &[T], x: &mut [T], rel_tol: T) -> usize {
        let n = b.len();
        if n == 0 {
            return 0;
        }
        let mut ax = std::mem::take(&mut self.ap);
        self.apply(sc, rho, sigma, x, &mut ax);
        self.ap = ax;
        for i in 0..n {
            self.r[i] = b[i] - self.ap[i];
        }
        let bnorm = dot(b, b).sqrt().max(T::lit(1e-30));
        let tol = rel_tol * bnorm;
        let max_it = n.clamp(50, 2000);
        let mut rz = T::zero();
        for i in 0..n {
            self.z[i] = minv[i] * self.r[i];
            self.p[i] = self.z[i];
            rz += self.r[i] * self.z[i];
        }
        let mut it = 0;
        while it < max_it {
            if dot(&self.r, &self.r).sqrt() <= tol {
                break;
            }
            let p = std::mem::take(&mut self.p);
            let mut ap = std::mem::take(&mut self.ap);
            self.apply(sc, rho, sigma, &p, &mut ap);
            self.p = p;
            self.ap = ap;
            let pap = dot(&self.p, &self.ap);
            if pap <= T::zero() {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * self.p[i];
                self.r[i] -= step * self.ap[i];
            }
            let mut rz_new = T::zero();
            for i in 0..n {
                self.z[i] = minv[i] * self.r[i];
                rz_new += self.r[i] * self.z[i];
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                self.p[i] = self.z[i] + beta * self.p[i];
            }
            it += 1;
        }
        it
    }
}
