//! Standard-form conic programs over a flat variable vector.
//!
//! ```text
//! minimise    c^T v + offset
//! subject to  E v  = f
//!             G v <= h
//!             v[S] in K_S   for every cone membership (S, K_S)
//! ```
//!
//! A PSD membership of order `n` lists `n (n + 1) / 2` variable indices, the
//! upper triangle of a symmetric matrix in row-major order
//! `(0,0), (0,1), ..., (0,n-1), (1,1), ..., (n-1,n-1)`. Each variable holds the
//! plain matrix entry (no `sqrt 2` scaling).

use std::io::Write;

use crate::error::{input_err, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Nonnegative,
    Psd { order: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeMembership {
    pub kind: ConeKind,
    pub indices: Vec<usize>,
}

/// One sparse linear constraint row `sum coef * v[var] (= or <=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow<T> {
    pub terms: Vec<(usize, T)>,
    pub rhs: T,
}

/// Named contiguous range of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Matrix order when the block is the svec of a symmetric matrix.
    pub psd_order: Option<usize>,
}

impl VarBlock {
    /// Variable index of entry `(i, j)` of a symmetric-matrix block.
    pub fn entry(&self, i: usize, j: usize) -> usize {
        let n = self.psd_order.expect("block is not a symmetric matrix");
        self.offset + svec_index(n, i, j)
    }
}

/// Position of `(i, j)` in the row-major upper-triangle ordering of an order-`n` matrix.
#[inline]
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Matrix coordinates of every svec position, in order.
pub fn svec_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T> {
    num_vars: usize,
    objective: Vec<T>,
    objective_offset: T,
    equalities: Vec<SparseRow<T>>,
    inequalities: Vec<SparseRow<T>>,
    cones: Vec<ConeMembership>,
    blocks: Vec<VarBlock>,
}

impl<T: Real> Default for ConicProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ConicProgram<T> {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: Vec::new(),
            objective_offset: T::zero(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Appends `len` free variables under `name` and returns the block.
    pub fn add_block(&mut self, name: impl Into<String>, len: usize) -> VarBlock {
        let block = VarBlock {
            name: name.into(),
            offset: self.num_vars,
            len,
            psd_order: None,
        };
        self.num_vars += len;
        self.objective.resize(self.num_vars, T::zero());
        self.blocks.push(block.clone());
        block
    }

    /// Appends the svec of an order-`order` symmetric matrix constrained to be PSD.
    pub fn add_psd_block(&mut self, name: impl Into<String>, order: usize) -> VarBlock {
        let len = order * (order + 1) / 2;
        let mut block = self.add_block(name, len);
        block.psd_order = Some(order);
        self.blocks.last_mut().expect("just pushed").psd_order = Some(order);
        self.cones.push(ConeMembership {
            kind: ConeKind::Psd { order },
            indices: (block.offset..block.offset + len).collect(),
        });
        block
    }

    pub fn set_objective(&mut self, var: usize, coef: T) {
        self.objective[var] = coef;
    }

    pub fn add_objective(&mut self, var: usize, coef: T) {
        self.objective[var] += coef;
    }

    pub fn set_objective_offset(&mut self, offset: T) {
        self.objective_offset = offset;
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, T)>, rhs: T) {
        self.equalities.push(SparseRow { terms, rhs });
    }

    pub fn add_inequality(&mut self, terms: Vec<(usize, T)>, rhs: T) {
        self.inequalities.push(SparseRow { terms, rhs });
    }

    pub fn add_nonnegative(&mut self, indices: Vec<usize>) {
        if !indices.is_empty() {
            self.cones.push(ConeMembership {
                kind: ConeKind::Nonnegative,
                indices,
            });
        }
    }

    pub fn add_cone(&mut self, cone: ConeMembership) {
        self.cones.push(cone);
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn objective_offset(&self) -> T {
        self.objective_offset
    }

    pub fn equalities(&self) -> &[SparseRow<T>] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[SparseRow<T>] {
        &self.inequalities
    }

    pub fn cones(&self) -> &[ConeMembership] {
        &self.cones
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn psd_orders(&self) -> Vec<usize> {
        self.cones
            .iter()
            .filter_map(|c| match c.kind {
                ConeKind::Psd { order } => Some(order),
                ConeKind::Nonnegative => None,
            })
            .collect()
    }

    /// Evaluates the objective at `v`.
    pub fn objective_value(&self, v: &[T]) -> T {
        self.objective.iter().zip(v).map(|(&c, &x)| c * x).sum::<T>() + self.objective_offset
    }

    /// Largest violation of the linear rows at `v` (equalities in absolute value,
    /// inequalities by their positive part).
    pub fn linear_violation(&self, v: &[T]) -> T {
        let eval = |r: &SparseRow<T>| r.terms.iter().map(|&(j, a)| a * v[j]).sum::<T>() - r.rhs;
        let eq = self.equalities.iter().map(|r| eval(r).abs()).fold(T::zero(), T::max);
        let ineq = self.inequalities.iter().map(|r| eval(r).max(T::zero())).fold(T::zero(), T::max);
        eq.max(ineq)
    }

    /// Checks index ranges, PSD membership sizes and PSD disjointness.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let rows = self.equalities.iter().chain(&self.inequalities);
        for (r, row) in rows.enumerate() {
            if row.terms.iter().any(|&(j, a)| j >= n || !a.is_finite()) || !row.rhs.is_finite() {
                return input_err(format!("constraint row {r} is malformed"));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return input_err("objective has non-finite coefficients");
        }
        let mut in_psd = vec![false; n];
        for (c, cone) in self.cones.iter().enumerate() {
            if cone.indices.iter().any(|&j| j >= n) {
                return input_err(format!("cone {c} references a missing variable"));
            }
            if let ConeKind::Psd { order } = cone.kind {
                if cone.indices.len() != order * (order + 1) / 2 {
                    return input_err(format!("PSD cone {c} has wrong index count"));
                }
                for &j in &cone.indices {
                    if in_psd[j] {
                        return input_err(format!("variable {j} is in two PSD cones"));
                    }
                    in_psd[j] = true;
                }
            }
        }
        Ok(())
    }

    /// Writes the program as sparse triplets, one nonzero per line:
    /// `matrix row col value` with matrices `c`, `A`, `b`, `G`, `h`. Cone
    /// memberships follow as `K <cone> <kind> <order> <var>` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# vars {} eq {} ineq {} cones {}", self.num_vars, self.equalities.len(), self.inequalities.len(), self.cones.len())?;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != T::zero() {
                writeln!(w, "c 0 {j} {c:e}")?;
            }
        }
        for (name, rhs_name, rows) in [("A", "b", &self.equalities), ("G", "h", &self.inequalities)] {
            for (r, row) in rows.iter().enumerate() {
                for &(j, a) in &row.terms {
                    writeln!(w, "{name} {r} {j} {a:e}")?;
                }
                if row.rhs != T::zero() {
                    writeln!(w, "{rhs_name} {r} 0 {:e}", row.rhs)?;
                }
            }
        }
        for (c, cone) in self.cones.iter().enumerate() {
            let (kind, order) = match cone.kind {
                ConeKind::Nonnegative => ("nonneg", 0),
                ConeKind::Psd { order } => ("psd", order),
            };
            for &j in &cone.indices {
                writeln!(w, "K {c} {kind} {order} {j}")?;
            }
        }
        Ok(())
    }
}
