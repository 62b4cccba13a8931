//! Exact assignment with size bounds and pairwise exclusions.
//!
//! Best-first branch-and-bound. The bound at a node is a min-cost flow
//! relaxation: every free point sends one unit to an allowed cluster, cluster
//! sizes respect the remaining bounds, and each clique of a fixed clique
//! partition of the conflict graph sends at most one unit into each cluster.
//! The flow is integral, so whenever it happens to respect every conflict it
//! solves the node outright.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::data::{ConflictGraph, DistanceMatrix, Radius};
use crate::error::{input_err, Certificate, Error, Result};
use crate::rounding::flow::FlowGraph;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Max,
    Min,
}

/// Pairwise exclusions `pi_i^k + pi_j^k <= 1` (for every `k`) equivalent on
/// binary assignments to `d_ij pi_i^k pi_j^k <= 4 r^2`: one pair per conflict edge.
pub fn linearize_conflicts<T: Real>(distances: &DistanceMatrix<T>, radius: Radius<T>) -> Vec<(usize, usize)> {
    ConflictGraph::new(distances, radius).edges().to_vec()
}

/// `sum_ik c_ik pi_ik` optimised over one-cluster-per-point assignments with
/// size bounds and conflict exclusions.
#[derive(Debug, Clone)]
pub struct AssignmentProblem<T> {
    n: usize,
    k: usize,
    costs: Vec<T>,
    sense: Sense,
    conflicts: ConflictGraph<T>,
    bounds: Vec<(usize, usize)>,
    incumbent: Option<Vec<usize>>,
    time_limit: Duration,
}

impl<T: Real> AssignmentProblem<T> {
    /// `costs` is row-major `N x K`. Bounds default to `(1, N)`, no conflicts.
    pub fn new(n: usize, k: usize, costs: Vec<T>, sense: Sense) -> Result<Self> {
        if k == 0 {
            return input_err("K must be at least 1");
        }
        if costs.len() != n * k {
            return input_err("cost matrix must be N x K");
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return input_err("costs must be finite");
        }
        Ok(Self {
            n,
            k,
            costs,
            sense,
            conflicts: ConflictGraph::empty(n),
            bounds: vec![(1, n); k],
            incumbent: None,
            time_limit: Duration::from_secs(60),
        })
    }

    pub fn with_conflicts(mut self, conflicts: ConflictGraph<T>) -> Result<Self> {
        if conflicts.len() != self.n {
            return input_err("conflict graph size does not match the number of points");
        }
        self.conflicts = conflicts;
        Ok(self)
    }

    pub fn with_bounds(mut self, bounds: Vec<(usize, usize)>) -> Result<Self> {
        if bounds.len() != self.k {
            return input_err("one (lower, upper) bound per cluster is required");
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// A known assignment used as the starting incumbent when feasible.
    pub fn with_incumbent(mut self, labels: Vec<usize>) -> Self {
        self.incumbent = Some(labels);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cost(&self, i: usize, k: usize) -> T {
        self.costs[i * self.k + k]
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn conflicts(&self) -> &ConflictGraph<T> {
        &self.conflicts
    }

    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn objective(&self, labels: &[usize]) -> T {
        labels.iter().enumerate().map(|(i, &l)| self.cost(i, l)).sum()
    }

    /// Whether `labels` satisfies sizes and exclusions.
    pub fn is_feasible(&self, labels: &[usize]) -> bool {
        if labels.len() != self.n || labels.iter().any(|&l| l >= self.k) {
            return false;
        }
        let mut sizes = vec![0usize; self.k];
        for &l in labels {
            sizes[l] += 1;
        }
        sizes.iter().zip(&self.bounds).all(|(&s, &(lo, hi))| lo <= s && s <= hi)
            && self.conflicts.edges().iter().all(|&(i, j)| labels[i] != labels[j])
    }

    fn bounds_certificate(&self) -> Option<Certificate> {
        let lower_sum: usize = self.bounds.iter().map(|b| b.0).sum();
        let upper_sum: usize = self.bounds.iter().map(|b| b.1).sum();
        let crossed: Vec<usize> = (0..self.k).filter(|&c| self.bounds[c].0 > self.bounds[c].1).collect();
        if lower_sum > self.n || upper_sum < self.n || !crossed.is_empty() {
            let members = if crossed.is_empty() { (0..self.k).collect() } else { crossed };
            return Some(Certificate::Bounds {
                members,
                lower_sum,
                upper_sum,
                n: self.n,
            });
        }
        None
    }
}

/// Search node: a partial assignment with per-point forbidden clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub fixed: Vec<Option<usize>>,
    /// Row-major `N x K`; never set for a point's own fixed cluster.
    pub forbidden: Vec<bool>,
    pub bound: f64,
    pub depth: usize,
}

impl BranchState {
    fn root(n: usize, k: usize) -> Self {
        Self {
            fixed: vec![None; n],
            forbidden: vec![false; n * k],
            bound: f64::NEG_INFINITY,
            depth: 0,
        }
    }

    pub fn is_forbidden(&self, k_total: usize, i: usize, k: usize) -> bool {
        self.forbidden[i * k_total + k]
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AssignmentSolution<T> {
    pub labels: Vec<usize>,
    pub objective: T,
    /// False when the time limit stopped the search first.
    pub optimal: bool,
    pub nodes: usize,
}

/// Solves `problem` exactly, or reports why no assignment exists.
pub fn solve_assignment<T: Real>(problem: &AssignmentProblem<T>) -> Result<AssignmentSolution<T>> {
    if let Some(cert) = problem.bounds_certificate() {
        return Err(Error::Infeasible(cert));
    }
    let clique = problem.conflicts.greedy_clique();
    if clique.len() > problem.k {
        return Err(Error::Infeasible(Certificate::Clique { members: clique }));
    }
    let mut engine = Engine::new(problem);
    let outcome = engine.run();
    match outcome {
        Some((labels, optimal)) => Ok(AssignmentSolution {
            objective: problem.objective(&labels),
            labels,
            optimal,
            nodes: engine.nodes,
        }),
        None if engine.timed_out => Err(Error::Solver {
            message: "time limit reached before any feasible assignment was found".into(),
            iteration: engine.nodes,
            trace: Vec::new(),
        }),
        None => Err(Error::Infeasible(Certificate::Exhaustive {
            members: Vec::new(),
            nodes: engine.nodes,
        })),
    }
}

struct Node {
    bound: f64,
    seq: usize,
    state: BranchState,
    labels: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Engine<'a, T> {
    p: &'a AssignmentProblem<T>,
    n: usize,
    k: usize,
    /// Minimisation costs shifted so each point's cheapest cluster costs 0.
    cost: Vec<f64>,
    big: f64,
    clique_of: Vec<usize>,
    cliques: Vec<Vec<usize>>,
    nodes: usize,
    start: Instant,
    timed_out: bool,
    best: Option<(f64, Vec<usize>)>,
}

impl<'a, T: Real> Engine<'a, T> {
    fn new(p: &'a AssignmentProblem<T>) -> Self {
        let (n, k) = (p.n, p.k);
        let sign = if p.sense == Sense::Max { -1.0 } else { 1.0 };
        let mut cost: Vec<f64> = p.costs.iter().map(|c| sign * c.to_f64_lossy()).collect();
        let mut spread = 0.0;
        for i in 0..n {
            let row = &mut cost[i * k..(i + 1) * k];
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|c| *c -= lo);
            spread += hi - lo;
        }
        let (clique_of, cliques) = clique_partition(&p.conflicts);
        Self {
            p,
            n,
            k,
            cost,
            big: 2.0 * spread + 1.0,
            clique_of,
            cliques,
            nodes: 0,
            start: Instant::now(),
            timed_out: false,
            best: None,
        }
    }

    fn c(&self, i: usize, k: usize) -> f64 {
        self.cost[i * self.k + k]
    }

    fn value(&self, labels: &[usize]) -> f64 {
        labels.iter().enumerate().map(|(i, &l)| self.c(i, l)).sum()
    }

    fn prune_level(&self) -> f64 {
        match &self.best {
            Some((v, _)) => v - 1e-9 * (1.0 + v.abs()),
            None => f64::INFINITY,
        }
    }

    fn offer(&mut self, labels: &[usize]) {
        let v = self.value(labels);
        let better = match &self.best {
            None => true,
            Some((bv, bl)) => v < bv - 1e-12 * (1.0 + bv.abs()) || (v <= *bv && labels < bl.as_slice()),
        };
        if better {
            self.best = Some((v, labels.to_vec()));
        }
    }

    /// Fixes `i -> k` and propagates singletons. False if the node dies.
    fn fix(&self, s: &mut BranchState, i: usize, k: usize) -> bool {
        let kk = self.k;
        if s.forbidden[i * kk + k] {
            return false;
        }
        let mut stack = vec![(i, k)];
        let mut counts = vec![0usize; kk];
        for l in s.fixed.iter().flatten() {
            counts[*l] += 1;
        }
        while let Some((i, k)) = stack.pop() {
            if let Some(l) = s.fixed[i] {
                if l != k {
                    return false;
                }
                continue;
            }
            s.fixed[i] = Some(k);
            counts[k] += 1;
            if counts[k] > self.p.bounds[k].1 {
                return false;
            }
            for &j in self.p.conflicts.neighbors(i) {
                match s.fixed[j] {
                    Some(l) if l == k => return false,
                    Some(_) => {}
                    None => {
                        if !s.forbidden[j * kk + k] {
                            s.forbidden[j * kk + k] = true;
                            let mut open = (0..kk).filter(|&c| !s.forbidden[j * kk + c]);
                            match (open.next(), open.next()) {
                                (None, _) => return false,
                                (Some(only), None) => stack.push((j, only)),
                                _ => {}
                            }
                        }
                    }
                }
            }
        }
        true
    }

    /// Flow bound and the flow's integral labels; `None` if the node is infeasible.
    fn evaluate(&self, s: &BranchState) -> Option<(f64, Vec<usize>)> {
        let (n, k) = (self.n, self.k);
        let mut counts = vec![0usize; k];
        let mut fixed_cost = 0.0;
        for (i, f) in s.fixed.iter().enumerate() {
            if let Some(l) = *f {
                counts[l] += 1;
                fixed_cost += self.c(i, l);
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| s.fixed[i].is_none()).collect();
        let mut lower = vec![0usize; k];
        let mut upper = vec![0usize; k];
        for c in 0..k {
            let (lo, hi) = self.p.bounds[c];
            if counts[c] > hi {
                return None;
            }
            lower[c] = lo.saturating_sub(counts[c]);
            upper[c] = hi - counts[c];
        }
        let mut labels: Vec<usize> = s.fixed.iter().map(|f| f.unwrap_or(usize::MAX)).collect();
        if free.is_empty() {
            return lower.iter().all(|&l| l == 0).then_some((fixed_cost, labels));
        }
        // free members per clique
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.cliques.len()];
        for &i in &free {
            members[self.clique_of[i]].push(i);
        }
        let layered: Vec<usize> = (0..members.len()).filter(|&q| members[q].len() >= 2).collect();
        let m = free.len();
        let point_node = |idx: usize| 1 + idx;
        let clique_base = 1 + m;
        let cluster_base = clique_base + layered.len() * k;
        let sink = cluster_base + k;
        let mut g = FlowGraph::new(sink + 1);
        let mut layer_slot = vec![usize::MAX; members.len()];
        for (slot, &q) in layered.iter().enumerate() {
            layer_slot[q] = slot;
        }
        let mut arcs: Vec<(usize, usize, usize)> = Vec::new();
        for idx in 0..m {
            g.add_arc(0, point_node(idx), 1, 0.0);
        }
        for (idx, &i) in free.iter().enumerate() {
            let slot = layer_slot[self.clique_of[i]];
            for c in 0..k {
                if s.forbidden[i * k + c] {
                    continue;
                }
                let target = if slot == usize::MAX { cluster_base + c } else { clique_base + slot * k + c };
                let a = g.add_arc(point_node(idx), target, 1, self.c(i, c));
                arcs.push((a, i, c));
            }
        }
        for slot in 0..layered.len() {
            for c in 0..k {
                g.add_arc(clique_base + slot * k + c, cluster_base + c, 1, 0.0);
            }
        }
        let mut lower_arcs = Vec::new();
        let mut need = 0usize;
        for c in 0..k {
            if lower[c] > 0 {
                lower_arcs.push((g.add_arc(cluster_base + c, sink, lower[c] as i64, -self.big), lower[c]));
                need += lower[c];
            }
            if upper[c] > lower[c] {
                g.add_arc(cluster_base + c, sink, (upper[c] - lower[c]) as i64, 0.0);
            }
        }
        let (flow, cost) = g.min_cost_flow(0, sink, m as i64);
        if flow < m as i64 || lower_arcs.iter().any(|&(a, l)| g.flow(a) < l as i64) {
            return None;
        }
        for (a, i, c) in arcs {
            if g.flow(a) > 0 {
                labels[i] = c;
            }
        }
        let bound = fixed_cost + cost + self.big * need as f64;
        Some((bound, labels))
    }

    fn first_violation(&self, s: &BranchState, labels: &[usize]) -> Option<usize> {
        let k = self.k;
        let mut pick: Option<(usize, usize)> = None;
        for &(i, j) in self.p.conflicts.edges() {
            if labels[i] != labels[j] {
                continue;
            }
            for v in [i, j] {
                if s.fixed[v].is_some() {
                    continue;
                }
                let open = (0..k).filter(|&c| !s.forbidden[v * k + c]).count();
                if pick.is_none_or(|(po, pv)| open < po || (open == po && v < pv)) {
                    pick = Some((open, v));
                }
            }
        }
        pick.map(|p| p.1)
    }

    fn children(&self, s: &BranchState, i: usize) -> Vec<BranchState> {
        let k = self.k;
        let mut order: Vec<usize> = (0..k).filter(|&c| !s.forbidden[i * k + c]).collect();
        order.sort_by(|&a, &b| self.c(i, a).total_cmp(&self.c(i, b)).then(a.cmp(&b)));
        order
            .into_iter()
            .filter_map(|c| {
                let mut child = s.clone();
                child.depth += 1;
                self.fix(&mut child, i, c).then_some(child)
            })
            .collect()
    }

    fn out_of_time(&mut self) -> bool {
        if self.nodes.is_multiple_of(16) && self.start.elapsed() > self.p.time_limit {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Depth-first plunge for a first incumbent, bounded in nodes.
    fn dive(&mut self, s: BranchState, budget: &mut usize) {
        if *budget == 0 || self.out_of_time() {
            return;
        }
        *budget -= 1;
        self.nodes += 1;
        let Some((bound, labels)) = self.evaluate(&s) else { return };
        if bound >= self.prune_level() {
            return;
        }
        match self.first_violation(&s, &labels) {
            None => self.offer(&labels),
            Some(i) => {
                for child in self.children(&s, i) {
                    self.dive(child, budget);
                    if self.best.is_some() {
                        return;
                    }
                }
            }
        }
    }

    fn run(&mut self) -> Option<(Vec<usize>, bool)> {
        let (n, k) = (self.n, self.k);
        if let Some(inc) = &self.p.incumbent {
            if self.p.is_feasible(inc) {
                let inc = inc.clone();
                self.offer(&inc);
            }
        }
        let mut root = BranchState::root(n, k);
        let Some((bound, labels)) = self.evaluate(&root) else {
            return self.best.take().map(|b| (b.1, true));
        };
        root.bound = bound;
        if self.first_violation(&root, &labels).is_none() {
            self.nodes += 1;
            self.offer(&labels);
            return self.best.take().map(|b| (b.1, true));
        }
        if self.best.is_none() {
            let mut budget = 20 * n + 100;
            self.dive(root.clone(), &mut budget);
        }
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        heap.push(Node {
            bound,
            seq,
            state: root,
            labels,
        });
        while let Some(node) = heap.pop() {
            if node.bound >= self.prune_level() {
                break;
            }
            self.nodes += 1;
            if self.out_of_time() {
                return self.best.take().map(|b| (b.1, false));
            }
            let Some(i) = self.first_violation(&node.state, &node.labels) else {
                self.offer(&node.labels);
                continue;
            };
            for mut child in self.children(&node.state, i) {
                let Some((b, labels)) = self.evaluate(&child) else { continue };
                if b >= self.prune_level() {
                    continue;
                }
                if self.first_violation(&child, &labels).is_none() {
                    self.offer(&labels);
                    continue;
                }
                child.bound = b;
                seq += 1;
                heap.push(Node {
                    bound: b,
                    seq,
                    state: child,
                    labels,
                });
            }
        }
        self.best.take().map(|b| (b.1, true))
    }
}

/// Greedy partition of the vertices into cliques of the conflict graph,
/// largest-degree vertices first. Returns the clique index of each vertex.
fn clique_partition<T: Real>(g: &ConflictGraph<T>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = g.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.neighbors(b).len().cmp(&g.neighbors(a).len()).then(a.cmp(&b)));
    let mut clique_of = vec![usize::MAX; n];
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for &v in &order {
        if clique_of[v] != usize::MAX {
            continue;
        }
        let id = cliques.len();
        let mut members = vec![v];
        clique_of[v] = id;
        let mut cand: Vec<usize> = g.neighbors(v).iter().copied().filter(|&w| clique_of[w] == usize::MAX).collect();
        while !cand.is_empty() {
            let (pick, _) = cand
                .iter()
                .map(|&w| (w, cand.iter().filter(|&&x| g.conflicts(w, x)).count()))
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty");
            members.push(pick);
            clique_of[pick] = id;
            cand.retain(|&w| w != pick && g.conflicts(pick, w));
        }
        cliques.push(members);
    }
    (clique_of, cliques)
}
