//! Successive-shortest-path min-cost flow with Johnson potentials.
//!
//! Nodes must be created in a topological order of the initial (all-forward)
//! graph; the first potentials then come from a single pass in node order,
//! which lets arcs carry negative costs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    rev: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `u -> v` and returns the arc id. Requires `u < v`.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        debug_assert!(u < v, "arcs must follow the node order");
        let id = self.arcs.len();
        self.arcs.push(Arc { to: v, rev: id + 1, cap, cost });
        self.arcs.push(Arc {
            to: u,
            rev: id,
            cap: 0,
            cost: -cost,
        });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow currently on arc `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.arcs[id + 1].cap
    }

    /// Pushes up to `limit` units from `s` to `t` at minimum cost.
    /// Returns `(flow, cost)`.
    pub fn min_cost_flow(&mut self, s: usize, t: usize, limit: i64) -> (i64, f64) {
        let n = self.adj.len();
        let mut pot = vec![f64::INFINITY; n];
        pot[s] = 0.0;
        for u in 0..n {
            if !pot[u].is_finite() {
                continue;
            }
            for &a in &self.adj[u] {
                let arc = &self.arcs[a];
                if arc.cap > 0 && arc.to > u && pot[u] + arc.cost < pot[arc.to] {
                    pot[arc.to] = pot[u] + arc.cost;
                }
            }
        }
        for p in pot.iter_mut() {
            if !p.is_finite() {
                *p = 0.0;
            }
        }
        let mut flow = 0;
        let mut cost = 0.0;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        while flow < limit {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            prev.iter_mut().for_each(|p| *p = usize::MAX);
            dist[s] = 0.0;
            heap.clear();
            heap.push(Entry(0.0, s));
            while let Some(Entry(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &a in &self.adj[u] {
                    let arc = &self.arcs[a];
                    if arc.cap <= 0 {
                        continue;
                    }
                    // clamp tiny negative reduced costs from rounding
                    let rc = (arc.cost + pot[u] - pot[arc.to]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        prev[arc.to] = a;
                        heap.push(Entry(nd, arc.to));
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for u in 0..n {
                if dist[u].is_finite() {
                    pot[u] += dist[u];
                }
            }
            let mut push = limit - flow;
            let mut v = t;
            while v != s {
                let a = prev[v];
                push = push.min(self.arcs[a].cap);
                v = self.arcs[self.arcs[a].rev].to;
            }
            let mut v = t;
            while v != s {
                let a = prev[v];
                let r = self.arcs[a].rev;
                self.arcs[a].cap -= push;
                self.arcs[r].cap += push;
                cost += push as f64 * self.arcs[a].cost;
                v = self.arcs[r].to;
            }
            flow += push;
        }
        (flow, cost)
    }
}
