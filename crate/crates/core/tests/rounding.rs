mod common;

use common::{brute_force_assignment, for_each_labelling, rng};
use rand::Rng;
use radius_kmeans::rounding::{linearize_conflicts, min_feasible_k, solve_assignment, AssignmentProblem, Sense};
use radius_kmeans::{Certificate, ConflictGraph, Dataset, DistanceMatrix, Error, Radius};

fn random_problem(seed: u64) -> AssignmentProblem<f64> {
    let mut r = rng(seed);
    let n = r.random_range(2..=8);
    let k = r.random_range(2..=3);
    let costs: Vec<f64> = (0..n * k).map(|_| r.random_range(-1.0..1.0)).collect();
    let sense = if r.random_bool(0.5) { Sense::Max } else { Sense::Min };
    let p = r.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let mut problem = AssignmentProblem::new(n, k, costs, sense)
        .unwrap()
        .with_conflicts(ConflictGraph::from_edges(n, edges, Radius::Unbounded))
        .unwrap();
    if r.random_bool(0.3) {
        let lo = r.random_range(0..=n / k);
        let hi = r.random_range(lo.max(1)..=n);
        problem = problem.with_bounds(vec![(lo, hi); k]).unwrap();
    }
    problem
}

#[test]
fn matches_exhaustive_search() {
    let mut infeasible = 0;
    for seed in 0..300 {
        let problem = random_problem(seed);
        let oracle = brute_force_assignment(&problem);
        match (solve_assignment(&problem), oracle) {
            (Ok(sol), Some(best)) => {
                assert!(sol.optimal);
                assert!(problem.is_feasible(&sol.labels), "seed {seed}");
                assert!((sol.objective - best).abs() < 1e-9, "seed {seed}: {} vs {best}", sol.objective);
            }
            (Err(Error::Infeasible(_)), None) => infeasible += 1,
            (got, want) => panic!("seed {seed}: {got:?} vs {want:?}"),
        }
    }
    assert!(infeasible < 300);
}

#[test]
fn triangle_needs_three_clusters() {
    let g = ConflictGraph::from_edges(3, vec![(0, 1), (1, 2), (0, 2)], Radius::<f64>::Unbounded);
    let p = AssignmentProblem::new(3, 2, vec![0.0; 6], Sense::Max).unwrap().with_conflicts(g).unwrap();
    match solve_assignment(&p) {
        Err(Error::Infeasible(Certificate::Clique { members })) => assert_eq!(members, vec![0, 1, 2]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unconstrained_is_per_point_argmax() {
    let costs = vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.1, 0.6];
    let p = AssignmentProblem::new(4, 2, costs, Sense::Max).unwrap();
    let sol = solve_assignment(&p).unwrap();
    assert_eq!(sol.labels, vec![0, 1, 0, 1]);
}

#[test]
fn single_conflict_separates_pair() {
    let g = ConflictGraph::from_edges(2, vec![(0, 1)], Radius::<f64>::Unbounded);
    let p = AssignmentProblem::new(2, 2, vec![1.0, 0.0, 1.0, 0.0], Sense::Max)
        .unwrap()
        .with_conflicts(g)
        .unwrap()
        .with_bounds(vec![(0, 2), (0, 2)])
        .unwrap();
    let sol = solve_assignment(&p).unwrap();
    assert_ne!(sol.labels[0], sol.labels[1]);
}

#[test]
fn bounds_certificate() {
    let p = AssignmentProblem::new(3, 2, vec![0.0; 6], Sense::Min)
        .unwrap()
        .with_bounds(vec![(2, 3), (2, 3)])
        .unwrap();
    match solve_assignment(&p) {
        Err(Error::Infeasible(Certificate::Bounds { lower_sum, n, .. })) => assert_eq!((lower_sum, n), (4, 3)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn odd_cycle_without_large_clique() {
    // 5-cycle: clique number 2, chromatic number 3
    let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)];
    let g = ConflictGraph::from_edges(5, edges, Radius::<f64>::Unbounded);
    let p = AssignmentProblem::new(5, 2, vec![0.0; 10], Sense::Min).unwrap().with_conflicts(g).unwrap();
    assert!(matches!(solve_assignment(&p), Err(Error::Infeasible(Certificate::Exhaustive { .. }))));
}

#[test]
fn deterministic() {
    for seed in 0..20 {
        let p = random_problem(seed);
        let a = solve_assignment(&p).ok().map(|s| s.labels);
        let b = solve_assignment(&p).ok().map(|s| s.labels);
        assert_eq!(a, b);
    }
}

#[test]
fn linearization_is_exact_on_binary_assignments() {
    let mut r = rng(99);
    for _ in 0..30 {
        let n = r.random_range(2..=6);
        let k = r.random_range(1..=3);
        let data = common::random_dataset(&mut r, n, 2);
        let d = DistanceMatrix::from_dataset(&data);
        let radius = Radius::new(r.random_range(0.2..1.5)).unwrap();
        let th = radius.threshold().unwrap();
        let pairs = linearize_conflicts(&d, radius);
        for_each_labelling(n, k, |labels| {
            let quadratic = (0..k).all(|c| {
                (0..n).all(|i| (0..n).all(|j| {
                    let pi = f64::from(u8::from(labels[i] == c));
                    let pj = f64::from(u8::from(labels[j] == c));
                    d.get(i, j) * pi * pj <= th
                }))
            });
            let linear = (0..k).all(|c| {
                pairs.iter().all(|&(i, j)| u8::from(labels[i] == c) + u8::from(labels[j] == c) <= 1)
            });
            assert_eq!(quadratic, linear);
        });
    }
}

#[test]
fn no_conflicts_needs_one_cluster() {
    let data = Dataset::from_flat(vec![0.0, 1.0, 2.0], 1, None).unwrap();
    let d = DistanceMatrix::from_dataset(&data);
    let rep = min_feasible_k(&d, Radius::Unbounded, 5).unwrap();
    assert_eq!(rep.k, Some(1));
}

#[test]
fn clique_lower_bounds_min_k() {
    // five points pairwise 10 apart plus close neighbours
    let mut flat = Vec::new();
    for c in 0..5 {
        flat.push(10.0 * c as f64);
        flat.push(10.0 * c as f64 + 0.5);
    }
    let data = Dataset::from_flat(flat, 1, None).unwrap();
    let d = DistanceMatrix::from_dataset(&data);
    let rep = min_feasible_k(&d, Radius::new(1.0).unwrap(), 10).unwrap();
    assert!(rep.k.unwrap() >= 5);
    assert_eq!(rep.k, Some(5));
    let rep = min_feasible_k(&d, Radius::new(1.0).unwrap(), 3).unwrap();
    assert_eq!(rep.k, None);
    assert!(matches!(rep.certificate, Some(Certificate::Clique { .. })));
}

#[test]
fn min_k_is_chromatic_number_on_small_graphs() {
    let mut r = rng(5);
    for _ in 0..40 {
        let n = r.random_range(2..=7);
        let data = common::random_dataset(&mut r, n, 2);
        let d = DistanceMatrix::from_dataset(&data);
        let radius = Radius::new(r.random_range(0.3..1.5)).unwrap();
        let g = ConflictGraph::new(&d, radius);
        let mut chi = n;
        for k in 1..=n {
            let mut ok = false;
            for_each_labelling(n, k, |l| ok |= g.edges().iter().all(|&(i, j)| l[i] != l[j]));
            if ok {
                chi = k;
                break;
            }
        }
        let rep = min_feasible_k(&d, radius, n).unwrap();
        assert_eq!(rep.k, Some(chi));
        let labels = rep.labels.unwrap();
        assert!(g.edges().iter().all(|&(i, j)| labels[i] != labels[j]));
    }
}
