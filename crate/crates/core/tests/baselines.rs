use radius_kmeans::baselines::{
    cardinality_constrained_kmeans, kcenter_greedy, kmedoids, lloyd_kmeans, BaselineConfig, Clustering, Init,
};
use radius_kmeans::metrics::kmeans_objective;
use radius_kmeans::{make_1d_triple_uniform, Dataset, Error};
use rand::Rng;

mod common;

fn line(xs: &[f64]) -> Dataset<f64> {
    Dataset::from_flat(xs.to_vec(), 1, None).unwrap()
}

fn sorted_members(c: &Clustering<f64>) -> Vec<Vec<usize>> {
    let mut m = c.assignment.members();
    m.sort();
    m
}

fn assert_non_increasing(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{trace:?}");
    }
}

#[test]
fn lloyd_recovers_separated_pairs() {
    let data = line(&[0.0, 1.0, 20.0, 21.0]);
    for seed in 0..10 {
        let run = lloyd_kmeans(&data, &BaselineConfig::new(2, seed)).unwrap();
        assert_eq!(sorted_members(&run), vec![vec![0, 1], vec![2, 3]]);
        assert!((run.objective() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_cluster_per_point_costs_nothing() {
    let mut rng = common::rng(1);
    let data = common::random_dataset(&mut rng, 9, 2);
    let cfg = BaselineConfig::new(9, 4);
    assert!(lloyd_kmeans(&data, &cfg).unwrap().objective().abs() < 1e-12);
    let med = kmedoids(&data, &cfg).unwrap();
    assert!(med.objective().abs() < 1e-12);
    let mut medoids = med.medoids.unwrap();
    medoids.sort_unstable();
    assert_eq!(medoids, (0..9).collect::<Vec<_>>());
}

#[test]
fn descent_methods_never_increase_their_objective() {
    let mut rng = common::rng(2);
    for seed in 0..20 {
        let n = rng.random_range(10..40);
        let data = common::random_dataset(&mut rng, n, 2);
        for init in [Init::RandomPoints, Init::KMeansPlusPlus] {
            let cfg = BaselineConfig {
                init,
                ..BaselineConfig::new(rng.random_range(2..6), seed)
            };
            for run in [lloyd_kmeans(&data, &cfg).unwrap(), kmedoids(&data, &cfg).unwrap()] {
                assert_non_increasing(&run.objective_trace);
                assert!(run.assignment.is_valid());
                assert!(run.assignment.sizes().iter().all(|&s| s >= 1));
            }
            let lloyd = lloyd_kmeans(&data, &cfg).unwrap();
            let direct = kmeans_objective(&data, &lloyd.assignment).unwrap();
            assert!((lloyd.objective() - direct).abs() <= 1e-9 * (1.0 + direct));
        }
    }
}

#[test]
fn medoids_on_collinear_points() {
    let data = line(&[0.0, 1.0, 10.0]);
    for seed in 0..10 {
        let run = kmedoids(&data, &BaselineConfig::new(2, seed)).unwrap();
        let mut m = run.medoids.unwrap();
        m.sort_unstable();
        assert!(m == vec![0, 2] || m == vec![1, 2], "{m:?}");
    }
}

#[test]
fn kcenter_takes_both_points() {
    let data = line(&[0.0, 10.0]);
    let run = kcenter_greedy(&data, &BaselineConfig::new(2, 3)).unwrap();
    let mut m = run.medoids.unwrap();
    m.sort_unstable();
    assert_eq!(m, vec![0, 1]);
}

#[test]
fn kcenter_follows_farthest_first() {
    let data = line(&[0.0, 1.0, 5.0, 12.0, 13.0]);
    for seed in 0..10 {
        let run = kcenter_greedy(&data, &BaselineConfig::new(3, seed)).unwrap();
        let centers = run.medoids.unwrap();
        for t in 1..centers.len() {
            let dist = |i: usize| centers[..t].iter().map(|&c| (data.point(i)[0] - data.point(c)[0]).abs()).fold(f64::INFINITY, f64::min);
            let far = (0..data.len()).map(dist).fold(0.0, f64::max);
            assert_eq!(dist(centers[t]), far);
        }
    }
}

/// Optimal discrete k-center radius by enumerating every center set.
fn best_kcenter_radius(data: &Dataset<f64>, k: usize) -> f64 {
    let n = data.len();
    let dist = |a: usize, b: usize| {
        data.point(a)
            .iter()
            .zip(data.point(b))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let centers: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let r = (0..n)
            .map(|i| centers.iter().map(|&c| dist(i, c)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        best = best.min(r);
    }
    best
}

#[test]
fn kcenter_is_a_two_approximation() {
    let mut rng = common::rng(6);
    for seed in 0..60 {
        let n = rng.random_range(3..11);
        let k = rng.random_range(1..4.min(n));
        let data = common::random_dataset(&mut rng, n, 2);
        let run = kcenter_greedy(&data, &BaselineConfig::new(k, seed)).unwrap();
        let opt = best_kcenter_radius(&data, k);
        assert!(run.objective() <= 2.0 * opt + 1e-12, "{} > 2 * {opt}", run.objective());
    }
}

#[test]
fn cardinality_with_loose_bounds_is_lloyd_like() {
    let mut rng = common::rng(9);
    for seed in 0..10 {
        let data = common::random_dataset(&mut rng, 15, 2);
        let cfg = BaselineConfig::new(3, seed).with_bounds(vec![(1, 15); 3]);
        let run = cardinality_constrained_kmeans(&data, &cfg).unwrap();
        assert_non_increasing(&run.objective_trace);
        assert!(run.assignment.sizes().iter().all(|&s| s >= 1));
        // at a fixed point every point sits at its nearest centroid
        let a = &run.assignment;
        for i in 0..data.len() {
            let own = sq(data.point(i), a.centroid(a.labels()[i]));
            assert!(a.centroids().all(|c| own <= sq(data.point(i), c) + 1e-12));
        }
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[test]
fn cardinality_forced_balance() {
    let data = line(&[0.0, 1.0, 10.0, 11.0]);
    let run = cardinality_constrained_kmeans(&data, &BaselineConfig::new(2, 0).with_bounds(vec![(2, 2); 2])).unwrap();
    assert_eq!(sorted_members(&run), vec![vec![0, 1], vec![2, 3]]);
}

#[test]
fn cardinality_upper_bound_is_respected_on_triple_uniform() {
    for seed in 0..5 {
        let data = make_1d_triple_uniform::<f64>([51, 26, 25], seed).unwrap();
        let run = cardinality_constrained_kmeans(&data, &BaselineConfig::new(3, seed).with_bounds(vec![(1, 55); 3])).unwrap();
        assert!(run.assignment.sizes().iter().all(|&s| (1..=55).contains(&s)), "seed {seed}");
    }
}

#[test]
fn cardinality_aligns_gapped_intervals() {
    // Same counts as the triple-uniform data, but with gaps between intervals.
    let mut rng = common::rng(5);
    let mut xs = Vec::new();
    for (count, lo) in [(51, -4.0), (26, -1.0), (25, 2.0)] {
        xs.extend((0..count).map(|_| lo + 2.0 * rng.random::<f64>()));
    }
    let data = line(&xs);
    for seed in 0..5 {
        let run = cardinality_constrained_kmeans(&data, &BaselineConfig::new(3, seed).with_bounds(vec![(1, 55); 3])).unwrap();
        let mut sizes = run.assignment.sizes().to_vec();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![25, 26, 51], "seed {seed}");
        for m in run.assignment.members() {
            let lo = m.iter().map(|&i| xs[i]).fold(f64::INFINITY, f64::min);
            let hi = m.iter().map(|&i| xs[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= 2.0, "seed {seed}");
        }
    }
}

#[test]
fn infeasible_bounds_are_reported() {
    let data = line(&[0.0, 1.0, 2.0, 3.0]);
    let err = cardinality_constrained_kmeans(&data, &BaselineConfig::new(2, 0).with_bounds(vec![(3, 4); 2])).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err:?}");
}

#[test]
fn too_many_clusters_is_an_input_error() {
    let data = line(&[0.0, 1.0]);
    let cfg = BaselineConfig::new(3, 0);
    assert!(matches!(lloyd_kmeans(&data, &cfg), Err(Error::Input(_))));
    assert!(matches!(kmedoids(&data, &cfg), Err(Error::Input(_))));
    assert!(matches!(kcenter_greedy(&data, &cfg), Err(Error::Input(_))));
    assert!(matches!(cardinality_constrained_kmeans(&data, &cfg), Err(Error::Input(_))));
}

#[test]
fn seeds_are_reproducible() {
    let mut rng = common::rng(12);
    let data = common::random_dataset(&mut rng, 30, 3);
    let cfg = BaselineConfig::new(4, 77);
    assert_eq!(lloyd_kmeans(&data, &cfg).unwrap().assignment, lloyd_kmeans(&data, &cfg).unwrap().assignment);
    assert_eq!(kmedoids(&data, &cfg).unwrap().medoids, kmedoids(&data, &cfg).unwrap().medoids);
}
