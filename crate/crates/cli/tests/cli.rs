use std::path::Path;
use std::process::{Command, Output};

use radius_kmeans::{Assignment, ConflictGraph, Dataset, DistanceMatrix, MetricsReport, Radius};
use serde_json::Value;
use tempfile::TempDir;

fn rkm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkm")).args(args).output().expect("run rkm")
}

fn ok(args: &[&str]) -> Output {
    let out = rkm(args);
    assert!(out.status.success(), "rkm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = path(dir, name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Drops timing fields, the only output that varies between identical runs.
fn strip_timing(mut v: Value) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("wall_time_s");
        if let Some(s) = o.get_mut("solver").and_then(Value::as_object_mut) {
            s.remove("seconds");
        }
    }
    v
}

#[test]
fn gen_two_moons_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    for p in [&a, &b] {
        ok(&["gen", "two-moons", "--n", "100", "--imbalance", "0.85", "--seed", "7", "--output", p]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x0,x1,label");
    assert_eq!(lines.len(), 101);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",convex")).count(), 15);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",concave")).count(), 85);
}

#[test]
fn gen_triple_uniform_to_stdout() {
    let out = ok(&["gen", "triple-uniform", "--seed", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 103);
    assert_eq!(text, String::from_utf8(ok(&["gen", "triple-uniform", "--seed", "1"]).stdout).unwrap());
}

#[test]
fn bad_generator_flags_fail() {
    let out = rkm(&["gen", "two-moons", "--imbalance", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rkm(&["gen", "two-moons", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn run_radius_on_separated_groups() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "d.csv", "x0,label\n0.0,a\n0.2,a\n0.3,a\n5.0,b\n5.1,b\n10.0,c\n10.4,c\n");
    let points = path(&dir, "points.csv");
    let out = ok(&["run", "--method", "radius", "--k", "3", "--r", "0.5", "--input", &input, "--emit-points", &points]);
    let v = json(&out);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["metrics"]["feasible"], true);
    assert_eq!(v["metrics"]["region_counts"], serde_json::json!({"a": 1, "b": 1, "c": 1}));
    assert!(v["metrics"]["max_partition_radius"].as_f64().unwrap() <= 0.5);
    let lb = v["lower_bound"].as_f64().unwrap();
    assert!(lb <= v["metrics"]["objective"].as_f64().unwrap() + 1e-6);
    assert_eq!(v["solver"]["status"], "optimal");
    let plot = std::fs::read_to_string(points).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "point_id,x0,cluster,centroid_x0");
    assert_eq!(plot.lines().count(), 8);
}

#[test]
fn run_output_round_trips_through_metrics() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "m.csv");
    ok(&["gen", "two-moons", "--n", "30", "--seed", "3", "--output", &input]);
    for method in ["kmeans", "kmedoids", "kcenter", "cardinality"] {
        let out = ok(&["run", "--method", method, "--k", "4", "--r", "0.8", "--seed", "2", "--input", &input]);
        let v = json(&out);
        let data = Dataset::<f64>::load_csv(Path::new(&input)).unwrap();
        let labels: Vec<usize> = serde_json::from_value(v["labels"].clone()).unwrap();
        let a = Assignment::from_labels(&data, labels, 4).unwrap();
        let d = DistanceMatrix::from_dataset(&data);
        let g = ConflictGraph::new(&d, Radius::new(0.8).unwrap());
        let m = MetricsReport::evaluate(&data, &d, &a, Some(&g), None).unwrap();
        assert_close(&serde_json::to_value(&m).unwrap(), &v["metrics"], method);
    }
}

/// Equal JSON, with numbers compared to a relative 1e-12 (summation order may differ).
fn assert_close(a: &Value, b: &Value, ctx: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{ctx}: {x} vs {y}");
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{ctx}");
            for (k, v) in x {
                assert_close(v, &y[k], ctx);
            }
        }
        _ => assert_eq!(a, b, "{ctx}"),
    }
}

#[test]
fn run_is_reproducible_apart_from_timing() {
    let args = ["run", "--method", "radius", "--k", "3", "--r", "1", "--input", "triple-uniform:counts=6/4/4,seed=2"];
    let a = strip_timing(json(&ok(&args)));
    let b = strip_timing(json(&ok(&args)));
    assert_eq!(a, b);
    assert_eq!(a["n"], 14);
}

#[test]
fn infinite_radius_matches_unconstrained_quality() {
    let out = ok(&["run", "--method", "radius", "--k", "2", "--r", "inf", "--input", "triple-uniform:counts=5/1/5,seed=4"]);
    let v = json(&out);
    assert_eq!(v["r"], "inf");
    assert_eq!(v["metrics"]["feasible"], true);
    let radius_cost = v["metrics"]["objective"].as_f64().unwrap();
    let lloyd = json(&ok(&["run", "--method", "kmeans", "--k", "2", "--input", "triple-uniform:counts=5/1/5,seed=4"]));
    let lloyd_cost = lloyd["metrics"]["objective"].as_f64().unwrap();
    assert!(radius_cost <= lloyd_cost * 1.05 + 1e-9, "{radius_cost} vs {lloyd_cost}");
}

#[test]
fn infeasible_radius_exits_with_certificate() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "far.csv", "x0\n0\n10\n20\n");
    let out = rkm(&["run", "--method", "radius", "--k", "2", "--r", "1", "--input", &input]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["status"], "infeasible");
    assert_eq!(v["certificate"]["type"], "clique");
    assert_eq!(v["certificate"]["members"].as_array().unwrap().len(), 3);
}

#[test]
fn cardinality_bounds_flag_and_infeasible_bounds() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "p.csv", "x0\n0\n1\n10\n11\n");
    let v = json(&ok(&["run", "--method", "cardinality", "--k", "2", "--bounds", "2:2", "--input", &input]));
    let labels: Vec<usize> = serde_json::from_value(v["labels"].clone()).unwrap();
    assert_eq!(labels[0], labels[1]);
    assert_eq!(labels[2], labels[3]);
    assert_ne!(labels[0], labels[2]);
    let out = rkm(&["run", "--method", "cardinality", "--k", "2", "--bounds", "3:4", "--input", &input]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["certificate"]["type"], "bounds");
}

#[test]
fn usage_errors_exit_one() {
    let out = rkm(&["run", "--method", "radius", "--k", "2", "--input", "triple-uniform"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rkm(&["run", "--method", "kmeans", "--k", "2", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_single_seed_aggregate_equals_run() {
    let v = json(&ok(&["eval", "--method", "kmeans,kcenter", "--k", "3", "--seeds", "4..5", "--input", "two-moons:n=40"]));
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    for (i, agg) in v["aggregate"].as_array().unwrap().iter().enumerate() {
        let run = &v["runs"][i]["metrics"];
        assert_eq!(agg["metrics"]["objective"]["mean"], run["objective"]);
        assert_eq!(agg["metrics"]["objective"]["std"].as_f64(), Some(0.0));
    }
}

#[test]
fn eval_radius_on_fixed_data_has_no_variance() {
    let out = ok(&[
        "eval", "--method", "radius", "--k", "3", "--r", "1", "--seeds", "3", "--input", "triple-uniform:counts=5/4/4,seed=1",
        "--format", "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("method,seed,status,objective,max_partition_radius,max_k_radius,lower_bound,feasible"));
    assert_eq!(lines.len(), 1 + 3 + 2);
    let std_row: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(&std_row[..3], &["radius", "std", "aggregate"]);
    for cell in &std_row[3..] {
        assert!(cell.is_empty() || cell.parse::<f64>().unwrap() == 0.0, "{}", lines[5]);
    }
}

#[test]
fn eval_records_failures_without_stopping() {
    let v = json(&ok(&["eval", "--method", "radius", "--k", "2", "--r", "0.2", "--seeds", "2", "--input", "triple-uniform:counts=2/2/2"]));
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| r["status"] == "infeasible"));
    assert_eq!(v["aggregate"][0]["infeasible"], 2);
}

#[test]
fn feastest_reports_minimal_k() {
    let v = json(&ok(&["feastest", "--input", "triple-uniform:counts=3/3/3", "--r", "inf"]));
    assert_eq!(v["k"], 1);
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "line.csv", "x0\n0\n10\n20\n30\n");
    let v = json(&ok(&["feastest", "--input", &input, "--r", "1"]));
    assert_eq!(v["k"], 4);
    assert_eq!(v["clique_bound"], 4);
    let out = rkm(&["feastest", "--input", &input, "--r", "1", "--k", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["certificate"]["type"], "clique");
}
