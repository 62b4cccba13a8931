use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use radius_kmeans::{Assignment64, Certificate, Dataset64, MetricsReport64};
use serde::{Serialize, Serializer};

use crate::args::{InitMode, Method};
use crate::commands::mean_std;

/// Writes to `path`, or stdout when absent.
pub fn write(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// A radius that serialises `inf` as the string `"inf"`.
#[derive(Debug, Clone, Copy)]
pub struct RadiusValue(pub f64);

impl Serialize for RadiusValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverStats {
    pub status: String,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub reduced_vars: usize,
    pub reduced_rows: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundingStats {
    pub optimal: bool,
    pub score_step_objective: f64,
    pub assignment_objective: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub status: &'static str,
    pub method: Method,
    pub k: usize,
    pub r: Option<RadiusValue>,
    pub init: Option<InitMode>,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub labels: Option<Vec<usize>>,
    pub centroids: Option<Vec<Vec<f64>>>,
    pub metrics: Option<MetricsReport64>,
    pub lower_bound: Option<f64>,
    pub solver: Option<SolverStats>,
    pub rounding: Option<RoundingStats>,
    pub certificate: Option<Certificate>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalRow {
    pub method: Method,
    pub seed: u64,
    pub status: String,
    pub metrics: Option<MetricsReport64>,
    pub certificate: Option<Certificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub runs: usize,
    pub ok: usize,
    pub infeasible: usize,
    pub errors: usize,
    /// Keyed by metric name; region counts appear as `region:<tag>`.
    pub metrics: BTreeMap<String, MeanStd>,
}

impl Aggregate {
    pub fn from_rows<'a>(method: Method, rows: impl Iterator<Item = &'a EvalRow>) -> Self {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let (mut runs, mut ok, mut infeasible, mut errors) = (0, 0, 0, 0);
        for row in rows {
            runs += 1;
            match row.status.as_str() {
                "ok" => ok += 1,
                "infeasible" => infeasible += 1,
                _ => errors += 1,
            }
            let Some(m) = &row.metrics else { continue };
            for (key, v) in metric_values(m) {
                values.entry(key).or_default().push(v);
            }
        }
        let metrics = values
            .into_iter()
            .map(|(k, xs)| {
                let (mean, std) = mean_std(&xs);
                (k, MeanStd { mean, std })
            })
            .collect();
        Self {
            method,
            runs,
            ok,
            infeasible,
            errors,
            metrics,
        }
    }
}

fn metric_values(m: &MetricsReport64) -> Vec<(String, f64)> {
    let mut out = vec![
        ("objective".to_string(), m.objective),
        ("max_partition_radius".to_string(), m.max_partition_radius),
        ("max_k_radius".to_string(), m.max_k_radius),
        ("feasible".to_string(), if m.feasible { 1.0 } else { 0.0 }),
    ];
    if let Some(lb) = m.lower_bound {
        out.push(("lower_bound".to_string(), lb));
    }
    for (tag, &c) in &m.region_counts {
        out.push((format!("region:{tag}"), c as f64));
    }
    out
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub methods: Vec<Method>,
    pub k: usize,
    pub r: Option<RadiusValue>,
    pub seeds: Vec<u64>,
    pub runs: Vec<EvalRow>,
    pub aggregate: Vec<Aggregate>,
}

fn cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn region_tags<'a>(metrics: impl Iterator<Item = &'a MetricsReport64>) -> Vec<String> {
    let mut tags: Vec<String> = metrics.flat_map(|m| m.region_counts.keys().cloned()).collect();
    tags.sort();
    tags.dedup();
    tags
}

const METRIC_HEADER: &str = "objective,max_partition_radius,max_k_radius,lower_bound,feasible";

fn metric_cells(m: Option<&MetricsReport64>, tags: &[String]) -> String {
    let Some(m) = m else {
        return ",".repeat(4 + tags.len());
    };
    let mut s = format!(
        "{},{},{},{},{}",
        m.objective,
        m.max_partition_radius,
        m.max_k_radius,
        opt(m.lower_bound),
        m.feasible
    );
    for t in tags {
        let _ = write!(s, ",{}", m.region_counts.get(t).copied().unwrap_or(0));
    }
    s
}

fn tag_header(tags: &[String]) -> String {
    tags.iter().map(|t| format!(",{}", cell(&format!("region:{t}")))).collect()
}

/// One header line and one row.
pub fn run_csv(r: &RunReport) -> String {
    let tags = region_tags(r.metrics.iter());
    let mut s = format!("method,seed,status,{METRIC_HEADER}{}\n", tag_header(&tags));
    let _ = writeln!(s, "{},{},{},{}", r.method.name(), r.seed, r.status, metric_cells(r.metrics.as_ref(), &tags));
    s
}

/// Per-seed rows followed by `mean` and `std` rows per method.
pub fn eval_csv(r: &EvalReport) -> String {
    let tags = region_tags(r.runs.iter().filter_map(|x| x.metrics.as_ref()));
    let mut s = format!("method,seed,status,{METRIC_HEADER}{}\n", tag_header(&tags));
    for row in &r.runs {
        let _ = writeln!(s, "{},{},{},{}", row.method.name(), row.seed, row.status, metric_cells(row.metrics.as_ref(), &tags));
    }
    let mut keys: Vec<String> = METRIC_HEADER.split(',').map(str::to_string).collect();
    keys.extend(tags.iter().map(|t| format!("region:{t}")));
    for agg in &r.aggregate {
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let cells: Vec<String> = keys
                .iter()
                .map(|k| {
                    agg.metrics
                        .get(k)
                        .map(|v| if pick == 0 { v.mean } else { v.std }.to_string())
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(s, "{},{label},aggregate,{}", agg.method.name(), cells.join(","));
        }
    }
    s
}

/// `point_id,x0..,cluster,centroid_x0..` rows for external plotting.
pub fn points_csv(data: &Dataset64, a: &Assignment64) -> String {
    let dim = data.dim();
    let mut s = String::from("point_id");
    for t in 0..dim {
        let _ = write!(s, ",x{t}");
    }
    s.push_str(",cluster");
    for t in 0..dim {
        let _ = write!(s, ",centroid_x{t}");
    }
    s.push('\n');
    for (i, p) in data.points().enumerate() {
        let c = a.labels()[i];
        let _ = write!(s, "{i}");
        for v in p {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{c}");
        for v in a.centroid(c) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
