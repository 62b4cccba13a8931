use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rkm", version, about = "Maximal-radius constrained k-means experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Cluster one dataset and report the assignment and its metrics.
    Run(RunArgs),
    /// Run methods over a list of seeds and aggregate the metrics.
    Eval(EvalArgs),
    /// Find the smallest K that admits a conflict-free partition.
    Feastest(FeastestArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub dataset: GenDataset,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenDataset {
    /// Two interleaved half-circles with an imbalanced split.
    TwoMoons {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Fraction of points on the concave moon.
        #[arg(long, default_value_t = 0.85)]
        imbalance: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Uniform samples on (-3,-1), (-1,1) and (1,3).
    TripleUniform {
        /// Sample counts per interval.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [51usize, 26, 25])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmeans,
    Kmedoids,
    Kcenter,
    Cardinality,
    Radius,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Kmedoids => "kmedoids",
            Method::Kcenter => "kcenter",
            Method::Cardinality => "cardinality",
            Method::Radius => "radius",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Sdp,
    Kcenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Options shared by `run` and `eval`.
#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, required = true)]
    pub k: usize,
    /// Maximal cluster radius; the literal `inf` removes the constraint.
    #[arg(long, value_parser = parse_radius)]
    pub r: Option<f64>,
    /// Score source for the radius method.
    #[arg(long, value_enum, default_value_t = InitMode::Sdp)]
    pub init: InitMode,
    /// Relaxation solver tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration cap: solver iterations for the radius method, Lloyd/medoid
    /// iterations for the baselines. Each method has its own default.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Per-cluster size bounds `LO:HI` for the cardinality method.
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<(usize, usize)>,
    /// CSV path or generator spec such as `two-moons:n=100,imbalance=0.85,seed=7`.
    #[arg(long, required = true)]
    pub input: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: MethodArgs,
    /// Write `point_id,x...,cluster,centroid_x...` rows for plotting.
    #[arg(long)]
    pub emit_points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub method: Vec<Method>,
    /// A count `N` (seeds 0..N), a range `A..B`, or a list `1,5,9`.
    #[arg(long, default_value = "1", value_parser = parse_seeds)]
    pub seeds: Seeds,
    #[command(flatten)]
    pub common: MethodArgs,
}

#[derive(Debug, Args)]
pub struct FeastestArgs {
    /// CSV path or generator spec.
    #[arg(long)]
    pub input: String,
    #[arg(long, value_parser = parse_radius)]
    pub r: f64,
    /// Largest K to try.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

fn parse_radius(s: &str) -> Result<f64, String> {
    let r = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|e| format!("bad radius {s:?}: {e}"))?,
    };
    if r.is_nan() || r <= 0.0 {
        return Err(format!("radius must be positive, got {s}"));
    }
    Ok(r)
}

fn parse_bounds(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("bounds must look like LO:HI, got {s:?}"))?;
    let lo = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed list {s:?}: {e}");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(Seeds((a..b).collect()));
    }
    if s.contains(',') {
        return s.split(',').map(|t| t.trim().parse().map_err(bad)).collect::<Result<_, _>>().map(Seeds);
    }
    let n: u64 = s.trim().parse().map_err(bad)?;
    if n == 0 {
        return Err("at least one seed is required".into());
    }
    Ok(Seeds((0..n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("3").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_seeds("5..8").unwrap().0, vec![5, 6, 7]);
        assert_eq!(parse_seeds("4,1").unwrap().0, vec![4, 1]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("3..3").is_err());
    }

    #[test]
    fn radius_tokens() {
        assert_eq!(parse_radius("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_radius("0.189").unwrap(), 0.189);
        assert!(parse_radius("-1").is_err());
        assert!(parse_radius("0").is_err());
    }

    #[test]
    fn bound_pairs() {
        assert_eq!(parse_bounds("1:55").unwrap(), (1, 55));
        assert!(parse_bounds("5:2").is_err());
        assert!(parse_bounds("7").is_err());
    }
}
