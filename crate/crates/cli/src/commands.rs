use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use radius_kmeans::baselines::{cardinality_constrained_kmeans, kcenter_greedy, kmedoids, lloyd_kmeans, BaselineConfig};
use radius_kmeans::conic::SolverSettings;
use radius_kmeans::relaxation::{kcenter_scores, solve_relaxation, RelaxationOptions};
use radius_kmeans::rounding::{min_feasible_k, round_pipeline};
use radius_kmeans::{Assignment64, Certificate, ConflictGraph, Dataset64, DistanceMatrix, Error, MetricsReport64, Radius};
use serde::Serialize;

use crate::args::{EvalArgs, FeastestArgs, Format, GenArgs, GenDataset, InitMode, Method, MethodArgs, RunArgs};
use crate::input;
use crate::output::{self, Aggregate, EvalReport, EvalRow, RadiusValue, RoundingStats, RunReport, SolverStats};

const INFEASIBLE: u8 = 2;

pub fn gen(args: GenArgs) -> Result<ExitCode> {
    let data = match args.dataset {
        GenDataset::TwoMoons { n, imbalance, noise, seed } => {
            radius_kmeans::make_two_moons::<f64>(n, (imbalance, 1.0 - imbalance), noise, seed)?
        }
        GenDataset::TripleUniform { counts, seed } => {
            let counts: [usize; 3] = counts.try_into().map_err(|_| anyhow::anyhow!("--counts takes three values"))?;
            radius_kmeans::make_1d_triple_uniform::<f64>(counts, seed)?
        }
    };
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    output::write(args.output.as_deref(), &buf)?;
    Ok(ExitCode::SUCCESS)
}

/// What one method produced on one dataset.
pub enum Outcome {
    Solved {
        assignment: Assignment64,
        lower_bound: Option<f64>,
        solver: Option<SolverStats>,
        rounding: Option<RoundingStats>,
    },
    Infeasible(Certificate),
}

fn radius_of(common: &MethodArgs) -> Result<Option<Radius<f64>>> {
    common.r.map(Radius::new).transpose().map_err(Into::into)
}

pub fn run_method(method: Method, data: &Dataset64, distances: &DistanceMatrix<f64>, seed: u64, common: &MethodArgs) -> Result<Outcome> {
    let k = common.k;
    let mut config = BaselineConfig::new(k, seed);
    if let Some(it) = common.max_iters.filter(|_| method != Method::Radius) {
        config.max_iters = it;
    }
    let baseline = |result: radius_kmeans::Result<radius_kmeans::baselines::Clustering<f64>>| -> Result<Outcome> {
        match result {
            Ok(c) => Ok(Outcome::Solved {
                assignment: c.assignment,
                lower_bound: None,
                solver: None,
                rounding: None,
            }),
            Err(Error::Infeasible(cert)) => Ok(Outcome::Infeasible(cert)),
            Err(e) => Err(e.into()),
        }
    };
    match method {
        Method::Kmeans => baseline(lloyd_kmeans(data, &config)),
        Method::Kmedoids => baseline(kmedoids(data, &config)),
        Method::Kcenter => baseline(kcenter_greedy(data, &config)),
        Method::Cardinality => {
            if let Some(b) = common.bounds {
                config = config.with_bounds(vec![b; k]);
            }
            baseline(cardinality_constrained_kmeans(data, &config))
        }
        Method::Radius => {
            let Some(radius) = radius_of(common)? else {
                bail!("--r is required for the radius method (use `inf` for no constraint)");
            };
            match radius_pipeline(data, distances, radius, seed, common) {
                Err(Error::Infeasible(cert)) => Ok(Outcome::Infeasible(cert)),
                other => other.map_err(Into::into),
            }
        }
    }
}

fn radius_pipeline(
    data: &Dataset64,
    distances: &DistanceMatrix<f64>,
    radius: Radius<f64>,
    seed: u64,
    common: &MethodArgs,
) -> radius_kmeans::Result<Outcome> {
    let k = common.k;
    let (scores, solver) = match common.init {
        InitMode::Sdp => {
            let settings = SolverSettings::with_tol(common.tol, common.max_iters.unwrap_or(50_000));
            let t = Instant::now();
            let run = solve_relaxation(distances, k, radius, RelaxationOptions::default(), &settings)?;
            let s = &run.solution;
            let stats = SolverStats {
                status: format!("{:?}", s.status).to_lowercase(),
                iterations: s.iterations,
                primal_objective: s.primal_objective,
                dual_objective: s.dual_objective,
                primal_residual: s.primal_residual,
                dual_residual: s.dual_residual,
                gap: s.gap,
                reduced_vars: s.reduced_size.0,
                reduced_rows: s.reduced_size.1,
                seconds: t.elapsed().as_secs_f64(),
            };
            (run.scores, Some(stats))
        }
        InitMode::Kcenter => (kcenter_scores(data, &BaselineConfig::new(k, seed))?, None),
    };
    let res = round_pipeline(data, distances, &scores, k, radius)?;
    Ok(Outcome::Solved {
        assignment: res.assignment,
        lower_bound: scores.lower_bound,
        solver,
        rounding: Some(RoundingStats {
            optimal: res.optimal,
            score_step_objective: res.score_step_objective,
            assignment_objective: res.assignment_objective,
        }),
    })
}

fn metrics(data: &Dataset64, distances: &DistanceMatrix<f64>, assignment: &Assignment64, common: &MethodArgs, lb: Option<f64>) -> Result<MetricsReport64> {
    let graph = radius_of(common)?.map(|r| ConflictGraph::new(distances, r));
    Ok(MetricsReport64::evaluate(data, distances, assignment, graph.as_ref(), lb)?)
}

pub fn run(args: RunArgs) -> Result<ExitCode> {
    let started = Instant::now();
    let common = &args.common;
    let data = input::load(&common.input, args.seed)?;
    let distances = DistanceMatrix::from_dataset(&data);
    let outcome = run_method(args.method, &data, &distances, args.seed, common)?;
    let mut report = RunReport {
        status: "ok",
        method: args.method,
        k: common.k,
        r: common.r.map(RadiusValue),
        init: (args.method == Method::Radius).then_some(common.init),
        seed: args.seed,
        n: data.len(),
        dim: data.dim(),
        labels: None,
        centroids: None,
        metrics: None,
        lower_bound: None,
        solver: None,
        rounding: None,
        certificate: None,
        wall_time_s: 0.0,
    };
    let code = match outcome {
        Outcome::Solved {
            assignment,
            lower_bound,
            solver,
            rounding,
        } => {
            let m = metrics(&data, &distances, &assignment, common, lower_bound)?;
            if let Some(path) = &args.emit_points {
                output::write(Some(path), output::points_csv(&data, &assignment).as_bytes())?;
            }
            report.labels = Some(assignment.labels().to_vec());
            report.centroids = Some(assignment.centroids().map(<[f64]>::to_vec).collect());
            report.metrics = Some(m);
            report.lower_bound = lower_bound;
            report.solver = solver;
            report.rounding = rounding;
            ExitCode::SUCCESS
        }
        Outcome::Infeasible(cert) => {
            report.status = "infeasible";
            report.certificate = Some(cert);
            ExitCode::from(INFEASIBLE)
        }
    };
    report.wall_time_s = started.elapsed().as_secs_f64();
    let body = match common.format {
        Format::Json => to_json(&report)?,
        Format::Csv => output::run_csv(&report),
    };
    output::write(common.output.as_deref(), body.as_bytes())?;
    Ok(code)
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let common = &args.common;
    let regenerate = input::is_seeded_generator(&common.input);
    let fixed = if regenerate { None } else { Some(input::load(&common.input, 0)?) };
    let mut rows = Vec::new();
    for &method in &args.method {
        for &seed in &args.seeds.0 {
            let data = match &fixed {
                Some(d) => d.clone(),
                None => input::load(&common.input, seed)?,
            };
            let distances = DistanceMatrix::from_dataset(&data);
            let row = match run_method(method, &data, &distances, seed, common) {
                Ok(Outcome::Solved { assignment, lower_bound, .. }) => EvalRow {
                    method,
                    seed,
                    status: "ok".into(),
                    metrics: Some(metrics(&data, &distances, &assignment, common, lower_bound)?),
                    certificate: None,
                    error: None,
                },
                Ok(Outcome::Infeasible(cert)) => EvalRow {
                    method,
                    seed,
                    status: "infeasible".into(),
                    metrics: None,
                    certificate: Some(cert),
                    error: None,
                },
                Err(e) => EvalRow {
                    method,
                    seed,
                    status: "error".into(),
                    metrics: None,
                    certificate: None,
                    error: Some(format!("{e:#}")),
                },
            };
            rows.push(row);
        }
    }
    let aggregates = args
        .method
        .iter()
        .map(|&m| Aggregate::from_rows(m, rows.iter().filter(|r| r.method == m)))
        .collect();
    let report = EvalReport {
        methods: args.method.clone(),
        k: common.k,
        r: common.r.map(RadiusValue),
        seeds: args.seeds.0.clone(),
        runs: rows,
        aggregate: aggregates,
    };
    let body = match common.format {
        Format::Json => to_json(&report)?,
        Format::Csv => output::eval_csv(&report),
    };
    output::write(common.output.as_deref(), body.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct FeasibilityOutput {
    r: RadiusValue,
    k_max: usize,
    k: Option<usize>,
    clique_bound: usize,
    clique: Vec<usize>,
    labels: Option<Vec<usize>>,
    certificate: Option<Certificate>,
}

pub fn feastest(args: FeastestArgs) -> Result<ExitCode> {
    let data = input::load(&args.input, args.seed)?;
    let distances = DistanceMatrix::from_dataset(&data);
    let radius = Radius::new(args.r)?;
    let rep = min_feasible_k(&distances, radius, args.k).context("feasibility search")?;
    let code = if rep.k.is_some() { ExitCode::SUCCESS } else { ExitCode::from(INFEASIBLE) };
    let out = FeasibilityOutput {
        r: RadiusValue(args.r),
        k_max: args.k,
        k: rep.k,
        clique_bound: rep.clique_bound,
        clique: rep.clique,
        labels: rep.labels,
        certificate: rep.certificate,
    };
    output::write(args.output.as_deref(), to_json(&out)?.as_bytes())?;
    Ok(code)
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Mean and sample standard deviation; `(x, 0)` for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
