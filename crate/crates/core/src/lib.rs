//! Radius-constrained k-means clustering.
//!
//! Every cluster must fit in a ball: no two points of a cluster may be more
//! than `2r` apart. The pipeline solves a convex relaxation of the
//! mixed-integer program for scores and a lower bound ([`relaxation`]), then
//! rounds the scores with two exact constrained assignment solves
//! ([`rounding`]). Classical baselines live in [`baselines`] and the
//! evaluation metrics in [`metrics`].
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// Index loops over parallel arrays read better in the numerical kernels.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod conic;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod relaxation;
pub mod rounding;
pub mod scalar;

pub use data::{
    conflict_graph, make_1d_triple_uniform, make_two_moons, squared_pairwise_distances, Assignment, ConflictGraph,
    Dataset, DistanceMatrix, Radius,
};
pub use error::{Certificate, Error, Result};
pub use metrics::MetricsReport;
pub use scalar::Real;

pub type Dataset64 = Dataset<f64>;
pub type DistanceMatrix64 = DistanceMatrix<f64>;
pub type Assignment64 = Assignment<f64>;
pub type ConflictGraph64 = ConflictGraph<f64>;
pub type Radius64 = Radius<f64>;
pub type MetricsReport64 = MetricsReport<f64>;
pub type ConicProgram64 = conic::ConicProgram<f64>;
pub type ConicSolution64 = conic::ConicSolution<f64>;
pub type SdpScores64 = relaxation::SdpScores<f64>;
