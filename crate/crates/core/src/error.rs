use serde::Serialize;
use thiserror::Error;

/// Proof object explaining why no conflict-respecting assignment exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Certificate {
    /// Pairwise-conflicting points; more of them than available clusters.
    Clique { members: Vec<usize> },
    /// Cluster size bounds that cannot be met; `members` lists the clusters involved.
    Bounds {
        members: Vec<usize>,
        lower_sum: usize,
        upper_sum: usize,
        n: usize,
    },
    /// Branch-and-bound explored every branch without finding an assignment;
    /// `members` is empty.
    Exhaustive { members: Vec<usize>, nodes: usize },
}

impl Certificate {
    pub fn members(&self) -> &[usize] {
        match self {
            Certificate::Clique { members } | Certificate::Bounds { members, .. } | Certificate::Exhaustive { members, .. } => members,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("infeasible: {0:?}")]
    Infeasible(Certificate),
    #[error("cluster {0} is degenerate in the relaxed solution")]
    DegenerateCluster(usize),
    #[error("solver breakdown at iteration {iteration}: {message}")]
    Solver {
        message: String,
        iteration: usize,
        trace: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
