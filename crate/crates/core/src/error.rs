use thiserror::Error;

/// Which material-law hypothesis a certificate check tripped over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// (a) selfadjoint
    SelfAdjoint,
    /// (b) non-negative
    NonNegative,
    /// (c) Lipschitz continuous
    Lipschitz,
    /// (d) differentiable off a null set
    Differentiable,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Hypothesis::SelfAdjoint => "(a) selfadjoint",
            Hypothesis::NonNegative => "(b) non-negative",
            Hypothesis::Lipschitz => "(c) Lipschitz",
            Hypothesis::Differentiable => "(d) differentiable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypothesis {hypothesis} violated at t = {t}: value {value:e}")]
    Hypothesis {
        hypothesis: Hypothesis,
        t: f64,
        value: f64,
    },

    #[error("no weight on the grid qualifies; worst eigenvalue {min_eigenvalue:e} at t = {t} (rho = {rho})")]
    Certificate {
        rho: f64,
        t: f64,
        min_eigenvalue: f64,
    },

    #[error("subspace block {block} is not coercive: min eigenvalue {min_eigenvalue:e} at t = {t}")]
    SubspaceCertificate {
        block: &'static str,
        t: f64,
        min_eigenvalue: f64,
    },

    #[error("subspace is not a time-invariant null space of M0: defect {defect:e} at t = {t}")]
    NullSpace { t: f64, defect: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("step at t = {t} is {reason} (min real-part eigenvalue {min_eigenvalue:e})")]
    Step {
        t: f64,
        reason: &'static str,
        min_eigenvalue: f64,
    },

    #[error("matrix block {what} is singular (min eigenvalue {min_eigenvalue:e})")]
    Singular {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("space-time system of size {size} exceeds the dense-oracle limit {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("fixed-point iteration diverged at iteration {iter} (ratio {ratio:.4})")]
    Divergence { iter: usize, ratio: f64 },

    #[error("fixed-point iteration did not converge in {iters} iterations (last ratio {last_ratio:.4})")]
    Timeout { iters: usize, last_ratio: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
