//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CnetError {
    /// Input data violates a documented invariant.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Input text could not be decoded.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        message: String,
        line: usize,
        column: usize,
    },

    /// The design parameter is outside the region where equilibria are
    /// characterized by the potential maximization.
    #[error("theta is outside the covered region: {0}")]
    RegionNotCovered(String),

    /// The potential is unbounded above on the strategy set.
    #[error("objective is unbounded on the feasible set")]
    Unbounded,

    #[error("active-set iteration limit {0} reached")]
    MaxIterations(usize),

    /// The market maker's payoff is not concave in r.
    #[error("market-maker payoff is not concave in r (2*theta_m - theta_c = {0})")]
    NonConcaveObjective(f64),

    /// A closed-form formula was called outside its hypotheses.
    #[error("precondition violated: {condition} (slack {slack})")]
    PreconditionViolated { condition: String, slack: f64 },

    /// A boundary comparison fell inside the tolerance band.
    #[error("theta is within the tolerance band of boundary {0}")]
    BoundaryAmbiguous(String),

    #[error("the balanced transport set is empty")]
    EmptyPolytope,

    #[error("no invertible column subset for the implicit equalities")]
    DegenerateBasis,

    #[error("no strictly feasible point: {0}")]
    NoSlaterPoint(String),

    #[error("no grid point lies in the feasible design set")]
    EmptyFeasibleGrid,

    #[error("relaxation degree too low: {0}")]
    DegreeTooLow(String),

    /// The SDP solver stopped before meeting its tolerances.
    #[error("SDP solver did not converge after {iterations} iterations (bound {bound}, gap {gap})")]
    NotConverged {
        iterations: usize,
        bound: f64,
        gap: f64,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("linear program failed: {0}")]
    Lp(String),
}

impl CnetError {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            CnetError::Validation(_) => "validation",
            CnetError::Parse { .. } => "parse",
            CnetError::RegionNotCovered(_) => "region_not_covered",
            CnetError::Unbounded => "unbounded",
            CnetError::MaxIterations(_) => "max_iterations",
            CnetError::NonConcaveObjective(_) => "non_concave_objective",
            CnetError::PreconditionViolated { .. } => "precondition_violated",
            CnetError::BoundaryAmbiguous(_) => "boundary_ambiguous",
            CnetError::EmptyPolytope => "empty_polytope",
            CnetError::DegenerateBasis => "degenerate_basis",
            CnetError::NoSlaterPoint(_) => "no_slater_point",
            CnetError::EmptyFeasibleGrid => "empty_feasible_grid",
            CnetError::DegreeTooLow(_) => "degree_too_low",
            CnetError::NotConverged { .. } => "not_converged",
            CnetError::NumericalFailure(_) => "numerical_failure",
            CnetError::Lp(_) => "lp_failure",
        }
    }
}

pub type Result<T> = std::result::Result<T, CnetError>;
