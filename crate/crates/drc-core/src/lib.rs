//! Distributionally robust control with ambiguity sets built from
//! one-dimensional projections of the uncertain parameter.
//!
//! The crate models min-max problems of the form
//!
//! ```text
//! minimize over u in U   (worst case over P in S)   E_{x~P} [ l(u, x) ]
//! subject to             E_{x~P} [ g_i(q_i' x) ] <= 0   for all i,
//! ```
//!
//! where `S` is the set of distributions supported on a box, and each
//! constraint bounds the expectation of a scalar function of a linear
//! projection of `x`. Two solution methods are provided:
//!
//! - [`best_response::run_best_response`]: alternates an optimal control
//!   step against a fixed n-point discrete distribution with a worst-case
//!   re-placement of the n points. May cycle; cycles are detected and
//!   reported.
//! - [`cutting_set::run_cutting_set`]: dualizes the inner maximization,
//!   solves the resulting semi-infinite program by alternating a finite
//!   master problem with a pessimization oracle over the support box.
//!
//! Both are backed by a self-contained log-barrier interior-point solver
//! ([`convex`]) and a penalty convex-concave procedure ([`dccp`]) for the
//! non-convex subproblems.

mod assemble;
pub mod best_response;
pub mod convex;
pub mod cutting_set;
pub mod dccp;
pub mod problem;
pub mod report;
pub mod scenarios;

pub use problem::{
    validate_problem, ConstraintKind, InputBlock, InputSet, LossForm, ProblemError, ProblemSpec,
    ProjectionConstraint, ProjectionFn, SupportSet, ValidatedProblem,
};
pub use report::{Certificate, IterRecord, Method, ReportStatus, SolveParams, SolveReport};

/// Failures of the two solution methods beyond plain solver errors.
#[derive(Debug, thiserror::Error)]
pub enum MethodError {
    #[error(transparent)]
    Problem(#[from] problem::ProblemError),
    #[error(transparent)]
    Solver(#[from] convex::SolverError),
    #[error("no admissible sample placement: {0}")]
    InfeasibleSamplePlacement(String),
    #[error("inconsistent constraint pairing metadata: {0}")]
    MissingPairing(String),
    #[error("the cut set is empty")]
    EmptyCutSet,
}
