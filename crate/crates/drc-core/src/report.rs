//! Method outputs: run parameters, iteration records, and the solve
//! report shared by both algorithms.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BestResponse,
    CuttingSet,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::BestResponse => write!(f, "best-response"),
            Method::CuttingSet => write!(f, "cutting-set"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStatus {
    Converged,
    Cycling { period: usize },
    MaxIters,
    Infeasible,
}

impl ReportStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ReportStatus::Converged => "converged",
            ReportStatus::Cycling { .. } => "cycling",
            ReportStatus::MaxIters => "max_iters",
            ReportStatus::Infeasible => "infeasible",
        }
    }

    pub fn cycle_period(&self) -> Option<usize> {
        match self {
            ReportStatus::Cycling { period } => Some(*period),
            _ => None,
        }
    }
}

/// One main-loop iteration: the running objective and either the cut
/// violation (cutting-set) or the control step norm (best-response).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub violation_or_step: f64,
}

/// Certificate data accompanying the returned control: dual multipliers
/// for the cutting-set method, worst-case sample placements for
/// best-response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Duals {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        lambda: Vec<f64>,
        t: f64,
    },
    Samples {
        points: Vec<Vec<f64>>,
    },
}

/// Run parameters shared by the two methods; each consumes the fields
/// relevant to it and echoes the full set in the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub seed: u64,
    /// Sample-atom count for best-response and initial cut count for
    /// cutting-set.
    pub n_samples: usize,
    pub max_iters: usize,
    pub max_cuts: usize,
    pub feas_tol: f64,
    pub u_tol: f64,
    pub cycle_tol: f64,
    pub dccp_restarts: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            seed: 0,
            n_samples: 50,
            max_iters: 100,
            max_cuts: 200,
            feas_tol: 1e-6,
            u_tol: 1e-5,
            cycle_tol: 1e-4,
            dccp_restarts: 8,
        }
    }
}

/// Output of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub status: ReportStatus,
    pub u_star: Vec<f64>,
    /// Estimated min-max objective value at `u_star`.
    pub value: f64,
    /// True when every pessimization/placement subproblem was solved
    /// exactly, so the reported value is a certified bound.
    pub certified: bool,
    pub iterations: usize,
    /// Mean wall-clock seconds per main-loop iteration.
    pub per_iteration_seconds: f64,
    pub history: Vec<IterRecord>,
    pub u_history: Vec<Vec<f64>>,
    pub certificate: Certificate,
    pub seed: u64,
    pub params: SolveParams,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_match_documented_values() {
        let p = SolveParams::default();
        assert_eq!(p.n_samples, 50);
        assert_eq!(p.max_iters, 100);
        assert_eq!(p.max_cuts, 200);
        assert_eq!(p.dccp_restarts, 8);
        assert_eq!(p.feas_tol, 1e-6);
        assert_eq!(p.u_tol, 1e-5);
        assert_eq!(p.cycle_tol, 1e-4);
    }

    #[test]
    fn status_labels() {
        assert_eq!(ReportStatus::Converged.label(), "converged");
        assert_eq!(ReportStatus::Cycling { period: 2 }.label(), "cycling");
        assert_eq!(ReportStatus::Cycling { period: 2 }.cycle_period(), Some(2));
        assert_eq!(ReportStatus::MaxIters.cycle_period(), None);
    }
}
