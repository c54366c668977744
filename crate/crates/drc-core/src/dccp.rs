//! Penalty convex-concave procedure for difference-of-convex subproblems.
//!
//! A [`DcProgram`] is a minimization whose objective and constraints are
//! differences of terms from the convex family. Each iteration linearizes
//! every concave-tagged part at the current anchor, relaxes the
//! non-affine constraints with penalized slack variables, and solves the
//! resulting convex surrogate. The surrogate majorizes the true
//! objective, touches it at the anchor, and its optima are non-increasing
//! while the penalty weight is held fixed.

use nalgebra::{DMatrix, DVector};

use crate::convex::{
    solve_convex, AffineRow, Bounds, ConvexProgram, ConvexSolution, ObjTerm, SmoothIneq,
    SolveStatus, SolverError,
};
use crate::problem::{LossForm, ProjectionFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
}

/// One objective summand. `Convex` contributes `+term(w)` to the
/// minimization, `Concave` contributes `-term(w)`.
#[derive(Debug, Clone)]
pub struct SignedTerm {
    pub term: ObjTerm,
    pub curvature: Curvature,
}

/// One constraint `sum convex(w) - sum concave(w) + row' w <= rhs`.
#[derive(Debug, Clone)]
pub struct DcConstraint {
    pub convex: Vec<ObjTerm>,
    pub concave: Vec<ObjTerm>,
    pub row: DVector<f64>,
    pub rhs: f64,
}

impl DcConstraint {
    pub fn affine(row: DVector<f64>, rhs: f64) -> Self {
        DcConstraint {
            convex: Vec::new(),
            concave: Vec::new(),
            row,
            rhs,
        }
    }

    pub fn violation(&self, w: &DVector<f64>) -> f64 {
        let cvx: f64 = self.convex.iter().map(|t| t.value(w)).sum();
        let ccv: f64 = self.concave.iter().map(|t| t.value(w)).sum();
        cvx - ccv + self.row.dot(w) - self.rhs
    }

    fn is_affine(&self) -> bool {
        self.convex.is_empty() && self.concave.is_empty()
    }
}

/// A difference-of-convex minimization over a finite box.
#[derive(Debug, Clone)]
pub struct DcProgram {
    pub n_vars: usize,
    pub objective: Vec<SignedTerm>,
    pub constant: f64,
    pub dc_constraints: Vec<DcConstraint>,
    /// Exact affine equalities (used for pinned zero-radius windows).
    pub eq_rows: Vec<AffineRow>,
    pub var_bounds: Bounds,
}

impl DcProgram {
    pub fn new(n_vars: usize, var_bounds: Bounds) -> Self {
        DcProgram {
            n_vars,
            objective: Vec::new(),
            constant: 0.0,
            dc_constraints: Vec::new(),
            eq_rows: Vec::new(),
            var_bounds,
        }
    }

    /// True DC objective value (minimization form).
    pub fn objective_value(&self, w: &DVector<f64>) -> f64 {
        let mut v = self.constant;
        for st in &self.objective {
            match st.curvature {
                Curvature::Convex => v += st.term.value(w),
                Curvature::Concave => v -= st.term.value(w),
            }
        }
        v
    }

    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        self.dc_constraints
            .iter()
            .map(|c| c.violation(w))
            .fold(0.0, f64::max)
            .max(
                self.eq_rows
                    .iter()
                    .map(|r| (r.coeffs.dot(w) - r.rhs).abs())
                    .fold(0.0, f64::max),
            )
    }

    /// True when no concave content remains anywhere, so the program is
    /// an ordinary convex program.
    pub fn is_convex(&self) -> bool {
        self.objective
            .iter()
            .all(|st| st.curvature == Curvature::Convex)
            && self.dc_constraints.iter().all(|c| c.concave.is_empty())
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.var_bounds.len() != self.n_vars {
            return Err(SolverError::DimensionMismatch(
                "bounds length disagrees with variable count".into(),
            ));
        }
        for i in 0..self.n_vars {
            if !self.var_bounds.lower[i].is_finite() || !self.var_bounds.upper[i].is_finite() {
                return Err(SolverError::InvalidProgram(
                    "DC programs require finite box bounds".into(),
                ));
            }
        }
        Ok(())
    }

    fn clamp_into_box(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_vars, |i, _| {
            w[i].clamp(self.var_bounds.lower[i], self.var_bounds.upper[i])
        })
    }
}

/// Parameters of the penalty convex-concave procedure.
#[derive(Debug, Clone, Copy)]
pub struct DccpParams {
    pub max_iters: usize,
    pub stall_tol: f64,
    /// Initial slack penalty weight.
    pub slack_penalty: f64,
    /// Penalty growth factor applied when the iteration stalls with
    /// residual slacks.
    pub penalty_growth: f64,
    pub penalty_cap: f64,
}

impl Default for DccpParams {
    fn default() -> Self {
        DccpParams {
            max_iters: 100,
            stall_tol: 1e-7,
            slack_penalty: 0.5,
            penalty_growth: 2.0,
            penalty_cap: 1e4,
        }
    }
}

const SLACK_TOL: f64 = 1e-6;
const SUBPROBLEM_TOL: f64 = 1e-9;

/// Linearizes `term` at `anchor`: returns the gradient and the constant
/// so that `grad' w + constant` is the first-order expansion.
fn linearize(term: &ObjTerm, anchor: &DVector<f64>) -> (DVector<f64>, f64) {
    let value = term.value(anchor);
    let grad = term.gradient(anchor);
    let constant = value - grad.dot(anchor);
    (grad, constant)
}

struct ConvexifiedRow {
    terms: Vec<ObjTerm>,
    row: DVector<f64>,
    rhs: f64,
    needs_slack: bool,
}

struct Convexified {
    objective: Vec<ObjTerm>,
    constant: f64,
    rows: Vec<ConvexifiedRow>,
}

fn convexify_parts(prog: &DcProgram, anchor: &DVector<f64>) -> Convexified {
    let mut objective = Vec::new();
    let mut constant = prog.constant;
    for st in &prog.objective {
        match st.curvature {
            Curvature::Convex => objective.push(st.term.clone()),
            Curvature::Concave => {
                let (grad, c) = linearize(&st.term, anchor);
                objective.push(ObjTerm::Linear(-grad));
                constant -= c;
            }
        }
    }
    let mut rows = Vec::new();
    for dc in &prog.dc_constraints {
        let mut row = dc.row.clone();
        let mut rhs = dc.rhs;
        let mut terms = Vec::new();
        for t in &dc.concave {
            let (grad, c) = linearize(t, anchor);
            row -= grad;
            rhs += c;
        }
        for t in &dc.convex {
            match t {
                ObjTerm::Linear(coeffs) => row += coeffs,
                other => terms.push(other.clone()),
            }
        }
        rows.push(ConvexifiedRow {
            terms,
            row,
            rhs,
            needs_slack: !dc.is_affine(),
        });
    }
    Convexified {
        objective,
        constant,
        rows,
    }
}

/// Replaces every concave-tagged term by its first-order expansion at
/// `anchor`. The result upper-bounds the DC objective pointwise and
/// touches it at the anchor; constraints become tighter than the
/// originals. A program with empty concave slots passes through as its
/// convex part.
pub fn convexify(prog: &DcProgram, anchor: &DVector<f64>) -> ConvexProgram {
    let parts = convexify_parts(prog, anchor);
    let mut cp = ConvexProgram::new(prog.n_vars);
    cp.objective = parts.objective;
    cp.objective_constant = parts.constant;
    cp.var_bounds = Some(prog.var_bounds.clone());
    cp.eq_constraints = prog.eq_rows.clone();
    for r in parts.rows {
        if r.terms.is_empty() {
            cp.ineq_constraints.push(AffineRow::new(r.row, r.rhs));
        } else {
            cp.smooth_constraints.push(SmoothIneq {
                terms: r.terms,
                row: r.row,
                rhs: r.rhs,
            });
        }
    }
    cp
}

/// Builds the penalized surrogate: slack variables are appended for each
/// non-affine constraint and charged `tau` apiece in the objective.
fn penalized_subproblem(prog: &DcProgram, anchor: &DVector<f64>, tau: f64) -> (ConvexProgram, usize) {
    let parts = convexify_parts(prog, anchor);
    let n = prog.n_vars;
    let n_slacks = parts.rows.iter().filter(|r| r.needs_slack).count();
    let total = n + n_slacks;

    let mut cp = ConvexProgram::new(total);
    for t in parts.objective {
        cp.objective.push(t.pad(n_slacks));
    }
    cp.objective_constant = parts.constant;
    if n_slacks > 0 {
        let mut penalty = DVector::zeros(total);
        for j in 0..n_slacks {
            penalty[n + j] = tau;
        }
        cp.objective.push(ObjTerm::Linear(penalty));
    }

    let mut lower = DVector::from_element(total, 0.0);
    let mut upper = DVector::from_element(total, f64::INFINITY);
    lower.rows_mut(0, n).copy_from(&prog.var_bounds.lower);
    upper.rows_mut(0, n).copy_from(&prog.var_bounds.upper);
    cp.var_bounds = Some(Bounds::boxed(lower, upper));

    for r in &prog.eq_rows {
        let mut coeffs = DVector::zeros(total);
        coeffs.rows_mut(0, n).copy_from(&r.coeffs);
        cp.eq_constraints.push(AffineRow::new(coeffs, r.rhs));
    }

    let mut slack_index = 0;
    for r in parts.rows {
        let mut row = DVector::zeros(total);
        row.rows_mut(0, n).copy_from(&r.row);
        if r.needs_slack {
            row[n + slack_index] = -1.0;
            slack_index += 1;
        }
        if r.terms.is_empty() {
            cp.ineq_constraints.push(AffineRow::new(row, r.rhs));
        } else {
            cp.smooth_constraints.push(SmoothIneq {
                terms: r.terms.iter().map(|t| t.pad(n_slacks)).collect(),
                row,
                rhs: r.rhs,
            });
        }
    }
    (cp, n_slacks)
}

/// Runs the penalty convex-concave procedure from `init` (clamped into
/// the box). Returns the final iterate with the true DC objective value;
/// the `trace` carries the sequence of penalized subproblem optima.
pub fn solve_dccp(
    prog: &DcProgram,
    init: &DVector<f64>,
    params: &DccpParams,
) -> Result<ConvexSolution, SolverError> {
    prog.validate()?;
    if init.len() != prog.n_vars {
        return Err(SolverError::DimensionMismatch(
            "initial point length disagrees with variable count".into(),
        ));
    }
    let mut w = prog.clamp_into_box(init);
    let mut tau = params.slack_penalty;
    let mut trace = Vec::new();
    let mut prev_optimum: Option<f64> = None;
    let mut last_kkt = f64::NAN;
    let mut total_newton = 0;

    for iter in 0..params.max_iters {
        let (sub, _) = penalized_subproblem(prog, &w, tau);
        let sol = solve_convex(&sub, SUBPROBLEM_TOL)?;
        total_newton += sol.iterations;
        last_kkt = sol.kkt_residual;
        let w_new = sol.w_star.rows(0, prog.n_vars).into_owned();
        let optimum = sol.value;
        trace.push(optimum);

        let step = (&w_new - &w).amax();
        let violation = prog.max_violation(&w_new);
        // Penalized value of the true DC objective at the new iterate;
        // the surrogate majorizes it, so a closed gap means w_new is a
        // fixed point of the procedure.
        let true_penalized = prog.objective_value(&w_new)
            + tau
                * prog
                    .dc_constraints
                    .iter()
                    .map(|c| c.violation(&w_new).max(0.0))
                    .sum::<f64>();
        let scale = 1.0f64.max(optimum.abs());
        let exact = (optimum - true_penalized).abs() <= params.stall_tol * scale;
        let stalled = step <= params.stall_tol
            || prev_optimum.is_some_and(|p| (p - optimum).abs() <= params.stall_tol * scale);

        w = w_new;
        prev_optimum = Some(optimum);

        if exact || stalled {
            if violation > SLACK_TOL {
                if tau < params.penalty_cap {
                    tau = (tau * params.penalty_growth).min(params.penalty_cap);
                    prev_optimum = None;
                    continue;
                }
                return Err(SolverError::SlackResidual {
                    max_slack: violation,
                });
            }
            return Ok(ConvexSolution {
                value: prog.objective_value(&w),
                w_star: w,
                status: SolveStatus::Optimal,
                kkt_residual: last_kkt,
                iterations: iter + 1,
                trace,
            });
        }
    }

    let violation = prog.max_violation(&w);
    if violation > SLACK_TOL {
        return Err(SolverError::SlackResidual {
            max_slack: violation,
        });
    }
    let _ = total_newton;
    Ok(ConvexSolution {
        value: prog.objective_value(&w),
        w_star: w,
        status: SolveStatus::MaxIters,
        kkt_residual: last_kkt,
        iterations: params.max_iters,
        trace,
    })
}

/// Runs [`solve_dccp`] from every initial point and keeps the best final
/// objective. Restarts are independent; errors surface only when every
/// restart fails.
pub fn solve_dccp_multistart(
    prog: &DcProgram,
    inits: &[DVector<f64>],
    params: &DccpParams,
) -> Result<ConvexSolution, SolverError> {
    let mut best: Option<ConvexSolution> = None;
    let mut last_err = None;
    for init in inits {
        match solve_dccp(prog, init, params) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.value < b.value) {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(sol) => Ok(sol),
        None => Err(last_err.unwrap_or(SolverError::InvalidProgram(
            "no initial points supplied".into(),
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptSense {
    Minimize,
    Maximize,
}

/// Which loss argument is frozen; carries the frozen value.
#[derive(Debug, Clone)]
pub enum FixedArg {
    /// The control is fixed; the free variable is the uncertain vector.
    Control(DVector<f64>),
    /// The uncertain vector is fixed; the free variable is the control.
    Uncertain(DVector<f64>),
}

/// A weighted projection summand `weight * g(direction' v)` added to the
/// objective in the stated sense (dual terms of the pessimization).
#[derive(Debug, Clone)]
pub struct WeightedProjection {
    pub weight: f64,
    pub direction: DVector<f64>,
    pub g: ProjectionFn,
}

fn projection_terms(
    sigma: f64,
    wp: &WeightedProjection,
    objective: &mut Vec<SignedTerm>,
) -> Result<(), SolverError> {
    let gamma = sigma * wp.weight;
    if gamma == 0.0 {
        return Ok(());
    }
    match wp.g {
        ProjectionFn::Identity => objective.push(SignedTerm {
            term: ObjTerm::Linear(&wp.direction * gamma),
            curvature: Curvature::Convex,
        }),
        ProjectionFn::Power(1) => objective.push(SignedTerm {
            term: ObjTerm::Linear(&wp.direction * gamma),
            curvature: Curvature::Convex,
        }),
        ProjectionFn::Power(2) => {
            let outer = &wp.direction * wp.direction.transpose();
            if gamma > 0.0 {
                objective.push(SignedTerm {
                    term: ObjTerm::Quadratic {
                        matrix: outer * gamma,
                        linear: DVector::zeros(wp.direction.len()),
                    },
                    curvature: Curvature::Convex,
                });
            } else {
                objective.push(SignedTerm {
                    term: ObjTerm::Quadratic {
                        matrix: outer * (-gamma),
                        linear: DVector::zeros(wp.direction.len()),
                    },
                    curvature: Curvature::Concave,
                });
            }
        }
        ProjectionFn::Power(p) => {
            return Err(SolverError::UnsupportedGFun(format!(
                "power exponent {p} exceeds the solver term family (1 and 2 are supported)"
            )))
        }
        ProjectionFn::IndicatorGeq(_) => {
            return Err(SolverError::UnsupportedGFun(
                "indicator projections make the subproblems mixed-integer".into(),
            ))
        }
    }
    Ok(())
}

/// Splits `sense`-optimization of `loss(., fixed) + sum_i extra_i` over
/// the free argument into a minimization-form [`DcProgram`] on `bounds`.
/// Terms that are convex in the free argument but carry a favorable sign
/// for a maximization land in the concave-tagged slot.
pub fn dc_split(
    loss: &LossForm,
    fixed: &FixedArg,
    sense: OptSense,
    extra: &[WeightedProjection],
    bounds: Bounds,
) -> Result<DcProgram, SolverError> {
    let sigma = match sense {
        OptSense::Minimize => 1.0,
        OptSense::Maximize => -1.0,
    };
    let n = bounds.len();
    let mut prog = DcProgram::new(n, bounds);

    match (loss, fixed) {
        (LossForm::Bilinear { a, b, c, d }, FixedArg::Control(u)) => {
            let coeff = a.transpose() * u + c;
            if coeff.len() != n {
                return Err(SolverError::DimensionMismatch(
                    "loss dimension disagrees with bounds".into(),
                ));
            }
            prog.objective.push(SignedTerm {
                term: ObjTerm::Linear(coeff * sigma),
                curvature: Curvature::Convex,
            });
            prog.constant += sigma * (b.dot(u) + d);
        }
        (LossForm::Bilinear { a, b, c, d }, FixedArg::Uncertain(x)) => {
            let coeff = a * x + b;
            if coeff.len() != n {
                return Err(SolverError::DimensionMismatch(
                    "loss dimension disagrees with bounds".into(),
                ));
            }
            prog.objective.push(SignedTerm {
                term: ObjTerm::Linear(coeff * sigma),
                curvature: Curvature::Convex,
            });
            prog.constant += sigma * (c.dot(x) + d);
        }
        (LossForm::NormAffine { f, g, h }, FixedArg::Control(u)) => {
            if g.ncols() != n {
                return Err(SolverError::DimensionMismatch(
                    "loss dimension disagrees with bounds".into(),
                ));
            }
            let offset = f * u + h;
            let term = ObjTerm::smoothed_norm(g.clone(), offset);
            prog.objective.push(SignedTerm {
                term,
                curvature: if sigma > 0.0 {
                    Curvature::Convex
                } else {
                    Curvature::Concave
                },
            });
        }
        (LossForm::NormAffine { f, g, h }, FixedArg::Uncertain(x)) => {
            if f.ncols() != n {
                return Err(SolverError::DimensionMismatch(
                    "loss dimension disagrees with bounds".into(),
                ));
            }
            let offset = g * x + h;
            let term = ObjTerm::smoothed_norm(f.clone(), offset);
            prog.objective.push(SignedTerm {
                term,
                curvature: if sigma > 0.0 {
                    Curvature::Convex
                } else {
                    Curvature::Concave
                },
            });
        }
    }

    for wp in extra {
        if wp.direction.len() != n {
            return Err(SolverError::DimensionMismatch(
                "projection direction disagrees with bounds".into(),
            ));
        }
        projection_terms(sigma, wp, &mut prog.objective)?;
    }
    Ok(prog)
}
