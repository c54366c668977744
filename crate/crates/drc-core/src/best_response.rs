//! Best-response dynamics: alternate an optimal control step against a
//! fixed n-point discrete distribution with a worst-case re-placement of
//! the n points, detecting convergence and cycles on the control history.
//!
//! Each run is sequential (every step feeds the next); independent runs
//! may execute concurrently.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assemble::{input_layout, pad_row};
use crate::convex::{
    solve_convex, AffineRow, Bounds, ConvexProgram, ObjTerm, SmoothIneq, SolverError,
};
use crate::dccp::{solve_dccp, Curvature, DcConstraint, DcProgram, DccpParams, SignedTerm};
use crate::problem::{
    ConstraintOrigin, ExpandedConstraints, LossForm, ProjectionFn, SupportSet, ValidatedProblem,
};
use crate::report::{Certificate, IterRecord, Method, ReportStatus, SolveParams, SolveReport};
use crate::scenarios::uniform_box_samples;
use crate::MethodError;

/// Radii at or below this are treated as exact equality pins.
const PINNED_RADIUS: f64 = 1e-12;
const SUPPORT_TOL: f64 = 1e-9;
const SOLVE_TOL: f64 = 1e-9;

/// An n-point equiprobable distribution supported on the problem box.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    points: Vec<DVector<f64>>,
}

impl DiscreteDistribution {
    /// Builds a distribution after checking every point is inside the
    /// support (tolerance 1e-9) and n >= 1.
    pub fn new(points: Vec<DVector<f64>>, support: &SupportSet) -> Result<Self, MethodError> {
        if points.is_empty() {
            return Err(MethodError::InfeasibleSamplePlacement(
                "a discrete distribution needs at least one point".into(),
            ));
        }
        for (k, p) in points.iter().enumerate() {
            if !support.contains(p, SUPPORT_TOL) {
                return Err(MethodError::InfeasibleSamplePlacement(format!(
                    "point {k} lies outside the support box"
                )));
            }
        }
        Ok(DiscreteDistribution { points })
    }

    /// Draws n points uniformly from the support box with a seeded
    /// generator.
    pub fn uniform(support: &SupportSet, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DiscreteDistribution {
            points: uniform_box_samples(&support.lower, &support.upper, n, &mut rng),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.points[0].len());
        for p in &self.points {
            m += p;
        }
        m / self.points.len() as f64
    }
}

/// One best-response iterate with its recomputed sample-average loss and
/// expanded-constraint slacks (nonnegative when satisfied).
#[derive(Debug, Clone)]
pub struct BrIterate {
    pub u: DVector<f64>,
    pub dist: DiscreteDistribution,
    pub objective: f64,
    pub constraint_slacks: DVector<f64>,
}

impl BrIterate {
    pub fn evaluate(
        problem: &ValidatedProblem,
        u: &DVector<f64>,
        dist: &DiscreteDistribution,
    ) -> Result<Self, MethodError> {
        let n = dist.len() as f64;
        let mut objective = 0.0;
        for p in dist.points() {
            objective += problem.loss().eval(u, p)?;
        }
        objective /= n;
        let expanded = problem.expand_two_sided();
        let slacks = DVector::from_iterator(
            expanded.constraints.len(),
            expanded
                .constraints
                .iter()
                .map(|c| -c.averaged_violation(dist.points())),
        );
        Ok(BrIterate {
            u: u.clone(),
            dist: dist.clone(),
            objective,
            constraint_slacks: slacks,
        })
    }
}

/// Minimizes the sample-average loss over the input set. Convex for both
/// supported loss forms.
pub fn min_step(
    problem: &ValidatedProblem,
    dist: &DiscreteDistribution,
) -> Result<DVector<f64>, MethodError> {
    let dim_u = problem.dim_u();
    let layout = input_layout(problem.input_set(), dim_u);
    let mut prog = ConvexProgram::new(dim_u);
    prog.var_bounds = Some(Bounds::boxed(layout.lower, layout.upper));
    if layout.whole_simplex {
        prog.simplex_block = Some(0..dim_u);
    } else {
        prog.eq_constraints = layout.eq_rows;
    }

    match problem.loss() {
        LossForm::Bilinear { a, b, .. } => {
            // Average of u'Ax + b'u over the points: (A xbar + b)' u.
            let coeff = a * dist.mean() + b;
            prog.objective.push(ObjTerm::Linear(coeff));
        }
        LossForm::NormAffine { f, g, h } => {
            // Sum of the per-point norms has the same minimizer as the
            // average.
            for p in dist.points() {
                let offset = g * p + h;
                prog.objective.push(ObjTerm::smoothed_norm(f.clone(), offset));
            }
        }
    }

    let sol = solve_convex(&prog, SOLVE_TOL)?;
    Ok(sol.w_star)
}

/// Result of one worst-case placement step.
#[derive(Debug, Clone)]
pub struct Placement {
    pub dist: DiscreteDistribution,
    /// True when the placement problem was concave and solved exactly.
    pub exact: bool,
}

struct StackedConstraints {
    eq_rows: Vec<AffineRow>,
    affine: Vec<AffineRow>,
    convex_quad: Vec<SmoothIneq>,
    dc_rows: Vec<DcConstraint>,
    has_nonconvex: bool,
}

/// Expands the averaged ambiguity constraints over the stacked variable
/// (n copies of the uncertain vector). Works on the sum scale:
/// `sign * sum_k g(q'x_k) <= n * bound`.
fn stack_constraints(
    expanded: &ExpandedConstraints,
    n: usize,
    dim_x: usize,
) -> Result<StackedConstraints, MethodError> {
    let total = n * dim_x;
    let nf = n as f64;
    let mut out = StackedConstraints {
        eq_rows: Vec::new(),
        affine: Vec::new(),
        convex_quad: Vec::new(),
        dc_rows: Vec::new(),
        has_nonconvex: false,
    };

    // Pinned identity windows collapse to one equality per pair.
    let mut pinned_pairs = Vec::new();
    for (idx, pair) in expanded.pairs.iter().enumerate() {
        if pair.radius <= PINNED_RADIUS && matches!(pair.g, ProjectionFn::Identity | ProjectionFn::Power(1)) {
            pinned_pairs.push(idx);
            let mut coeffs = DVector::zeros(total);
            for k in 0..n {
                coeffs
                    .rows_mut(k * dim_x, dim_x)
                    .copy_from(&pair.direction);
            }
            out.eq_rows.push(AffineRow::new(coeffs, nf * pair.center));
        }
    }

    for c in &expanded.constraints {
        if let ConstraintOrigin::PairUpper { pair } | ConstraintOrigin::PairLower { pair } =
            c.origin
        {
            if pinned_pairs.contains(&pair) {
                continue;
            }
        }
        match &c.g {
            ProjectionFn::Identity | ProjectionFn::Power(1) => {
                let mut coeffs = DVector::zeros(total);
                for k in 0..n {
                    let mut block = coeffs.rows_mut(k * dim_x, dim_x);
                    block.copy_from(&(&c.direction * c.sign));
                }
                out.affine.push(AffineRow::new(coeffs, nf * c.bound));
            }
            ProjectionFn::Power(2) => {
                let outer = &c.direction * c.direction.transpose();
                let mut matrix = DMatrix::zeros(total, total);
                for k in 0..n {
                    matrix
                        .view_mut((k * dim_x, k * dim_x), (dim_x, dim_x))
                        .copy_from(&outer);
                }
                let term = ObjTerm::Quadratic {
                    matrix,
                    linear: DVector::zeros(total),
                };
                if c.sign > 0.0 {
                    out.convex_quad.push(SmoothIneq {
                        terms: vec![term],
                        row: DVector::zeros(total),
                        rhs: nf * c.bound,
                    });
                } else {
                    out.has_nonconvex = true;
                    out.dc_rows.push(DcConstraint {
                        convex: vec![],
                        concave: vec![term],
                        row: DVector::zeros(total),
                        rhs: nf * c.bound,
                    });
                }
            }
            ProjectionFn::Power(p) => {
                return Err(MethodError::Solver(SolverError::UnsupportedGFun(format!(
                    "power exponent {p} exceeds the solver term family (1 and 2 are supported)"
                ))))
            }
            ProjectionFn::IndicatorGeq(_) => {
                return Err(MethodError::Solver(SolverError::UnsupportedGFun(
                    "indicator projections make the placement problem mixed-integer".into(),
                )))
            }
        }
    }
    Ok(out)
}

fn stacked_bounds(support: &SupportSet, n: usize) -> Bounds {
    let dim_x = support.dim();
    let total = n * dim_x;
    let mut lower = DVector::zeros(total);
    let mut upper = DVector::zeros(total);
    for k in 0..n {
        lower.rows_mut(k * dim_x, dim_x).copy_from(&support.lower);
        upper.rows_mut(k * dim_x, dim_x).copy_from(&support.upper);
    }
    Bounds::boxed(lower, upper)
}

fn unstack(points: &DVector<f64>, n: usize, dim_x: usize, support: &SupportSet) -> Vec<DVector<f64>> {
    (0..n)
        .map(|k| support.clamp(&points.rows(k * dim_x, dim_x).into_owned()))
        .collect()
}

/// Places the n points to maximize the sample-average loss at `u_star`
/// subject to the averaged ambiguity constraints: exactly via the barrier
/// solver when the placement problem is concave, locally via the
/// convex-concave procedure otherwise (warm-started at `init`).
pub fn max_step(
    problem: &ValidatedProblem,
    u_star: &DVector<f64>,
    n: usize,
    init: &DiscreteDistribution,
) -> Result<Placement, MethodError> {
    if init.len() != n {
        return Err(MethodError::Solver(SolverError::DimensionMismatch(format!(
            "warm start has {} points, expected {n}",
            init.len()
        ))));
    }
    let dim_x = problem.dim_x();
    let total = n * dim_x;
    let expanded = problem.expand_two_sided();
    let stacked = stack_constraints(&expanded, n, dim_x)?;
    let bounds = stacked_bounds(problem.support(), n);

    // Loss is maximized, so the minimization form carries sigma = -1.
    let loss_is_affine_in_x = matches!(problem.loss(), LossForm::Bilinear { .. });
    let exact_route = loss_is_affine_in_x && !stacked.has_nonconvex;

    let points = if exact_route {
        let mut prog = ConvexProgram::new(total);
        prog.var_bounds = Some(bounds);
        prog.eq_constraints = stacked.eq_rows;
        prog.ineq_constraints = stacked.affine;
        prog.smooth_constraints = stacked.convex_quad;
        let LossForm::Bilinear { a, c, .. } = problem.loss() else {
            unreachable!()
        };
        let coeff = a.transpose() * u_star + c;
        let mut linear = DVector::zeros(total);
        for k in 0..n {
            linear.rows_mut(k * dim_x, dim_x).copy_from(&(-&coeff));
        }
        prog.objective.push(ObjTerm::Linear(linear));
        let sol = solve_convex(&prog, SOLVE_TOL).map_err(placement_error)?;
        sol.w_star
    } else {
        let mut prog = DcProgram::new(total, bounds);
        prog.eq_rows = stacked.eq_rows;
        for row in stacked.affine {
            prog.dc_constraints.push(DcConstraint::affine(row.coeffs, row.rhs));
        }
        for q in stacked.convex_quad {
            prog.dc_constraints.push(DcConstraint {
                convex: q.terms,
                concave: vec![],
                row: q.row,
                rhs: q.rhs,
            });
        }
        prog.dc_constraints.extend(stacked.dc_rows);
        match problem.loss() {
            LossForm::Bilinear { a, c, .. } => {
                let coeff = a.transpose() * u_star + c;
                let mut linear = DVector::zeros(total);
                for k in 0..n {
                    linear.rows_mut(k * dim_x, dim_x).copy_from(&(-&coeff));
                }
                prog.objective.push(SignedTerm {
                    term: ObjTerm::Linear(linear),
                    curvature: Curvature::Convex,
                });
            }
            LossForm::NormAffine { f, g, h } => {
                let offset = f * u_star + h;
                for k in 0..n {
                    let mut map = DMatrix::zeros(g.nrows(), total);
                    map.view_mut((0, k * dim_x), (g.nrows(), dim_x)).copy_from(g);
                    prog.objective.push(SignedTerm {
                        term: ObjTerm::smoothed_norm(map, offset.clone()),
                        curvature: Curvature::Concave,
                    });
                }
            }
        }
        let mut warm = DVector::zeros(total);
        for (k, p) in init.points().iter().enumerate() {
            warm.rows_mut(k * dim_x, dim_x).copy_from(p);
        }
        let sol = solve_dccp(&prog, &warm, &DccpParams::default()).map_err(placement_error)?;
        sol.w_star.rows(0, total).into_owned()
    };

    let dist = DiscreteDistribution::new(unstack(&points, n, dim_x, problem.support()), problem.support())?;
    let worst = expanded
        .constraints
        .iter()
        .map(|c| c.averaged_violation(dist.points()))
        .fold(0.0, f64::max);
    if worst > 1e-6 {
        return Err(MethodError::InfeasibleSamplePlacement(format!(
            "averaged constraint violation {worst:.3e} after placement"
        )));
    }
    Ok(Placement {
        dist,
        exact: exact_route,
    })
}

fn placement_error(e: SolverError) -> MethodError {
    match e {
        SolverError::Infeasible => MethodError::InfeasibleSamplePlacement(
            "no point placement satisfies the averaged constraints; \
             the sample count may be too small"
                .into(),
        ),
        SolverError::SlackResidual { max_slack } => MethodError::InfeasibleSamplePlacement(format!(
            "placement slacks stalled at {max_slack:.3e}; the sample count may be too small"
        )),
        other => MethodError::Solver(other),
    }
}

/// Detected repetition in the control history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleInfo {
    pub period: usize,
}

/// Reports the smallest period p <= len/2 such that the last 2p entries
/// repeat with pairwise infinity-norm distance at most `tol`. A period of
/// one is a fixed point, not a cycle.
pub fn detect_cycle(history: &[DVector<f64>], tol: f64) -> Option<CycleInfo> {
    let len = history.len();
    if len < 2 {
        return None;
    }
    for period in 1..=len / 2 {
        let repeats = (0..period)
            .all(|i| (&history[len - 1 - i] - &history[len - 1 - i - period]).amax() <= tol);
        if repeats {
            return Some(CycleInfo { period });
        }
    }
    None
}

/// Alternates [`min_step`] and [`max_step`] until the control settles
/// (`u_tol` in infinity norm), a cycle is detected, or the iteration
/// budget runs out. The report carries the full control history and the
/// final worst-case placement.
pub fn run_best_response(
    problem: &ValidatedProblem,
    init: &DiscreteDistribution,
    params: &SolveParams,
) -> Result<SolveReport, MethodError> {
    let n = init.len();
    let mut dist = init.clone();
    let mut u_history: Vec<DVector<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut status = ReportStatus::MaxIters;
    let mut certified = true;
    let mut value = f64::NAN;
    let mut elapsed = 0.0;

    for iteration in 0..params.max_iters {
        let started = Instant::now();
        let u = min_step(problem, &dist)?;
        u_history.push(u.clone());

        let step = if iteration > 0 {
            (&u_history[iteration] - &u_history[iteration - 1]).amax()
        } else {
            0.0
        };
        let mut exit = None;
        if iteration > 0 && step <= params.u_tol {
            exit = Some(ReportStatus::Converged);
        } else if let Some(cycle) = detect_cycle(&u_history, params.cycle_tol) {
            if cycle.period >= 2 {
                exit = Some(ReportStatus::Cycling {
                    period: cycle.period,
                });
            } else if iteration > 0 {
                exit = Some(ReportStatus::Converged);
            }
        }

        let placement = max_step(problem, &u, n, &dist)?;
        certified &= placement.exact;
        dist = placement.dist;
        let iterate = BrIterate::evaluate(problem, &u, &dist)?;
        debug_assert!(iterate.constraint_slacks.iter().all(|&s| s >= -1e-6));
        value = iterate.objective;
        elapsed += started.elapsed().as_secs_f64();
        history.push(IterRecord {
            iteration,
            objective: iterate.objective,
            violation_or_step: step,
        });

        if let Some(s) = exit {
            status = s;
            break;
        }
    }

    let iterations = history.len();
    let u_star = u_history.last().cloned().unwrap_or_else(|| DVector::zeros(problem.dim_u()));
    Ok(SolveReport {
        method: Method::BestResponse,
        status,
        u_star: u_star.iter().cloned().collect(),
        value,
        certified,
        iterations,
        per_iteration_seconds: if iterations > 0 {
            elapsed / iterations as f64
        } else {
            0.0
        },
        history,
        u_history: u_history
            .iter()
            .map(|u| u.iter().cloned().collect())
            .collect(),
        certificate: Certificate::Samples {
            points: dist
                .points()
                .iter()
                .map(|p| p.iter().cloned().collect())
                .collect(),
        },
        seed: params.seed,
        params: *params,
    })
}
