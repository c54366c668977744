//! Cutting-set method for the dualized semi-infinite reformulation:
//! alternate a finite master problem over the control, the multipliers,
//! and the epigraph variable with a pessimization oracle over the
//! support box, tightening the master with the worst-case point found.
//!
//! Two-sided windows enter the master through the transformed
//! multipliers `alpha = l1 + l2`, `beta = l1 - l2` (one pair per window);
//! one-sided constraints keep a plain nonnegative multiplier.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assemble::{input_layout, pad_row};
use crate::convex::{
    solve_convex, AffineRow, Bounds, ConvexProgram, ObjTerm, SmoothIneq, SolverError,
};
use crate::dccp::{
    convexify, dc_split, solve_dccp_multistart, DccpParams, FixedArg, OptSense, WeightedProjection,
};
use crate::problem::{
    ConstraintOrigin, ExpandedConstraint, ExpandedConstraints, LossForm, PairInfo, ProjectionFn,
    ValidatedProblem,
};
use crate::report::{Certificate, IterRecord, Method, ReportStatus, SolveParams, SolveReport};
use crate::scenarios::uniform_box_samples;
use crate::MethodError;

const MASTER_TOL: f64 = 1e-10;
const PESSIMIZE_TOL: f64 = 1e-9;
/// Pair multipliers on squared projections this slightly negative are
/// treated as zero when classifying the pessimization as concave.
const CONCAVITY_SLOP: f64 = 1e-9;

/// Multipliers attached to the ambiguity constraints: `(alpha, beta)`
/// per two-sided pair and a plain `lambda` per one-sided constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterDuals {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl MasterDuals {
    pub fn zeros(n_pairs: usize, n_standalone: usize) -> Self {
        MasterDuals {
            alpha: vec![0.0; n_pairs],
            beta: vec![0.0; n_pairs],
            lambda: vec![0.0; n_standalone],
        }
    }
}

/// Maps a pair of one-sided multipliers to the transformed coordinates.
pub fn pair_duals_to_alpha_beta(l1: f64, l2: f64) -> (f64, f64) {
    (l1 + l2, l1 - l2)
}

/// Inverse map; produces nonnegative multipliers exactly when
/// `alpha >= |beta|`.
pub fn alpha_beta_to_pair_duals(alpha: f64, beta: f64) -> (f64, f64) {
    (0.5 * (alpha + beta), 0.5 * (alpha - beta))
}

/// One iterate of the master problem.
#[derive(Debug, Clone)]
pub struct MasterState {
    pub cut_points: Vec<DVector<f64>>,
    pub u: DVector<f64>,
    pub duals: MasterDuals,
    pub t: f64,
    pub master_value: f64,
}

/// Pessimization outcome: the worst-case point, the attained violation
/// of the master constraint, and whether the inner problem was solved
/// exactly (concave) or locally via the convex-concave procedure.
#[derive(Debug, Clone)]
pub struct CutReport {
    pub violation: f64,
    pub x_star: DVector<f64>,
    pub certified: bool,
}

/// Variable layout and constraint data of the master problem in
/// `(u, alpha, beta, lambda, t)`.
#[derive(Debug, Clone)]
pub struct MasterTemplate {
    dim_u: usize,
    pairs: Vec<PairInfo>,
    standalone: Vec<ExpandedConstraint>,
    input_lower: DVector<f64>,
    input_upper: DVector<f64>,
    input_eq_rows: Vec<AffineRow>,
    whole_simplex: bool,
    loss: LossForm,
}

impl MasterTemplate {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_standalone(&self) -> usize {
        self.standalone.len()
    }

    pub fn n_vars(&self) -> usize {
        // u, alpha, beta, lambda, t.
        self.dim_u + 2 * self.pairs.len() + self.standalone.len() + 1
    }

    fn alpha_offset(&self) -> usize {
        self.dim_u
    }

    fn beta_offset(&self) -> usize {
        self.dim_u + self.pairs.len()
    }

    fn lambda_offset(&self) -> usize {
        self.dim_u + 2 * self.pairs.len()
    }

    fn t_index(&self) -> usize {
        self.n_vars() - 1
    }
}

/// Builds the master template from the expanded constraints, keeping one
/// `(alpha, beta)` slot per two-sided pair and a plain multiplier per
/// one-sided constraint.
pub fn alpha_beta_transform(
    problem: &ValidatedProblem,
    expanded: &ExpandedConstraints,
) -> Result<MasterTemplate, MethodError> {
    let mut seen_upper = vec![false; expanded.pairs.len()];
    let mut seen_lower = vec![false; expanded.pairs.len()];
    let mut standalone = Vec::new();
    for c in &expanded.constraints {
        match c.origin {
            ConstraintOrigin::Standalone { .. } => standalone.push(c.clone()),
            ConstraintOrigin::PairUpper { pair } => {
                if pair >= expanded.pairs.len() {
                    return Err(MethodError::MissingPairing(format!(
                        "constraint references pair {pair} of {}",
                        expanded.pairs.len()
                    )));
                }
                seen_upper[pair] = true;
            }
            ConstraintOrigin::PairLower { pair } => {
                if pair >= expanded.pairs.len() {
                    return Err(MethodError::MissingPairing(format!(
                        "constraint references pair {pair} of {}",
                        expanded.pairs.len()
                    )));
                }
                seen_lower[pair] = true;
            }
        }
    }
    for (i, (&up, &lo)) in seen_upper.iter().zip(seen_lower.iter()).enumerate() {
        if !(up && lo) {
            return Err(MethodError::MissingPairing(format!(
                "pair {i} is missing one of its one-sided halves"
            )));
        }
    }
    for c in standalone.iter().chain(expanded.constraints.iter()) {
        match c.g {
            ProjectionFn::Identity | ProjectionFn::Power(1) | ProjectionFn::Power(2) => {}
            ProjectionFn::Power(p) => {
                return Err(MethodError::Solver(SolverError::UnsupportedGFun(format!(
                    "power exponent {p} exceeds the solver term family (1 and 2 are supported)"
                ))))
            }
            ProjectionFn::IndicatorGeq(_) => {
                return Err(MethodError::Solver(SolverError::UnsupportedGFun(
                    "indicator projections make the master mixed-integer".into(),
                )))
            }
        }
    }

    let layout = input_layout(problem.input_set(), problem.dim_u());
    Ok(MasterTemplate {
        dim_u: problem.dim_u(),
        pairs: expanded.pairs.clone(),
        standalone,
        input_lower: layout.lower,
        input_upper: layout.upper,
        input_eq_rows: layout.eq_rows,
        whole_simplex: layout.whole_simplex,
        loss: problem.loss().clone(),
    })
}

/// Assembles the finite relaxation: minimize `t` subject to one master
/// constraint per cut point (affine for the bilinear loss, a smoothed
/// norm epigraph for the norm loss) and the dual cone rows.
pub fn build_master(
    template: &MasterTemplate,
    cuts: &[DVector<f64>],
) -> Result<ConvexProgram, MethodError> {
    if cuts.is_empty() {
        return Err(MethodError::EmptyCutSet);
    }
    let n = template.n_vars();
    let dim_u = template.dim_u;
    let np = template.pairs.len();
    let ns = template.standalone.len();
    let t_index = template.t_index();

    let mut prog = ConvexProgram::new(n);
    let mut cost = DVector::zeros(n);
    cost[t_index] = 1.0;
    prog.objective.push(ObjTerm::Linear(cost));

    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    lower.rows_mut(0, dim_u).copy_from(&template.input_lower);
    upper.rows_mut(0, dim_u).copy_from(&template.input_upper);
    for i in 0..np {
        lower[template.alpha_offset() + i] = 0.0;
    }
    for j in 0..ns {
        lower[template.lambda_offset() + j] = 0.0;
    }
    prog.var_bounds = Some(Bounds::boxed(lower, upper));
    if template.whole_simplex {
        prog.simplex_block = Some(0..dim_u);
    } else {
        for row in &template.input_eq_rows {
            prog.eq_constraints
                .push(AffineRow::new(pad_row(&row.coeffs, n), row.rhs));
        }
    }

    // Dual cone of the two-sided pairs: alpha >= |beta| ensures both
    // recovered one-sided multipliers are nonnegative.
    for i in 0..np {
        let mut plus = DVector::zeros(n);
        plus[template.alpha_offset() + i] = -1.0;
        plus[template.beta_offset() + i] = -1.0;
        prog.ineq_constraints.push(AffineRow::new(plus, 0.0));
        let mut minus = DVector::zeros(n);
        minus[template.alpha_offset() + i] = -1.0;
        minus[template.beta_offset() + i] = 1.0;
        prog.ineq_constraints.push(AffineRow::new(minus, 0.0));
    }

    for cut in cuts {
        let mut row = DVector::zeros(n);
        for (i, pair) in template.pairs.iter().enumerate() {
            row[template.alpha_offset() + i] = pair.radius;
            row[template.beta_offset() + i] = pair.center - pair.g.eval(pair.direction.dot(cut));
        }
        for (j, sc) in template.standalone.iter().enumerate() {
            row[template.lambda_offset() + j] =
                sc.bound - sc.sign * sc.g.eval(sc.direction.dot(cut));
        }
        row[t_index] = -1.0;

        match &template.loss {
            LossForm::Bilinear { a, b, c, d } => {
                let coeff = a * cut + b;
                row.rows_mut(0, dim_u).copy_from(&coeff);
                prog.ineq_constraints
                    .push(AffineRow::new(row, -(c.dot(cut) + d)));
            }
            LossForm::NormAffine { f, g, h } => {
                let mut map = DMatrix::zeros(f.nrows(), n);
                map.view_mut((0, 0), (f.nrows(), dim_u)).copy_from(f);
                let offset = g * cut + h;
                prog.smooth_constraints.push(SmoothIneq {
                    terms: vec![ObjTerm::smoothed_norm(map, offset)],
                    row,
                    rhs: 0.0,
                });
            }
        }
    }
    Ok(prog)
}

/// Solves the master over the current cut set.
pub fn solve_master(
    template: &MasterTemplate,
    cuts: &[DVector<f64>],
) -> Result<MasterState, MethodError> {
    let prog = build_master(template, cuts)?;
    let sol = solve_convex(&prog, MASTER_TOL)?;
    let w = &sol.w_star;
    let np = template.pairs.len();
    let ns = template.standalone.len();
    let duals = MasterDuals {
        alpha: (0..np).map(|i| w[template.alpha_offset() + i]).collect(),
        beta: (0..np).map(|i| w[template.beta_offset() + i]).collect(),
        lambda: (0..ns).map(|j| w[template.lambda_offset() + j]).collect(),
    };
    let t = w[template.t_index()];
    Ok(MasterState {
        cut_points: cuts.to_vec(),
        u: w.rows(0, template.dim_u).into_owned(),
        duals,
        t,
        master_value: t,
    })
}

/// Master-constraint left-hand side at `(u, duals, t)` for a given
/// uncertain point. The pessimization maximizes this over the box.
pub fn dual_objective(
    problem: &ValidatedProblem,
    expanded: &ExpandedConstraints,
    u: &DVector<f64>,
    duals: &MasterDuals,
    t: f64,
    x: &DVector<f64>,
) -> Result<f64, MethodError> {
    let mut value = problem.loss().eval(u, x)?;
    for (i, pair) in expanded.pairs.iter().enumerate() {
        value += duals.beta[i] * (pair.center - pair.g.eval(pair.direction.dot(x)));
        value += duals.alpha[i] * pair.radius;
    }
    let mut j = 0;
    for c in &expanded.constraints {
        if matches!(c.origin, ConstraintOrigin::Standalone { .. }) {
            value += duals.lambda[j] * (c.bound - c.sign * c.g.eval(c.direction.dot(x)));
            j += 1;
        }
    }
    Ok(value - t)
}

/// Maximizes the master-constraint left-hand side over the support box.
/// Concave objectives (bilinear loss with identity projections, or
/// squared projections carrying a nonnegative effective multiplier) are
/// solved exactly; anything else routes through the convex-concave
/// procedure restarted from `inits`, flagged `certified = false`.
pub fn pessimize(
    problem: &ValidatedProblem,
    u: &DVector<f64>,
    duals: &MasterDuals,
    t: f64,
    inits: &[DVector<f64>],
) -> Result<CutReport, MethodError> {
    let expanded = problem.expand_two_sided();
    let mut weights = Vec::new();
    for (i, pair) in expanded.pairs.iter().enumerate() {
        let mut weight = -duals.beta[i];
        if matches!(pair.g, ProjectionFn::Power(2)) && weight > 0.0 && weight <= CONCAVITY_SLOP {
            weight = 0.0;
        }
        weights.push(WeightedProjection {
            weight,
            direction: pair.direction.clone(),
            g: pair.g.clone(),
        });
    }
    let mut j = 0;
    for c in &expanded.constraints {
        if matches!(c.origin, ConstraintOrigin::Standalone { .. }) {
            let mut weight = -duals.lambda[j] * c.sign;
            if matches!(c.g, ProjectionFn::Power(2)) && weight > 0.0 && weight <= CONCAVITY_SLOP {
                weight = 0.0;
            }
            weights.push(WeightedProjection {
                weight,
                direction: c.direction.clone(),
                g: c.g.clone(),
            });
            j += 1;
        }
    }

    let support = problem.support();
    let bounds = Bounds::boxed(support.lower.clone(), support.upper.clone());
    let dc = dc_split(
        problem.loss(),
        &FixedArg::Control(u.clone()),
        OptSense::Maximize,
        &weights,
        bounds,
    )?;

    let (x_raw, certified) = if dc.is_convex() {
        let midpoint = DVector::from_fn(support.dim(), |i, _| {
            0.5 * (support.lower[i] + support.upper[i])
        });
        let cp = convexify(&dc, &midpoint);
        let sol = solve_convex(&cp, PESSIMIZE_TOL)?;
        (sol.w_star, true)
    } else {
        if inits.is_empty() {
            return Err(MethodError::Solver(SolverError::InvalidProgram(
                "non-concave pessimization needs restart points".into(),
            )));
        }
        let sol = solve_dccp_multistart(&dc, inits, &DccpParams::default())?;
        (sol.w_star.rows(0, support.dim()).into_owned(), false)
    };

    let x_star = support.clamp(&x_raw);
    let violation = dual_objective(problem, &expanded, u, duals, t, &x_star)?;
    Ok(CutReport {
        violation,
        x_star,
        certified,
    })
}

/// Runs the cutting-set loop from an initial nonempty cut set until the
/// pessimizer finds no violation above `feas_tol` or the cut budget is
/// exhausted. On convergence the returned `(u, duals, t)` is feasible for
/// the dualized semi-infinite program within `feas_tol`, and `t` is a
/// certified upper bound on the min-max value when the final
/// pessimization was exact.
pub fn run_cutting_set(
    problem: &ValidatedProblem,
    init_cuts: &[DVector<f64>],
    params: &SolveParams,
) -> Result<SolveReport, MethodError> {
    if init_cuts.is_empty() {
        return Err(MethodError::EmptyCutSet);
    }
    let expanded = problem.expand_two_sided();
    let template = alpha_beta_transform(problem, &expanded)?;
    let support = problem.support();
    let mut cuts: Vec<DVector<f64>> = init_cuts.iter().map(|x| support.clamp(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut history = Vec::new();
    let mut u_history = Vec::new();
    let mut status = ReportStatus::MaxIters;
    let mut last: Option<(MasterState, CutReport)> = None;
    let mut elapsed = 0.0;

    for iteration in 0..params.max_cuts {
        let started = Instant::now();
        let master = solve_master(&template, &cuts)?;
        let inits = uniform_box_samples(
            &support.lower,
            &support.upper,
            params.dccp_restarts.max(1),
            &mut rng,
        );
        let cut = pessimize(problem, &master.u, &master.duals, master.t, &inits)?;
        elapsed += started.elapsed().as_secs_f64();

        history.push(IterRecord {
            iteration,
            objective: master.t,
            violation_or_step: cut.violation,
        });
        u_history.push(master.u.iter().cloned().collect::<Vec<f64>>());
        let converged = cut.violation <= params.feas_tol;
        let x_star = cut.x_star.clone();
        last = Some((master, cut));
        if converged {
            status = ReportStatus::Converged;
            break;
        }
        cuts.push(x_star);
    }

    let (state, cut) = last.expect("at least one iteration ran");
    let iterations = history.len();
    Ok(SolveReport {
        method: Method::CuttingSet,
        status,
        u_star: state.u.iter().cloned().collect(),
        value: state.t,
        certified: status == ReportStatus::Converged && cut.certified,
        iterations,
        per_iteration_seconds: if iterations > 0 {
            elapsed / iterations as f64
        } else {
            0.0
        },
        history,
        u_history,
        certificate: Certificate::Duals {
            alpha: state.duals.alpha.clone(),
            beta: state.duals.beta.clone(),
            lambda: state.duals.lambda.clone(),
            t: state.t,
        },
        seed: params.seed,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::validate_problem;
    use crate::scenarios::{
        planning_system, portfolio_lp_oracle, portfolio_problem, trajectory_problem,
        volatility_problem,
    };
    use approx::assert_relative_eq;
    use nalgebra::Vector2;
    use rand::Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn portfolio(radii: [f64; 3]) -> ValidatedProblem {
        validate_problem(portfolio_problem(&radii).unwrap()).unwrap()
    }

    fn initial_cuts(problem: &ValidatedProblem, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        uniform_box_samples(
            &problem.support().lower,
            &problem.support().upper,
            n,
            &mut rng,
        )
    }

    #[test]
    fn dual_bijection_examples() {
        assert_eq!(pair_duals_to_alpha_beta(1.0, 0.0), (1.0, 1.0));
        assert_eq!(alpha_beta_to_pair_duals(1.0, 1.0), (1.0, 0.0));
        assert_eq!(pair_duals_to_alpha_beta(0.0, 0.0), (0.0, 0.0));
        let (l1, l2) = alpha_beta_to_pair_duals(2.0, -1.0);
        assert_relative_eq!(l1, 0.5);
        assert_relative_eq!(l2, 1.5);
        assert!(l1 >= 0.0 && l2 >= 0.0);
    }

    #[test]
    fn dual_bijection_round_trips_randomly() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        for _ in 0..500 {
            let l1: f64 = rng.gen_range(0.0..5.0);
            let l2: f64 = rng.gen_range(0.0..5.0);
            let (a, b) = pair_duals_to_alpha_beta(l1, l2);
            assert!(a >= b.abs() - 1e-15);
            let (r1, r2) = alpha_beta_to_pair_duals(a, b);
            assert!((r1 - l1).abs() <= 1e-12 && (r2 - l2).abs() <= 1e-12);
        }
    }

    // The transformed constraint value agrees with the one built from the
    // one-sided multipliers on random inputs.
    #[test]
    fn transformed_constraint_preserves_value() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let expanded = problem.expand_two_sided();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let u = dv(&[0.2, 0.3, 0.5]);
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let l1: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
            let l2: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
            let t = rng.gen_range(-1.0..1.0);

            // One-sided form: l(u,x) - sum lambda_k (sign_k g_k - bound_k) - t.
            let mut one_sided = problem.loss().eval(&u, &x).unwrap() - t;
            for (k, c) in expanded.constraints.iter().enumerate() {
                let lambda = match c.origin {
                    ConstraintOrigin::PairUpper { pair } => l1[pair],
                    ConstraintOrigin::PairLower { pair } => l2[pair],
                    _ => 0.0,
                };
                let _ = k;
                one_sided -= lambda * (c.sign * c.g.eval(c.direction.dot(&x)) - c.bound);
            }

            let duals = MasterDuals {
                alpha: (0..3).map(|i| l1[i] + l2[i]).collect(),
                beta: (0..3).map(|i| l1[i] - l2[i]).collect(),
                lambda: vec![],
            };
            let transformed = dual_objective(&problem, &expanded, &u, &duals, t, &x).unwrap();
            assert!(
                (one_sided - transformed).abs() <= 1e-12,
                "{one_sided} vs {transformed}"
            );
        }
    }

    #[test]
    fn missing_pairing_is_detected() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let mut expanded = problem.expand_two_sided();
        expanded.constraints.remove(1); // drop the lower half of pair 0
        match alpha_beta_transform(&problem, &expanded) {
            Err(MethodError::MissingPairing(_)) => {}
            other => panic!("expected MissingPairing, got {other:?}"),
        }
    }

    #[test]
    fn one_cut_master_with_a_window_feasible_point() {
        // With radii 2 the single-point distribution at (1,1,1) satisfies
        // every window, so the master value is finite: min over the
        // simplex of -u'(1,1,1) is exactly -1.
        let problem = portfolio([2.0, 2.0, 2.0]);
        let expanded = problem.expand_two_sided();
        let template = alpha_beta_transform(&problem, &expanded).unwrap();
        let state = solve_master(&template, &[dv(&[1.0, 1.0, 1.0])]).unwrap();
        assert_relative_eq!(state.t, -1.0, epsilon = 1e-6);
        assert_relative_eq!(state.master_value, state.t);
    }

    #[test]
    fn duplicate_cut_does_not_move_the_optimum() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let expanded = problem.expand_two_sided();
        let template = alpha_beta_transform(&problem, &expanded).unwrap();
        let point = dv(&[0.3, -0.1, 0.2]);
        let once = solve_master(&template, &[point.clone()]).unwrap();
        let twice = solve_master(&template, &[point.clone(), point]).unwrap();
        assert!((once.t - twice.t).abs() <= 1e-9, "{} vs {}", once.t, twice.t);
    }

    #[test]
    fn trajectory_master_carries_the_norm_epigraph() {
        let spec = trajectory_problem(5, Vector2::zeros());
        let problem = validate_problem(spec).unwrap();
        let expanded = problem.expand_two_sided();
        let template = alpha_beta_transform(&problem, &expanded).unwrap();
        let master = build_master(&template, &[dv(&[0.0, 0.0])]).unwrap();
        assert_eq!(master.smooth_constraints.len(), 1);
        let ObjTerm::SmoothedNorm { offset, .. } = &master.smooth_constraints[0].terms[0] else {
            panic!("expected a smoothed norm term");
        };
        // G x vanishes at the origin cut, leaving the loss offset h.
        let LossForm::NormAffine { h, .. } = problem.loss() else {
            panic!()
        };
        assert_relative_eq!((offset - h).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pessimize_drives_the_held_asset_down() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let duals = MasterDuals::zeros(3, 0);
        let cut = pessimize(&problem, &dv(&[0.0, 0.0, 1.0]), &duals, 0.0, &[]).unwrap();
        assert!(cut.certified);
        assert_relative_eq!(cut.violation, 1.0, epsilon = 1e-6);
        assert_relative_eq!(cut.x_star[2], -1.0, epsilon = 1e-6);
    }

    #[test]
    fn huge_epigraph_value_leaves_no_violation() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let duals = MasterDuals::zeros(3, 0);
        let cut = pessimize(&problem, &dv(&[0.0, 0.0, 1.0]), &duals, 1e9, &[]).unwrap();
        assert!(cut.violation < 0.0);
    }

    #[test]
    fn trajectory_pessimization_matches_corner_enumeration() {
        let horizon = 50;
        let spec = trajectory_problem(horizon, Vector2::zeros());
        let problem = validate_problem(spec).unwrap();
        let duals = MasterDuals::zeros(2, 0);
        let zero_u = DVector::zeros(horizon);
        let inits = initial_cuts(&problem, 8, 11);
        let cut = pessimize(&problem, &zero_u, &duals, 0.0, &inits).unwrap();
        assert!(!cut.certified);

        // Independent oracle: the free response norm is maximized at a
        // corner of the box.
        let sys = planning_system(horizon, Vector2::zeros());
        let zero = vec![0.0; horizon];
        let mut corner_best: f64 = 0.0;
        for sx in [-0.3, 0.3] {
            for sy in [-0.3, 0.3] {
                let end =
                    crate::scenarios::closed_form_state(&sys, Vector2::new(sx, sy), &zero, horizon)
                        .unwrap();
                corner_best = corner_best.max(end.norm());
            }
        }
        assert_relative_eq!(cut.violation, corner_best, epsilon = 1e-6);
    }

    #[test]
    fn loose_windows_settle_at_the_box_corner_value() {
        let problem = portfolio([2.0, 2.0, 2.0]);
        let report =
            run_cutting_set(&problem, &initial_cuts(&problem, 50, 0), &SolveParams::default())
                .unwrap();
        assert_eq!(report.status, ReportStatus::Converged);
        assert!((report.value - 1.0).abs() <= 1e-3, "value {}", report.value);
        assert!(report.certified);
    }

    #[test]
    fn paper_windows_pick_the_third_asset() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let report =
            run_cutting_set(&problem, &initial_cuts(&problem, 50, 0), &SolveParams::default())
                .unwrap();
        assert_eq!(report.status, ReportStatus::Converged);
        assert!((report.u_star[2] - 1.0).abs() <= 1e-3, "u = {:?}", report.u_star);
        let oracle = portfolio_lp_oracle(&[0.4, 0.2, 0.1]);
        assert!((report.value + oracle.value).abs() <= 1e-4, "value {}", report.value);

        // Master values are non-decreasing as cuts accumulate.
        for pair in report.history.windows(2) {
            assert!(pair[1].objective >= pair[0].objective - 1e-9);
        }
    }

    #[test]
    fn tight_windows_pick_the_first_asset() {
        let problem = portfolio([1e-3, 1e-3, 1e-3]);
        let report =
            run_cutting_set(&problem, &initial_cuts(&problem, 50, 0), &SolveParams::default())
                .unwrap();
        assert_eq!(report.status, ReportStatus::Converged);
        assert!((report.u_star[0] - 1.0).abs() <= 1e-3, "u = {:?}", report.u_star);
    }

    #[test]
    fn termination_certificate_holds() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let params = SolveParams::default();
        let report =
            run_cutting_set(&problem, &initial_cuts(&problem, 50, 0), &params).unwrap();
        let Certificate::Duals { alpha, beta, lambda, t } = &report.certificate else {
            panic!("expected duals");
        };
        let duals = MasterDuals {
            alpha: alpha.clone(),
            beta: beta.clone(),
            lambda: lambda.clone(),
        };
        let u = dv(&report.u_star);
        let recheck = pessimize(&problem, &u, &duals, *t, &[]).unwrap();
        assert!(recheck.violation <= params.feas_tol + 1e-9);
    }

    #[test]
    fn volatility_master_converges_to_the_third_asset() {
        let problem = validate_problem(volatility_problem()).unwrap();
        let report =
            run_cutting_set(&problem, &initial_cuts(&problem, 50, 0), &SolveParams::default())
                .unwrap();
        assert_eq!(report.status, ReportStatus::Converged);
        assert!((report.u_star[2] - 1.0).abs() <= 1e-3, "u = {:?}", report.u_star);
    }

    #[test]
    fn every_cut_point_stays_in_the_box() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        let expanded = problem.expand_two_sided();
        let template = alpha_beta_transform(&problem, &expanded).unwrap();
        let mut cuts = initial_cuts(&problem, 10, 5);
        for _ in 0..5 {
            let state = solve_master(&template, &cuts).unwrap();
            let cut = pessimize(&problem, &state.u, &state.duals, state.t, &[]).unwrap();
            assert!(problem.support().contains(&cut.x_star, 0.0));
            if cut.violation <= 1e-6 {
                break;
            }
            cuts.push(cut.x_star);
        }
    }

    #[test]
    fn empty_cut_set_is_rejected() {
        let problem = portfolio([0.4, 0.2, 0.1]);
        match run_cutting_set(&problem, &[], &SolveParams::default()) {
            Err(MethodError::EmptyCutSet) => {}
            other => panic!("expected EmptyCutSet, got {other:?}"),
        }
    }
}
