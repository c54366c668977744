//! Log-barrier interior-point method with damped Newton centering,
//! phase-I initialization, and multiplier recovery.

use nalgebra::{DMatrix, DVector, SVD};

use super::{
    canonicalize, Canonical, CanonIneq, ConvexProgram, ConvexSolution, ObjTerm, SolveStatus,
    SolverError, DEFAULT_TOL,
};

const ARMIJO: f64 = 0.25;
const BACKTRACK: f64 = 0.5;
const MAX_LINESEARCH: usize = 60;
/// Newton decrement threshold, scaled by the barrier parameter so the
/// centering accuracy is uniform in objective units.
const DECREMENT_TOL: f64 = 1e-11;
/// Objective values below this are treated as divergence to -infinity.
const DIVERGENCE_FLOOR: f64 = -1e16;

#[derive(Debug, Clone)]
pub(crate) struct BarrierOpts {
    pub tol: f64,
    pub mu: f64,
    pub max_newton_per_stage: usize,
    /// Early exit once the objective reaches this value (phase-I shortcut).
    pub stop_below: Option<f64>,
}

impl Default for BarrierOpts {
    fn default() -> Self {
        BarrierOpts {
            tol: DEFAULT_TOL,
            mu: 10.0,
            max_newton_per_stage: 200,
            stop_below: None,
        }
    }
}

fn objective_value(canon: &Canonical, w: &DVector<f64>) -> f64 {
    canon.objective.iter().map(|t| t.value(w)).sum::<f64>() + canon.constant
}

fn barrier_value(canon: &Canonical, w: &DVector<f64>, t: f64) -> Option<f64> {
    let mut v = t * canon.objective.iter().map(|term| term.value(w)).sum::<f64>();
    for c in &canon.ineqs {
        let s = c.slack(w);
        if s <= 0.0 {
            return None;
        }
        v -= s.ln();
    }
    Some(v)
}

fn solve_kkt(
    hess: &DMatrix<f64>,
    eq_a: &DMatrix<f64>,
    grad: &DVector<f64>,
    eq_residual: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = hess.nrows();
    let p = eq_a.nrows();
    let dim = n + p;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(hess);
    if p > 0 {
        kkt.view_mut((0, n), (n, p)).copy_from(&eq_a.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(eq_a);
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    if p > 0 {
        rhs.rows_mut(n, p).copy_from(eq_residual);
    }
    let scale = kkt.amax().max(1.0);
    for attempt in 0..4 {
        if attempt > 0 {
            let reg = scale * 1e-14 * 100f64.powi(attempt);
            for i in 0..n {
                kkt[(i, i)] += reg;
            }
        }
        if let Some(sol) = kkt.clone().lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
    }
    None
}

struct CenterOutcome {
    newton_iters: usize,
    eq_multipliers: DVector<f64>,
    exhausted: bool,
}

/// Minimizes `t * f(w) - sum_i log s_i(w)` over `{A w = b}` by damped
/// Newton with backtracking. `w` must be strictly feasible on entry.
fn center(canon: &Canonical, w: &mut DVector<f64>, t: f64, max_iters: usize) -> CenterOutcome {
    let n = canon.n;
    let p = canon.eq_a.nrows();
    let mut nu = DVector::zeros(p);
    let mut iters = 0;
    let mut exhausted = true;

    while iters < max_iters {
        iters += 1;

        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for term in &canon.objective {
            grad += term.gradient(w) * t;
            term.add_hessian(w, t, &mut hess);
        }
        let mut feasible = true;
        for c in &canon.ineqs {
            let s = c.slack(w);
            if s <= 0.0 {
                feasible = false;
                break;
            }
            let cg = c.gradient(w);
            grad += &cg / s;
            hess += &cg * cg.transpose() / (s * s);
            for term in &c.terms {
                term.add_hessian(w, 1.0 / s, &mut hess);
            }
        }
        if !feasible {
            // The caller handed in an infeasible point; nothing to do.
            exhausted = false;
            break;
        }

        let eq_residual = if p > 0 {
            &canon.eq_b - &canon.eq_a * &*w
        } else {
            DVector::zeros(0)
        };
        let Some(sol) = solve_kkt(&hess, &canon.eq_a, &grad, &eq_residual) else {
            exhausted = false;
            break;
        };
        let dw = sol.rows(0, n).into_owned();
        if p > 0 {
            nu = sol.rows(n, p).into_owned();
        }

        let decrement = -grad.dot(&dw);
        if decrement / 2.0 <= DECREMENT_TOL * t.max(1.0) {
            exhausted = false;
            break;
        }

        let f0 = match barrier_value(canon, w, t) {
            Some(v) => v,
            None => {
                exhausted = false;
                break;
            }
        };
        let slope = grad.dot(&dw);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..MAX_LINESEARCH {
            let trial = &*w + &dw * alpha;
            if let Some(ft) = barrier_value(canon, &trial, t) {
                if ft <= f0 + ARMIJO * alpha * slope {
                    *w = trial;
                    moved = true;
                    break;
                }
            }
            alpha *= BACKTRACK;
        }
        if !moved {
            // Stagnant line search: centered as far as floats allow.
            exhausted = false;
            break;
        }
    }

    CenterOutcome {
        newton_iters: iters,
        eq_multipliers: nu,
        exhausted: exhausted && iters >= max_iters,
    }
}

fn kkt_residual_at(canon: &Canonical, w: &DVector<f64>, t: f64, nu_scaled: &DVector<f64>) -> f64 {
    let n = canon.n;
    let p = canon.eq_a.nrows();
    let mut r = DVector::zeros(n);
    for term in &canon.objective {
        r += term.gradient(w);
    }
    let mut min_slack = f64::INFINITY;
    let mut compl: f64 = 0.0;
    for c in &canon.ineqs {
        let s = c.slack(w);
        min_slack = min_slack.min(s);
        if s > 0.0 {
            let lambda = 1.0 / (t * s);
            r += c.gradient(w) * lambda;
            compl = compl.max(lambda * s);
        }
    }
    if p > 0 {
        r += canon.eq_a.transpose() * (nu_scaled / t);
    }
    let primal_ineq = (-min_slack).max(0.0);
    let primal_eq = if p > 0 {
        (&canon.eq_a * w - &canon.eq_b).amax()
    } else {
        0.0
    };
    let stationarity = r.amax();
    stationarity.max(compl).max(primal_ineq).max(primal_eq)
}

pub(crate) struct CanonicalSolve {
    pub w: DVector<f64>,
    pub status: SolveStatus,
    pub trace: Vec<f64>,
    pub newton_iters: usize,
    pub kkt_residual: f64,
}

/// Runs the outer barrier loop from a strictly feasible start.
pub(crate) fn solve_canonical(
    canon: &Canonical,
    start: DVector<f64>,
    opts: &BarrierOpts,
) -> CanonicalSolve {
    let m = canon.ineqs.len();
    let mut w = start;
    let mut trace = Vec::new();
    let mut total = 0;
    let mut status = SolveStatus::Optimal;
    let mut t = 1.0;
    let mut nu = DVector::zeros(canon.eq_a.nrows());

    if m == 0 {
        let out = center(canon, &mut w, 1.0, opts.max_newton_per_stage);
        total += out.newton_iters;
        nu = out.eq_multipliers;
        trace.push(objective_value(canon, &w));
        if out.exhausted {
            status = SolveStatus::MaxIters;
        }
    } else {
        loop {
            let out = center(canon, &mut w, t, opts.max_newton_per_stage);
            total += out.newton_iters;
            nu = out.eq_multipliers;
            let value = objective_value(canon, &w);
            trace.push(value);
            if out.exhausted {
                status = SolveStatus::MaxIters;
                break;
            }
            if let Some(threshold) = opts.stop_below {
                if value <= threshold {
                    break;
                }
            }
            if value <= DIVERGENCE_FLOOR {
                status = SolveStatus::MaxIters;
                break;
            }
            if (m as f64) / t < opts.tol {
                break;
            }
            t *= opts.mu;
        }
    }

    let kkt_residual = kkt_residual_at(canon, &w, t, &nu);
    CanonicalSolve {
        w,
        status,
        trace,
        newton_iters: total,
        kkt_residual,
    }
}

/// Midpoint-style guess projected onto the equality constraints; simplex
/// blocks land on the uniform point because the projection of a symmetric
/// guess is symmetric.
fn initial_guess(canon: &Canonical) -> Result<DVector<f64>, SolverError> {
    let n = canon.n;
    let mut w = DVector::zeros(n);
    for i in 0..n {
        w[i] = match (canon.lower[i].is_finite(), canon.upper[i].is_finite()) {
            (true, true) => 0.5 * (canon.lower[i] + canon.upper[i]),
            (true, false) => canon.lower[i] + 1.0,
            (false, true) => canon.upper[i] - 1.0,
            (false, false) => 0.0,
        };
    }
    let p = canon.eq_a.nrows();
    if p > 0 {
        let residual = &canon.eq_b - &canon.eq_a * &w;
        let svd = SVD::new(canon.eq_a.clone(), true, true);
        let correction = svd
            .solve(&residual, 1e-12)
            .map_err(|e| SolverError::InvalidProgram(format!("equality projection failed: {e}")))?;
        w += correction;
        let res = (&canon.eq_a * &w - &canon.eq_b).amax();
        if res > 1e-8 * (1.0 + canon.eq_b.amax()) {
            return Err(SolverError::Infeasible);
        }
    }
    Ok(w)
}

/// Phase-I: minimize the uniform slack `s` over `(w, s)` with every
/// inequality relaxed by `s`. Feasibility is declared when the optimum
/// leaves `s` below -1e-10.
fn phase_one(canon: &Canonical, w0: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    let n = canon.n;
    let p = canon.eq_a.nrows();

    let mut ineqs = Vec::with_capacity(canon.ineqs.len() + 1);
    for c in &canon.ineqs {
        let mut row = DVector::zeros(n + 1);
        row.rows_mut(0, n).copy_from(&c.row);
        row[n] = -1.0;
        ineqs.push(CanonIneq {
            terms: c.terms.iter().map(|t| t.pad(1)).collect(),
            row,
            rhs: c.rhs,
        });
    }
    // Keep the relaxation bounded: s >= -1.
    let mut bound_row = DVector::zeros(n + 1);
    bound_row[n] = -1.0;
    ineqs.push(CanonIneq {
        terms: Vec::new(),
        row: bound_row,
        rhs: 1.0,
    });

    let mut eq_a = DMatrix::zeros(p, n + 1);
    if p > 0 {
        eq_a.view_mut((0, 0), (p, n)).copy_from(&canon.eq_a);
    }
    let mut slack_obj = DVector::zeros(n + 1);
    slack_obj[n] = 1.0;
    let ext = Canonical {
        n: n + 1,
        objective: vec![ObjTerm::Linear(slack_obj)],
        constant: 0.0,
        eq_a,
        eq_b: canon.eq_b.clone(),
        ineqs,
        lower: DVector::from_element(n + 1, f64::NEG_INFINITY),
        upper: DVector::from_element(n + 1, f64::INFINITY),
    };

    let worst = canon
        .ineqs
        .iter()
        .map(|c| -c.slack(w0))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(w0);
    start[n] = worst + 1.0;

    let opts = BarrierOpts {
        tol: 1e-9,
        stop_below: Some(-1e-3),
        ..Default::default()
    };
    let solved = solve_canonical(&ext, start, &opts);
    let s_star = solved.w[n];
    if s_star > -1e-10 {
        return Err(SolverError::Infeasible);
    }
    Ok(solved.w.rows(0, n).into_owned())
}

pub(crate) fn strictly_feasible_start(canon: &Canonical) -> Result<DVector<f64>, SolverError> {
    let w0 = initial_guess(canon)?;
    let min_slack = canon
        .ineqs
        .iter()
        .map(|c| c.slack(&w0))
        .fold(f64::INFINITY, f64::min);
    if min_slack >= 1e-6 {
        return Ok(w0);
    }
    phase_one(canon, &w0)
}

/// Returns a point strictly inside all inequalities and bounds (slack at
/// least 1e-8 for well-posed problems) that satisfies the equalities to
/// 1e-10, or `Infeasible`.
pub fn find_interior_point(prog: &ConvexProgram) -> Result<DVector<f64>, SolverError> {
    let canon = canonicalize(prog)?;
    strictly_feasible_start(&canon)
}

/// Solves the program to the requested tolerance. On `Optimal` the value is
/// within `tol` of the true optimum and the KKT residual is at most `tol`.
pub fn solve_convex(prog: &ConvexProgram, tol: f64) -> Result<ConvexSolution, SolverError> {
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProgram("tolerance must be positive".into()));
    }
    let canon = canonicalize(prog)?;
    let start = strictly_feasible_start(&canon)?;
    let opts = BarrierOpts {
        tol,
        ..Default::default()
    };
    let solved = solve_canonical(&canon, start, &opts);
    Ok(ConvexSolution {
        value: objective_value(&canon, &solved.w),
        w_star: solved.w,
        status: solved.status,
        kkt_residual: solved.kkt_residual,
        iterations: solved.newton_iters,
        trace: solved.trace,
    })
}

/// [`solve_convex`] at the default tolerance.
pub fn solve_convex_default(prog: &ConvexProgram) -> Result<ConvexSolution, SolverError> {
    solve_convex(prog, DEFAULT_TOL)
}
