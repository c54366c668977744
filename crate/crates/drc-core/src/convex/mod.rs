//! Self-contained smooth convex solver: linear, quadratic, and
//! smoothed-norm objectives over affine equalities, affine and smooth
//! convex inequalities, boxes, and the probability simplex.
//!
//! The method is a log-barrier interior point with damped Newton steps and
//! backtracking line search. The non-smooth 2-norm is handled by smoothing
//! `||r||` into `sqrt(||r||^2 + delta^2)`; for the default `delta = 1e-8`
//! the error is far below reporting tolerances.
//!
//! A solver call owns its mutable workspace; distinct calls may run
//! concurrently with no shared state.

mod barrier;
mod kkt;

pub use kkt::{check_kkt, KktReport};

use nalgebra::{DMatrix, DVector};
use std::ops::Range;
use thiserror::Error;

/// Default smoothing constant for 2-norm terms.
pub const NORM_SMOOTHING: f64 = 1e-8;
/// Default solve tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("constraint slacks did not converge: max residual {max_slack}")]
    SlackResidual { max_slack: f64 },
    #[error("unsupported projection function: {0}")]
    UnsupportedGFun(String),
    #[error("unsupported loss form: {0}")]
    UnsupportedLoss(String),
}

/// One summand of a convex objective (or smooth constraint left-hand side).
#[derive(Debug, Clone, PartialEq)]
pub enum ObjTerm {
    /// coeffs' w
    Linear(DVector<f64>),
    /// w' matrix w + linear' w, with `matrix` symmetric PSD.
    Quadratic {
        matrix: DMatrix<f64>,
        linear: DVector<f64>,
    },
    /// sqrt(|| map w + offset ||^2 + delta^2), delta > 0.
    SmoothedNorm {
        map: DMatrix<f64>,
        offset: DVector<f64>,
        delta: f64,
    },
}

impl ObjTerm {
    pub fn smoothed_norm(map: DMatrix<f64>, offset: DVector<f64>) -> Self {
        ObjTerm::SmoothedNorm {
            map,
            offset,
            delta: NORM_SMOOTHING,
        }
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        match self {
            ObjTerm::Linear(c) => c.dot(w),
            ObjTerm::Quadratic { matrix, linear } => (w.transpose() * matrix * w)[(0, 0)] + linear.dot(w),
            ObjTerm::SmoothedNorm { map, offset, delta } => {
                let r = map * w + offset;
                (r.norm_squared() + delta * delta).sqrt()
            }
        }
    }

    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            ObjTerm::Linear(c) => c.clone(),
            ObjTerm::Quadratic { matrix, linear } => {
                (matrix + matrix.transpose()) * w + linear
            }
            ObjTerm::SmoothedNorm { map, offset, delta } => {
                let r = map * w + offset;
                let s = (r.norm_squared() + delta * delta).sqrt();
                map.transpose() * r / s
            }
        }
    }

    /// Adds the Hessian of the term (scaled by `scale`) into `out`.
    pub fn add_hessian(&self, w: &DVector<f64>, scale: f64, out: &mut DMatrix<f64>) {
        match self {
            ObjTerm::Linear(_) => {}
            ObjTerm::Quadratic { matrix, .. } => {
                let sym = matrix + matrix.transpose();
                *out += sym * scale;
            }
            ObjTerm::SmoothedNorm { map, offset, delta } => {
                let r = map * w + offset;
                let s = (r.norm_squared() + delta * delta).sqrt();
                let mt_r = map.transpose() * &r;
                *out += (map.transpose() * map) * (scale / s);
                *out += &mt_r * mt_r.transpose() * (-scale / (s * s * s));
            }
        }
    }

    /// Pads the term with `extra` trailing zero variables.
    pub fn pad(&self, extra: usize) -> ObjTerm {
        match self {
            ObjTerm::Linear(c) => {
                let mut v = DVector::zeros(c.len() + extra);
                v.rows_mut(0, c.len()).copy_from(c);
                ObjTerm::Linear(v)
            }
            ObjTerm::Quadratic { matrix, linear } => {
                let n = linear.len();
                let mut m = DMatrix::zeros(n + extra, n + extra);
                m.view_mut((0, 0), (n, n)).copy_from(matrix);
                let mut l = DVector::zeros(n + extra);
                l.rows_mut(0, n).copy_from(linear);
                ObjTerm::Quadratic { matrix: m, linear: l }
            }
            ObjTerm::SmoothedNorm { map, offset, delta } => {
                let mut m = DMatrix::zeros(map.nrows(), map.ncols() + extra);
                m.view_mut((0, 0), (map.nrows(), map.ncols())).copy_from(map);
                ObjTerm::SmoothedNorm {
                    map: m,
                    offset: offset.clone(),
                    delta: *delta,
                }
            }
        }
    }

    fn n_vars(&self) -> usize {
        match self {
            ObjTerm::Linear(c) => c.len(),
            ObjTerm::Quadratic { linear, .. } => linear.len(),
            ObjTerm::SmoothedNorm { map, .. } => map.ncols(),
        }
    }
}

/// An affine row `coeffs' w (<=|=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
}

impl AffineRow {
    pub fn new(coeffs: DVector<f64>, rhs: f64) -> Self {
        AffineRow { coeffs, rhs }
    }
}

/// A smooth convex inequality `sum_j terms_j(w) + row' w <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothIneq {
    pub terms: Vec<ObjTerm>,
    pub row: DVector<f64>,
    pub rhs: f64,
}

/// Per-coordinate bounds; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Bounds { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        (0..self.len()).all(|i| w[i] >= self.lower[i] - tol && w[i] <= self.upper[i] + tol)
    }
}

/// Canonical smooth convex subproblem handed to the barrier solver.
#[derive(Debug, Clone, Default)]
pub struct ConvexProgram {
    pub n_vars: usize,
    /// Objective is the sum of these terms plus `objective_constant`.
    pub objective: Vec<ObjTerm>,
    pub objective_constant: f64,
    pub eq_constraints: Vec<AffineRow>,
    pub ineq_constraints: Vec<AffineRow>,
    /// Smooth convex inequality rows (quadratic or norm left-hand sides).
    pub smooth_constraints: Vec<SmoothIneq>,
    pub var_bounds: Option<Bounds>,
    /// Index range constrained to the unit simplex (sum = 1, entries >= 0).
    pub simplex_block: Option<Range<usize>>,
}

impl ConvexProgram {
    pub fn new(n_vars: usize) -> Self {
        ConvexProgram {
            n_vars,
            ..Default::default()
        }
    }

    /// Objective value at `w` (terms plus constant).
    pub fn objective_value(&self, w: &DVector<f64>) -> f64 {
        self.objective.iter().map(|t| t.value(w)).sum::<f64>() + self.objective_constant
    }

    pub fn objective_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_vars);
        for t in &self.objective {
            g += t.gradient(w);
        }
        g
    }

    /// Structural validation: dimensions, PSD quadratics (by attempted
    /// spectral factorization), positive smoothing constants.
    pub fn validate(&self) -> Result<(), SolverError> {
        let check_term = |t: &ObjTerm, what: &str| -> Result<(), SolverError> {
            if t.n_vars() != self.n_vars {
                return Err(SolverError::DimensionMismatch(format!(
                    "{what} term has {} variables, expected {}",
                    t.n_vars(),
                    self.n_vars
                )));
            }
            match t {
                ObjTerm::Quadratic { matrix, .. } => {
                    let scale = matrix.amax().max(1.0);
                    let asym = (matrix - matrix.transpose()).amax();
                    if asym > 1e-9 * scale {
                        return Err(SolverError::InvalidProgram(format!(
                            "{what} quadratic matrix is not symmetric (deviation {asym:.2e})"
                        )));
                    }
                    let eig = matrix.clone().symmetric_eigen();
                    let min_eig = eig.eigenvalues.min();
                    if min_eig < -1e-8 * scale {
                        return Err(SolverError::InvalidProgram(format!(
                            "{what} quadratic matrix is not PSD (min eigenvalue {min_eig:.2e})"
                        )));
                    }
                }
                ObjTerm::SmoothedNorm { map, offset, delta } => {
                    if *delta <= 0.0 {
                        return Err(SolverError::InvalidProgram(
                            "smoothed norm requires delta > 0".into(),
                        ));
                    }
                    if map.nrows() != offset.len() {
                        return Err(SolverError::DimensionMismatch(
                            "smoothed norm offset length disagrees with map rows".into(),
                        ));
                    }
                }
                ObjTerm::Linear(_) => {}
            }
            Ok(())
        };
        for t in &self.objective {
            check_term(t, "objective")?;
        }
        for (i, row) in self.eq_constraints.iter().enumerate() {
            if row.coeffs.len() != self.n_vars {
                return Err(SolverError::DimensionMismatch(format!(
                    "equality row {i} has length {}",
                    row.coeffs.len()
                )));
            }
        }
        for (i, row) in self.ineq_constraints.iter().enumerate() {
            if row.coeffs.len() != self.n_vars {
                return Err(SolverError::DimensionMismatch(format!(
                    "inequality row {i} has length {}",
                    row.coeffs.len()
                )));
            }
        }
        for c in &self.smooth_constraints {
            if c.row.len() != self.n_vars {
                return Err(SolverError::DimensionMismatch(
                    "smooth constraint row length mismatch".into(),
                ));
            }
            for t in &c.terms {
                check_term(t, "constraint")?;
            }
        }
        if let Some(b) = &self.var_bounds {
            if b.lower.len() != self.n_vars || b.upper.len() != self.n_vars {
                return Err(SolverError::DimensionMismatch(
                    "bounds length disagrees with variable count".into(),
                ));
            }
        }
        if let Some(r) = &self.simplex_block {
            if r.end > self.n_vars || r.start >= r.end {
                return Err(SolverError::InvalidProgram(
                    "simplex block range is out of bounds".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

/// Solver output. `trace` records outer progress values: barrier-stage
/// objectives for `solve_convex`, surrogate optima for `solve_dccp`.
#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub w_star: DVector<f64>,
    pub value: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// One inequality in canonical form: `terms(w) + row' w <= rhs`.
#[derive(Debug, Clone)]
pub(crate) struct CanonIneq {
    pub terms: Vec<ObjTerm>,
    pub row: DVector<f64>,
    pub rhs: f64,
}

impl CanonIneq {
    pub fn slack(&self, w: &DVector<f64>) -> f64 {
        self.rhs - self.row.dot(w) - self.terms.iter().map(|t| t.value(w)).sum::<f64>()
    }

    /// Gradient of the constraint function (negative slack gradient).
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = self.row.clone();
        for t in &self.terms {
            g += t.gradient(w);
        }
        g
    }
}

/// Preprocessed program: bounds and the simplex block are expanded into
/// rows so the barrier treats every inequality uniformly.
#[derive(Debug, Clone)]
pub(crate) struct Canonical {
    pub n: usize,
    pub objective: Vec<ObjTerm>,
    pub constant: f64,
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
    pub ineqs: Vec<CanonIneq>,
    /// Effective bounds after merging the simplex block, used for the
    /// initial interior guess.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

pub(crate) fn canonicalize(prog: &ConvexProgram) -> Result<Canonical, SolverError> {
    prog.validate()?;
    let n = prog.n_vars;

    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    if let Some(b) = &prog.var_bounds {
        lower.copy_from(&b.lower);
        upper.copy_from(&b.upper);
    }

    let mut eq_rows: Vec<AffineRow> = prog.eq_constraints.clone();
    if let Some(r) = &prog.simplex_block {
        let mut coeffs = DVector::zeros(n);
        for i in r.clone() {
            coeffs[i] = 1.0;
            lower[i] = lower[i].max(0.0);
        }
        eq_rows.push(AffineRow::new(coeffs, 1.0));
    }

    let mut ineqs: Vec<CanonIneq> = Vec::new();
    for row in &prog.ineq_constraints {
        ineqs.push(CanonIneq {
            terms: Vec::new(),
            row: row.coeffs.clone(),
            rhs: row.rhs,
        });
    }
    for c in &prog.smooth_constraints {
        ineqs.push(CanonIneq {
            terms: c.terms.clone(),
            row: c.row.clone(),
            rhs: c.rhs,
        });
    }
    for i in 0..n {
        if lower[i].is_finite() {
            let mut row = DVector::zeros(n);
            row[i] = -1.0;
            ineqs.push(CanonIneq {
                terms: Vec::new(),
                row,
                rhs: -lower[i],
            });
        }
        if upper[i].is_finite() {
            let mut row = DVector::zeros(n);
            row[i] = 1.0;
            ineqs.push(CanonIneq {
                terms: Vec::new(),
                row,
                rhs: upper[i],
            });
        }
    }

    let p = eq_rows.len();
    let mut eq_a = DMatrix::zeros(p, n);
    let mut eq_b = DVector::zeros(p);
    for (i, row) in eq_rows.iter().enumerate() {
        eq_a.row_mut(i).copy_from(&row.coeffs.transpose());
        eq_b[i] = row.rhs;
    }

    Ok(Canonical {
        n,
        objective: prog.objective.clone(),
        constant: prog.objective_constant,
        eq_a,
        eq_b,
        ineqs,
        lower,
        upper,
    })
}

pub use barrier::{find_interior_point, solve_convex, solve_convex_default};
