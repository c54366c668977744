//! Problem data model: loss forms, input and support sets, projection
//! constraints, validation, and the two-sided constraint expansion.
//!
//! All types are immutable after validation and safe to share across
//! concurrent solver runs.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("support box is empty in coordinate {coord}: lower {lower} >= upper {upper}")]
    EmptySupport { coord: usize, lower: f64, upper: f64 },
    #[error("constraint {index} has negative radius {radius}")]
    NegativeRadius { index: usize, radius: f64 },
    #[error("power exponent must be at least 1, got {exponent}")]
    InvalidExponent { exponent: u32 },
    #[error("input box is empty in coordinate {coord}: lower {lower} > upper {upper}")]
    EmptyInputBox { coord: usize, lower: f64, upper: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time index {index} out of range 0..={horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },
}

/// Scalar function applied to the one-dimensional projection `q' x`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionFn {
    /// g(z) = z
    Identity,
    /// g(z) = z^p, raw (uncentered) moment of the projection.
    Power(u32),
    /// g(z) = 1 if z >= threshold else 0. Representable but rejected by
    /// both solvers: pessimization would become mixed-integer.
    IndicatorGeq(f64),
}

impl ProjectionFn {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ProjectionFn::Identity => z,
            ProjectionFn::Power(p) => z.powi(*p as i32),
            ProjectionFn::IndicatorGeq(threshold) => {
                if z >= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Same-module alias for the spec-level operation name.
pub fn evaluate_g(g: &ProjectionFn, z: f64) -> f64 {
    g.eval(z)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// |E[g(q'x)] - center| <= radius
    TwoSided { center: f64, radius: f64 },
    /// E[g(q'x)] <= level
    UpperBound { level: f64 },
}

/// One ambiguity-set constraint on the distribution of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConstraint {
    /// Projection direction; length must equal `dim_x`.
    pub direction: DVector<f64>,
    pub g: ProjectionFn,
    pub kind: ConstraintKind,
}

/// Loss forms are a closed enumeration so the solvers can derive convexity
/// and difference-of-convex structure symbolically.
#[derive(Debug, Clone, PartialEq)]
pub enum LossForm {
    /// l(u, x) = u' A x + b'u + c'x + d
    Bilinear {
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        d: f64,
    },
    /// l(u, x) = || F u + G x + h ||_2, jointly convex in (u, x).
    NormAffine {
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
    },
}

impl LossForm {
    /// Evaluates l(u, x), checking dimensions.
    pub fn eval(&self, u: &DVector<f64>, x: &DVector<f64>) -> Result<f64, ProblemError> {
        match self {
            LossForm::Bilinear { a, b, c, d } => {
                if a.nrows() != u.len() || a.ncols() != x.len() {
                    return Err(ProblemError::DimensionMismatch(format!(
                        "bilinear matrix is {}x{}, inputs are {} and {}",
                        a.nrows(),
                        a.ncols(),
                        u.len(),
                        x.len()
                    )));
                }
                if b.len() != u.len() || c.len() != x.len() {
                    return Err(ProblemError::DimensionMismatch(
                        "bilinear linear parts disagree with input lengths".into(),
                    ));
                }
                Ok((u.transpose() * a * x)[(0, 0)] + b.dot(u) + c.dot(x) + d)
            }
            LossForm::NormAffine { f, g, h } => {
                if f.ncols() != u.len() || g.ncols() != x.len() || f.nrows() != g.nrows() {
                    return Err(ProblemError::DimensionMismatch(format!(
                        "norm-affine maps are {}x{} and {}x{}, inputs are {} and {}",
                        f.nrows(),
                        f.ncols(),
                        g.nrows(),
                        g.ncols(),
                        u.len(),
                        x.len()
                    )));
                }
                if h.len() != f.nrows() {
                    return Err(ProblemError::DimensionMismatch(
                        "norm-affine offset disagrees with map rows".into(),
                    ));
                }
                Ok((f * u + g * x + h).norm())
            }
        }
    }
}

/// Same-module alias for the spec-level operation name.
pub fn evaluate_loss(
    loss: &LossForm,
    u: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64, ProblemError> {
    loss.eval(u, x)
}

/// A block of the input set when it is a product of boxes and simplices.
#[derive(Debug, Clone, PartialEq)]
pub enum InputBlock {
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    Simplex {
        len: usize,
    },
}

impl InputBlock {
    fn len(&self) -> usize {
        match self {
            InputBlock::Box { lower, .. } => lower.len(),
            InputBlock::Simplex { len } => *len,
        }
    }
}

/// The feasible set for the control input `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSet {
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// ||u||_1 = 1, u >= 0 over the whole input vector.
    Simplex,
    BoxSimplexProduct {
        blocks: Vec<InputBlock>,
    },
}

/// Box support for the uncertain vector; must have nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl SupportSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        SupportSet { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// True if `x` lies in the box within `tol` per coordinate.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    /// Clamps `x` into the box exactly.
    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| x[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// A full problem instance before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dim_u: usize,
    pub dim_x: usize,
    pub loss: LossForm,
    pub input_set: InputSet,
    pub support: SupportSet,
    pub constraints: Vec<ProjectionConstraint>,
    pub name: String,
}

/// A validated problem with derived caches. Immutable; safe to share.
#[derive(Debug, Clone)]
pub struct ValidatedProblem {
    spec: ProblemSpec,
    n_constraints: usize,
}

impl ValidatedProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn dim_u(&self) -> usize {
        self.spec.dim_u
    }

    pub fn dim_x(&self) -> usize {
        self.spec.dim_x
    }

    pub fn loss(&self) -> &LossForm {
        &self.spec.loss
    }

    pub fn input_set(&self) -> &InputSet {
        &self.spec.input_set
    }

    pub fn support(&self) -> &SupportSet {
        &self.spec.support
    }

    pub fn constraints(&self) -> &[ProjectionConstraint] {
        &self.spec.constraints
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    /// Replaces every two-sided constraint by the pair of one-sided bounds
    ///
    /// ```text
    ///   E[g(q'x)] - center <= radius      (upper half)
    ///   center - E[g(q'x)] <= radius      (lower half)
    /// ```
    ///
    /// keeping the pairing metadata needed by the master transform.
    /// One-sided constraints pass through unchanged.
    pub fn expand_two_sided(&self) -> ExpandedConstraints {
        let mut constraints = Vec::new();
        let mut pairs = Vec::new();
        for (index, c) in self.spec.constraints.iter().enumerate() {
            match c.kind {
                ConstraintKind::UpperBound { level } => {
                    constraints.push(ExpandedConstraint {
                        direction: c.direction.clone(),
                        g: c.g.clone(),
                        sign: 1.0,
                        bound: level,
                        origin: ConstraintOrigin::Standalone { index },
                    });
                }
                ConstraintKind::TwoSided { center, radius } => {
                    let pair = pairs.len();
                    pairs.push(PairInfo {
                        constraint_index: index,
                        direction: c.direction.clone(),
                        g: c.g.clone(),
                        center,
                        radius,
                    });
                    constraints.push(ExpandedConstraint {
                        direction: c.direction.clone(),
                        g: c.g.clone(),
                        sign: 1.0,
                        bound: center + radius,
                        origin: ConstraintOrigin::PairUpper { pair },
                    });
                    constraints.push(ExpandedConstraint {
                        direction: c.direction.clone(),
                        g: c.g.clone(),
                        sign: -1.0,
                        bound: radius - center,
                        origin: ConstraintOrigin::PairLower { pair },
                    });
                }
            }
        }
        ExpandedConstraints { constraints, pairs }
    }
}

/// One expanded one-sided constraint: `sign * E[g(q'x)] <= bound`.
#[derive(Debug, Clone)]
pub struct ExpandedConstraint {
    pub direction: DVector<f64>,
    pub g: ProjectionFn,
    pub sign: f64,
    pub bound: f64,
    pub origin: ConstraintOrigin,
}

impl ExpandedConstraint {
    /// Averaged constraint value `sign * (1/n) sum_k g(q'x_k) - bound`
    /// (nonpositive when satisfied).
    pub fn averaged_violation(&self, points: &[DVector<f64>]) -> f64 {
        let n = points.len() as f64;
        let mean: f64 = points
            .iter()
            .map(|x| self.g.eval(self.direction.dot(x)))
            .sum::<f64>()
            / n;
        self.sign * mean - self.bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintOrigin {
    /// An original one-sided bound; keeps a plain multiplier in the master.
    Standalone { index: usize },
    /// Upper half of a two-sided constraint (E[g] - center <= radius).
    PairUpper { pair: usize },
    /// Lower half of a two-sided constraint (center - E[g] <= radius).
    PairLower { pair: usize },
}

/// Metadata for one original two-sided constraint.
#[derive(Debug, Clone)]
pub struct PairInfo {
    pub constraint_index: usize,
    pub direction: DVector<f64>,
    pub g: ProjectionFn,
    pub center: f64,
    pub radius: f64,
}

/// Expansion output: one-sided constraints plus the pairing metadata.
#[derive(Debug, Clone)]
pub struct ExpandedConstraints {
    pub constraints: Vec<ExpandedConstraint>,
    pub pairs: Vec<PairInfo>,
}

/// Checks every invariant of `spec` and attaches derived caches.
pub fn validate_problem(spec: ProblemSpec) -> Result<ValidatedProblem, ProblemError> {
    // Support box: nonempty interior.
    if spec.support.dim() != spec.dim_x || spec.support.upper.len() != spec.dim_x {
        return Err(ProblemError::DimensionMismatch(format!(
            "support box has dims {}/{}, expected {}",
            spec.support.lower.len(),
            spec.support.upper.len(),
            spec.dim_x
        )));
    }
    for i in 0..spec.dim_x {
        if spec.support.lower[i] >= spec.support.upper[i] {
            return Err(ProblemError::EmptySupport {
                coord: i,
                lower: spec.support.lower[i],
                upper: spec.support.upper[i],
            });
        }
    }

    // Input set dimensions.
    let input_dim = match &spec.input_set {
        InputSet::Box { lower, upper } => {
            if lower.len() != upper.len() {
                return Err(ProblemError::DimensionMismatch(
                    "input box bounds have different lengths".into(),
                ));
            }
            for i in 0..lower.len() {
                if lower[i] > upper[i] {
                    return Err(ProblemError::EmptyInputBox {
                        coord: i,
                        lower: lower[i],
                        upper: upper[i],
                    });
                }
            }
            lower.len()
        }
        InputSet::Simplex => spec.dim_u,
        InputSet::BoxSimplexProduct { blocks } => {
            let mut total = 0;
            for block in blocks {
                if let InputBlock::Box { lower, upper } = block {
                    if lower.len() != upper.len() {
                        return Err(ProblemError::DimensionMismatch(
                            "input block bounds have different lengths".into(),
                        ));
                    }
                    for i in 0..lower.len() {
                        if lower[i] > upper[i] {
                            return Err(ProblemError::EmptyInputBox {
                                coord: total + i,
                                lower: lower[i],
                                upper: upper[i],
                            });
                        }
                    }
                }
                total += block.len();
            }
            total
        }
    };
    if input_dim != spec.dim_u {
        return Err(ProblemError::DimensionMismatch(format!(
            "input set has dimension {input_dim}, expected {}",
            spec.dim_u
        )));
    }

    // Loss dimensions (checked via a probe evaluation at zero).
    let zero_u = DVector::zeros(spec.dim_u);
    let zero_x = DVector::zeros(spec.dim_x);
    spec.loss.eval(&zero_u, &zero_x)?;

    // Constraints.
    for (index, c) in spec.constraints.iter().enumerate() {
        if c.direction.len() != spec.dim_x {
            return Err(ProblemError::DimensionMismatch(format!(
                "constraint {index} direction has length {}, expected {}",
                c.direction.len(),
                spec.dim_x
            )));
        }
        if let ProjectionFn::Power(p) = c.g {
            if p < 1 {
                return Err(ProblemError::InvalidExponent { exponent: p });
            }
        }
        if let ConstraintKind::TwoSided { radius, .. } = c.kind {
            if radius < 0.0 {
                return Err(ProblemError::NegativeRadius { index, radius });
            }
        }
    }

    let n_constraints = spec.constraints.len();
    Ok(ValidatedProblem {
        spec,
        n_constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::portfolio_problem;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn portfolio_spec_is_valid() {
        let spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        let valid = validate_problem(spec).unwrap();
        assert_eq!(valid.dim_u(), 3);
        assert_eq!(valid.dim_x(), 3);
        assert_eq!(valid.n_constraints(), 3);
    }

    #[test]
    fn short_direction_is_rejected() {
        let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        spec.constraints[0].direction = dv(&[1.0, 0.0]);
        match validate_problem(spec) {
            Err(ProblemError::DimensionMismatch(_)) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn negative_radius_is_rejected() {
        let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        spec.constraints[0].kind = ConstraintKind::TwoSided {
            center: 0.3,
            radius: -0.1,
        };
        match validate_problem(spec) {
            Err(ProblemError::NegativeRadius { index: 0, radius }) => {
                assert_relative_eq!(radius, -0.1)
            }
            other => panic!("expected NegativeRadius, got {other:?}"),
        }
    }

    #[test]
    fn empty_support_is_rejected() {
        let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        spec.support.lower[1] = 2.0;
        match validate_problem(spec) {
            Err(ProblemError::EmptySupport { coord: 1, .. }) => {}
            other => panic!("expected EmptySupport, got {other:?}"),
        }
    }

    #[test]
    fn bilinear_loss_evaluates() {
        let loss = LossForm::Bilinear {
            a: -DMatrix::identity(3, 3),
            b: DVector::zeros(3),
            c: DVector::zeros(3),
            d: 0.0,
        };
        let v = loss.eval(&dv(&[0.0, 0.0, 1.0]), &dv(&[0.2, 0.1, 0.1])).unwrap();
        assert_relative_eq!(v, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn norm_affine_loss_evaluates() {
        let loss = LossForm::NormAffine {
            f: DMatrix::zeros(2, 0),
            g: DMatrix::identity(2, 2),
            h: DVector::zeros(2),
        };
        let v = loss.eval(&DVector::zeros(0), &dv(&[3.0, 4.0])).unwrap();
        assert_relative_eq!(v, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_bilinear_loss_is_zero() {
        let loss = LossForm::Bilinear {
            a: DMatrix::zeros(2, 3),
            b: DVector::zeros(2),
            c: DVector::zeros(3),
            d: 0.0,
        };
        let v = loss.eval(&dv(&[1.5, -2.0]), &dv(&[0.3, 0.7, -0.4])).unwrap();
        assert_relative_eq!(v, 0.0);
    }

    #[test]
    fn loss_dimension_mismatch_is_reported() {
        let loss = LossForm::Bilinear {
            a: DMatrix::zeros(2, 3),
            b: DVector::zeros(2),
            c: DVector::zeros(3),
            d: 0.0,
        };
        assert!(loss.eval(&dv(&[1.0]), &dv(&[0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn projection_fn_cases() {
        assert_relative_eq!(ProjectionFn::Power(2).eval(0.5), 0.25);
        assert_relative_eq!(ProjectionFn::IndicatorGeq(0.0).eval(-0.3), 0.0);
        assert_relative_eq!(ProjectionFn::IndicatorGeq(0.0).eval(0.0), 1.0);
        assert_relative_eq!(ProjectionFn::Identity.eval(1.7), 1.7);
    }

    #[test]
    fn power_one_matches_identity() {
        for z in [-2.5, -0.3, 0.0, 0.7, 4.2] {
            assert_relative_eq!(
                ProjectionFn::Power(1).eval(z),
                ProjectionFn::Identity.eval(z)
            );
        }
    }

    #[test]
    fn expansion_produces_signed_pair() {
        let spec = ProblemSpec {
            dim_u: 1,
            dim_x: 1,
            loss: LossForm::Bilinear {
                a: DMatrix::zeros(1, 1),
                b: DVector::zeros(1),
                c: DVector::zeros(1),
                d: 0.0,
            },
            input_set: InputSet::Box {
                lower: dv(&[0.0]),
                upper: dv(&[1.0]),
            },
            support: SupportSet::new(dv(&[-1.0]), dv(&[1.0])),
            constraints: vec![ProjectionConstraint {
                direction: dv(&[1.0]),
                g: ProjectionFn::Identity,
                kind: ConstraintKind::TwoSided {
                    center: 0.3,
                    radius: 0.4,
                },
            }],
            name: "pair".into(),
        };
        let valid = validate_problem(spec).unwrap();
        let exp = valid.expand_two_sided();
        assert_eq!(exp.constraints.len(), 2);
        assert_eq!(exp.pairs.len(), 1);
        // E[q'x] - 0.3 <= 0.4 and 0.3 - E[q'x] <= 0.4.
        assert_relative_eq!(exp.constraints[0].sign, 1.0);
        assert_relative_eq!(exp.constraints[0].bound, 0.7);
        assert_relative_eq!(exp.constraints[1].sign, -1.0);
        assert_relative_eq!(exp.constraints[1].bound, 0.1);
    }

    #[test]
    fn expansion_of_empty_constraints_is_empty() {
        let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        spec.constraints.clear();
        let valid = validate_problem(spec).unwrap();
        let exp = valid.expand_two_sided();
        assert!(exp.constraints.is_empty());
        assert!(exp.pairs.is_empty());
    }

    #[test]
    fn one_sided_constraint_passes_through() {
        let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        spec.constraints = vec![ProjectionConstraint {
            direction: dv(&[1.0, 0.0, 0.0]),
            g: ProjectionFn::Identity,
            kind: ConstraintKind::UpperBound { level: 0.5 },
        }];
        let valid = validate_problem(spec).unwrap();
        let exp = valid.expand_two_sided();
        assert_eq!(exp.constraints.len(), 1);
        assert!(exp.pairs.is_empty());
        assert_relative_eq!(exp.constraints[0].sign, 1.0);
        assert_relative_eq!(exp.constraints[0].bound, 0.5);
    }

    // For any finite sample set, |mean - center| <= radius holds iff both
    // expanded one-sided constraints hold.
    #[test]
    fn expansion_is_equivalent_on_random_samples() {
        let mut rng = StdRng::seed_from_u64(7);
        let spec = portfolio_problem(&[0.4, 0.2, 0.1]).unwrap();
        let valid = validate_problem(spec).unwrap();
        let exp = valid.expand_two_sided();
        for _ in 0..200 {
            let n = rng.gen_range(1..=8);
            let points: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.5..1.5)))
                .collect();
            for (c, pair) in valid.constraints().iter().zip(exp.pairs.iter()) {
                let mean: f64 = points
                    .iter()
                    .map(|x| c.g.eval(c.direction.dot(x)))
                    .sum::<f64>()
                    / n as f64;
                let original_holds = (mean - pair.center).abs() <= pair.radius;
                let both_hold = exp
                    .constraints
                    .iter()
                    .filter(|e| match e.origin {
                        ConstraintOrigin::PairUpper { pair: p }
                        | ConstraintOrigin::PairLower { pair: p } => {
                            exp.pairs[p].constraint_index == pair.constraint_index
                        }
                        _ => false,
                    })
                    .all(|e| e.averaged_violation(&points) <= 1e-12);
                assert_eq!(original_holds, both_hold);
            }
        }
    }

    #[test]
    fn bilinear_loss_is_affine_in_u() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let loss = LossForm::Bilinear { a, b, c, d: 0.3 };
        for _ in 0..50 {
            let u1 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let u2 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let lhs = loss.eval(&u1, &x).unwrap() + loss.eval(&u2, &x).unwrap();
            let rhs =
                loss.eval(&(&u1 + &u2), &x).unwrap() + loss.eval(&DVector::zeros(2), &x).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_affine_loss_is_nonnegative() {
        let mut rng = StdRng::seed_from_u64(13);
        let f = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let h = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let loss = LossForm::NormAffine { f, g, h };
        for _ in 0..100 {
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
            assert!(loss.eval(&u, &x).unwrap() >= 0.0);
        }
    }
}
