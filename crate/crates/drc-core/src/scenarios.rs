//! Built-in scenario generators and oracles: the three-asset portfolio
//! (with and without volatility constraints), and open-loop trajectory
//! planning for a small stable linear system with uncertain initial state.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::problem::{
    ConstraintKind, InputSet, LossForm, ProblemError, ProblemSpec, ProjectionConstraint,
    ProjectionFn, SupportSet,
};

/// A discrete-time linear system `x_{t+1} = A x_t + B u_t` with scalar
/// input, planned over `horizon` steps toward `goal`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub horizon: usize,
    pub goal: Vector2<f64>,
}

impl LinearSystem {
    pub fn new(a: Matrix2<f64>, b: Vector2<f64>, horizon: usize, goal: Vector2<f64>) -> Self {
        LinearSystem { a, b, horizon, goal }
    }
}

/// The built-in benchmark system: stable dynamics with eigenvalues
/// 0.4 and 0.9 and a strong cross-coupling term.
pub fn planning_system(horizon: usize, goal: Vector2<f64>) -> LinearSystem {
    LinearSystem::new(
        Matrix2::new(0.4, 1.5, 0.0, 0.9),
        Vector2::new(0.0, 1.0),
        horizon,
        goal,
    )
}

/// Three-asset portfolio: loss -u'x over the simplex, asset returns in
/// [-1, 1]^3, and per-asset expected-return windows of the given radii
/// around (0.3, -0.1, 0.2).
pub fn portfolio_problem(radii: &[f64; 3]) -> Result<ProblemSpec, ProblemError> {
    for (index, &radius) in radii.iter().enumerate() {
        if radius < 0.0 {
            return Err(ProblemError::NegativeRadius { index, radius });
        }
    }
    let centers = [0.3, -0.1, 0.2];
    let constraints = (0..3)
        .map(|i| {
            let mut direction = DVector::zeros(3);
            direction[i] = 1.0;
            ProjectionConstraint {
                direction,
                g: ProjectionFn::Identity,
                kind: ConstraintKind::TwoSided {
                    center: centers[i],
                    radius: radii[i],
                },
            }
        })
        .collect();
    Ok(ProblemSpec {
        dim_u: 3,
        dim_x: 3,
        loss: LossForm::Bilinear {
            a: -DMatrix::identity(3, 3),
            b: DVector::zeros(3),
            c: DVector::zeros(3),
            d: 0.0,
        },
        input_set: InputSet::Simplex,
        support: SupportSet::new(DVector::from_element(3, -1.0), DVector::from_element(3, 1.0)),
        constraints,
        name: format!("portfolio_{}_{}_{}", radii[0], radii[1], radii[2]),
    })
}

/// Closed-form solution of the worst-case portfolio problem.
#[derive(Debug, Clone)]
pub struct PortfolioOracle {
    /// One optimal vertex (lowest index on ties).
    pub u_star: DVector<f64>,
    /// Indices of all assets attaining the optimum: the optimal face is
    /// the convex hull of these vertices.
    pub face: Vec<usize>,
    /// Worst-case expected return; the min-max objective value is its
    /// negation.
    pub value: f64,
}

/// The worst case pins each asset's expected return at the lower end of
/// its window, so the problem reduces to maximizing
/// `(0.3 - r1) u1 + (-0.1 - r2) u2 + (0.2 - r3) u3` over the simplex,
/// which a vertex of the best coefficient attains.
pub fn portfolio_lp_oracle(radii: &[f64; 3]) -> PortfolioOracle {
    let coefficients = [0.3 - radii[0], -0.1 - radii[1], 0.2 - radii[2]];
    let best = coefficients
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let face: Vec<usize> = (0..3)
        .filter(|&i| (coefficients[i] - best).abs() <= 1e-12)
        .collect();
    let mut u_star = DVector::zeros(3);
    u_star[face[0]] = 1.0;
    PortfolioOracle {
        u_star,
        face,
        value: best,
    }
}

/// Portfolio with radii (0.4, 0.2, 0.1) plus second-moment windows of
/// radius 0.05 around (0.34, 0.26, 0.10) per asset.
pub fn volatility_problem() -> ProblemSpec {
    let mut spec = portfolio_problem(&[0.4, 0.2, 0.1]).expect("radii are nonnegative");
    let centers = [0.34, 0.26, 0.10];
    for i in 0..3 {
        let mut direction = DVector::zeros(3);
        direction[i] = 1.0;
        spec.constraints.push(ProjectionConstraint {
            direction,
            g: ProjectionFn::Power(2),
            kind: ConstraintKind::TwoSided {
                center: centers[i],
                radius: 0.05,
            },
        });
    }
    spec.name = "portfolio_volatility".into();
    spec
}

/// Propagates the dynamics from `x0` under the control sequence,
/// returning the `horizon + 1` visited states.
pub fn rollout(
    sys: &LinearSystem,
    x0: Vector2<f64>,
    u_seq: &[f64],
) -> Result<Vec<Vector2<f64>>, ProblemError> {
    if u_seq.len() != sys.horizon {
        return Err(ProblemError::LengthMismatch {
            expected: sys.horizon,
            got: u_seq.len(),
        });
    }
    let mut states = Vec::with_capacity(sys.horizon + 1);
    states.push(x0);
    let mut x = x0;
    for &u in u_seq {
        x = sys.a * x + sys.b * u;
        states.push(x);
    }
    Ok(states)
}

/// Closed form of the state at time `t`:
/// `A^t x0 + sum_{tau < t} A^{t-1-tau} B u_tau`.
pub fn closed_form_state(
    sys: &LinearSystem,
    x0: Vector2<f64>,
    u_seq: &[f64],
    t: usize,
) -> Result<Vector2<f64>, ProblemError> {
    if u_seq.len() != sys.horizon {
        return Err(ProblemError::LengthMismatch {
            expected: sys.horizon,
            got: u_seq.len(),
        });
    }
    if t > sys.horizon {
        return Err(ProblemError::IndexOutOfRange {
            index: t,
            horizon: sys.horizon,
        });
    }
    let mut power = Matrix2::identity();
    // power walks A^0 .. A^{t-1} while accumulating the input response.
    let mut response = Vector2::zeros();
    for tau in (0..t).rev() {
        response += power * sys.b * u_seq[tau];
        power *= sys.a;
    }
    Ok(power * x0 + response)
}

/// Input-response matrix: column `tau` is `A^{horizon-1-tau} B`.
pub fn input_response_matrix(sys: &LinearSystem) -> DMatrix<f64> {
    let t = sys.horizon;
    let mut f = DMatrix::zeros(2, t);
    let mut power = Matrix2::identity();
    for tau in (0..t).rev() {
        let col = power * sys.b;
        f[(0, tau)] = col[0];
        f[(1, tau)] = col[1];
        power *= sys.a;
    }
    f
}

/// `A^horizon` as a dynamic matrix.
pub fn state_response_matrix(sys: &LinearSystem) -> DMatrix<f64> {
    let mut power = Matrix2::identity();
    for _ in 0..sys.horizon {
        power *= sys.a;
    }
    DMatrix::from_fn(2, 2, |i, j| power[(i, j)])
}

/// Reach `goal` at the end of the horizon under an uncertain initial
/// state in [-0.3, 0.3]^2 whose mean coordinates are windowed. The loss
/// is pre-composed with the closed-form rollout, so the uncertain vector
/// is the initial state only and both algorithms see a standard instance.
pub fn trajectory_problem(horizon: usize, goal: Vector2<f64>) -> ProblemSpec {
    let sys = planning_system(horizon, goal);
    let f = input_response_matrix(&sys);
    let g = state_response_matrix(&sys);
    let h = DVector::from_row_slice(&[-goal[0], -goal[1]]);
    let constraints = vec![
        ProjectionConstraint {
            direction: DVector::from_row_slice(&[1.0, 0.0]),
            g: ProjectionFn::Identity,
            kind: ConstraintKind::TwoSided {
                center: 0.1,
                radius: 0.1,
            },
        },
        ProjectionConstraint {
            direction: DVector::from_row_slice(&[0.0, 1.0]),
            g: ProjectionFn::Identity,
            kind: ConstraintKind::TwoSided {
                center: -0.1,
                radius: 0.2,
            },
        },
    ];
    ProblemSpec {
        dim_u: horizon,
        dim_x: 2,
        loss: LossForm::NormAffine { f, g, h },
        input_set: InputSet::Box {
            lower: DVector::from_element(horizon, -0.1),
            upper: DVector::from_element(horizon, 0.1),
        },
        support: SupportSet::new(DVector::from_element(2, -0.3), DVector::from_element(2, 0.3)),
        constraints,
        name: format!("trajectory_T{horizon}"),
    }
}

/// Draws initial states uniformly from the box and rolls each one out
/// under `u_seq`.
pub fn monte_carlo_trajectories(
    sys: &LinearSystem,
    u_seq: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<Vector2<f64>>>, ProblemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-0.3, 0.3);
    let mut paths = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let x0 = Vector2::new(unit.sample(&mut rng), unit.sample(&mut rng));
        paths.push(rollout(sys, x0, u_seq)?);
    }
    Ok(paths)
}

/// Draws `n` points uniformly from a box with the given generator.
pub fn uniform_box_samples(
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let dim = lower.len();
    (0..n)
        .map(|_| {
            DVector::from_fn(dim, |i, _| {
                Uniform::new_inclusive(lower[i], upper[i]).sample(rng)
            })
        })
        .collect()
}
