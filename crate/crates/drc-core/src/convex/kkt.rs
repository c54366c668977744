//! Standalone KKT residual check with least-squares multiplier recovery.

use nalgebra::{DMatrix, DVector, SVD};

use super::{canonicalize, ConvexProgram, SolverError};

/// Residuals of the KKT system at a candidate point.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// Infinity norm of the stationarity residual after multiplier recovery.
    pub stationarity: f64,
    /// Worst primal violation (inequalities and equalities).
    pub primal: f64,
    /// Worst complementarity product |lambda_i * slack_i|.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Computes KKT residuals at `w`. Multipliers for the near-active
/// inequalities and the equalities are recovered by least squares and
/// clamped to the nonnegative orthant; the result is a pure function of
/// the inputs.
pub fn check_kkt(prog: &ConvexProgram, w: &DVector<f64>) -> Result<KktReport, SolverError> {
    if w.len() != prog.n_vars {
        return Err(SolverError::DimensionMismatch(format!(
            "point has length {}, program has {} variables",
            w.len(),
            prog.n_vars
        )));
    }
    let canon = canonicalize(prog)?;
    let n = canon.n;
    let p = canon.eq_a.nrows();

    let mut grad_f = DVector::zeros(n);
    for term in &canon.objective {
        grad_f += term.gradient(w);
    }

    let mut active: Vec<(usize, f64)> = Vec::new();
    let mut min_slack = f64::INFINITY;
    for (i, c) in canon.ineqs.iter().enumerate() {
        let s = c.slack(w);
        min_slack = min_slack.min(s);
        if s <= 1e-6 * (1.0 + c.rhs.abs()) {
            active.push((i, s));
        }
    }

    let k = active.len();
    let cols = k + p;
    let mut stationarity = grad_f.amax();
    let mut complementarity = 0.0;
    if cols > 0 {
        // Minimize || grad_f + N z || over z, N = [active gradients | eq rows'].
        let mut normals = DMatrix::zeros(n, cols);
        for (j, (i, _)) in active.iter().enumerate() {
            normals.set_column(j, &canon.ineqs[*i].gradient(w));
        }
        for j in 0..p {
            normals.set_column(k + j, &canon.eq_a.row(j).transpose());
        }
        let svd = SVD::new(normals.clone(), true, true);
        let mut z = svd
            .solve(&(-&grad_f), 1e-12)
            .map_err(|e| SolverError::InvalidProgram(format!("multiplier recovery failed: {e}")))?;
        for j in 0..k {
            if z[j] < 0.0 {
                z[j] = 0.0;
            }
        }
        let residual = &grad_f + &normals * &z;
        stationarity = residual.amax();
        for (j, (_, s)) in active.iter().enumerate() {
            complementarity = complementarity.max((z[j] * s).abs());
        }
    }

    let primal_ineq = (-min_slack).max(0.0);
    let primal_eq = if p > 0 {
        (&canon.eq_a * w - &canon.eq_b).amax()
    } else {
        0.0
    };

    Ok(KktReport {
        stationarity,
        primal: primal_ineq.max(primal_eq),
        complementarity,
    })
}
