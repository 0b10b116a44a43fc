use nalgebra::{DMatrix, DVector};

use super::prox::{hglasso_penalty, hglasso_prox, lasso_penalty, lasso_prox};
use super::{FistaSettings, PenaltyFamily, RegressionForm, VarError};

/// One target row of the penalised problem
/// `1/2 |Y_i - Phi_i Z|^2 + lambda * Omega(Phi_i)`.
#[derive(Debug, Clone)]
pub struct RowProblem<'a> {
    pub z: &'a DMatrix<f64>,
    pub y: DVector<f64>,
    pub gram: &'a DMatrix<f64>,
    pub cross: DVector<f64>,
    pub k: usize,
    pub p: usize,
    /// `1 / sigma_1(Z)^2`.
    pub step: f64,
}

impl<'a> RowProblem<'a> {
    /// `gram` must be `reg.gram()`; it is shared by all rows of a fit.
    pub fn new(reg: &'a RegressionForm, gram: &'a DMatrix<f64>, i: usize, step: f64) -> Self {
        Self {
            z: reg.z_centered(),
            y: reg.y_centered().row(i).transpose(),
            gram,
            cross: reg.cross(i),
            k: reg.k(),
            p: reg.p,
            step,
        }
    }

    fn penalty(&self, family: PenaltyFamily, coeffs: &[f64]) -> f64 {
        match family {
            PenaltyFamily::None => 0.0,
            PenaltyFamily::Lasso => lasso_penalty(coeffs),
            PenaltyFamily::HgLasso => hglasso_penalty(coeffs, self.k, self.p),
        }
    }

    fn prox(&self, family: PenaltyFamily, v: &[f64], threshold: f64) -> Vec<f64> {
        match family {
            PenaltyFamily::None => v.to_vec(),
            PenaltyFamily::Lasso => lasso_prox(v, threshold),
            PenaltyFamily::HgLasso => hglasso_prox(v, self.k, self.p, threshold),
        }
    }

    // 1/2 y'y - phi'c + 1/2 phi'G phi, without the constant
    fn smooth_part(&self, phi: &DVector<f64>) -> f64 {
        0.5 * phi.dot(&(self.gram * phi)) - phi.dot(&self.cross)
    }
}

/// `1/2 |Y_i - Phi_i Z|^2` evaluated from the residuals.
pub fn row_objective(problem: &RowProblem<'_>, coeffs: &[f64]) -> f64 {
    let phi = DVector::from_column_slice(coeffs);
    let resid = &problem.y - problem.z.transpose() * phi;
    0.5 * resid.norm_squared()
}

/// `-Z (Y_i - Phi_i Z)'`.
pub fn row_gradient(problem: &RowProblem<'_>, coeffs: &[f64]) -> Vec<f64> {
    let phi = DVector::from_column_slice(coeffs);
    let resid = &problem.y - problem.z.transpose() * phi;
    (-(problem.z * resid)).as_slice().to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFit {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    /// Penalised objective at the returned coefficients.
    pub objective: f64,
    /// Penalised objective after each iteration, when requested.
    pub trace: Vec<f64>,
}

/// Accelerated proximal gradient on one row.
///
/// Stops once both the objective and the iterate change by less than the
/// relative tolerance between accepted steps; the objective alone flattens
/// long before the coefficients settle when residuals are large.
///
/// Momentum `(r - 2) / (r + 1)` counted from the last restart, none on the
/// first step. When an accelerated step would raise the objective the
/// momentum is dropped and a plain proximal step is taken instead, so the
/// accepted objective values never increase.
pub fn fista_fit_row(
    problem: &RowProblem<'_>,
    family: PenaltyFamily,
    lambda: f64,
    settings: &FistaSettings,
    init: Option<&[f64]>,
) -> Result<RowFit, VarError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(VarError::InvalidPenalty(format!("lambda {lambda} must be >= 0")));
    }
    let n = problem.k * problem.p;
    let lambda = if family == PenaltyFamily::None { 0.0 } else { lambda };
    let threshold = problem.step * lambda;
    let yy = 0.5 * problem.y.norm_squared();
    let total = |phi: &DVector<f64>| {
        yy + problem.smooth_part(phi) + lambda * problem.penalty(family, phi.as_slice())
    };
    let prox_step = |v: &DVector<f64>| -> DVector<f64> {
        let grad = problem.gram * v - &problem.cross;
        let moved = v - grad * problem.step;
        DVector::from_vec(problem.prox(family, moved.as_slice(), threshold))
    };

    let mut x = match init {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n),
    };
    let mut x_prev = x.clone();
    let mut f_prev = total(&x);
    if !f_prev.is_finite() {
        return Err(VarError::NumericalFailure {
            iteration: 0,
            objective: f_prev,
        });
    }
    let mut trace = Vec::new();
    let mut since_restart = 1usize;
    let mut iterations = 0;
    for r in 1..=settings.max_iters {
        iterations = r;
        let momentum = if since_restart <= 1 {
            0.0
        } else {
            (since_restart as f64 - 2.0) / (since_restart as f64 + 1.0)
        };
        let probe = &x + (&x - &x_prev) * momentum;
        let mut next = prox_step(&probe);
        let mut f_next = total(&next);
        if !f_next.is_finite() {
            return Err(VarError::NumericalFailure {
                iteration: r,
                objective: f_next,
            });
        }
        if f_next > f_prev && momentum != 0.0 {
            since_restart = 1;
            next = prox_step(&x);
            f_next = total(&next);
        }
        if f_next > f_prev {
            // no descent left at working precision
            break;
        }
        since_restart += 1;
        let change = (f_prev - f_next).abs() / f_prev.abs().max(f64::MIN_POSITIVE);
        let moved = (&next - &x).norm();
        let step_change = if moved == 0.0 { 0.0 } else { moved / next.norm().max(f64::MIN_POSITIVE) };
        x_prev = std::mem::replace(&mut x, next);
        f_prev = f_next;
        if settings.record_trace {
            trace.push(f_next);
        }
        if r >= 3 && change < settings.objective_tolerance && step_change < settings.objective_tolerance {
            break;
        }
    }
    Ok(RowFit {
        coeffs: x.as_slice().to_vec(),
        iterations,
        objective: f_prev,
        trace,
    })
}
