use nalgebra::DVector;

use super::{CoefficientSet, PenaltyFamily, RegressionForm, VarError};

/// Least squares `Phi = Y Z' (Z Z')^-1` with residual covariance
/// `U U' / (T_eff - kp)`.
pub fn fit_ols(reg: &RegressionForm) -> Result<CoefficientSet, VarError> {
    let n = reg.n_eff();
    let m = reg.n_regressors();
    if n <= m {
        return Err(VarError::RankDeficient {
            what: format!("{n} usable cycles for {m} regressors"),
        });
    }
    check_rank(reg)?;
    let gram = reg.gram();
    let chol = gram.cholesky().ok_or_else(|| VarError::RankDeficient {
        what: "Z Z' is not positive definite".into(),
    })?;
    // Phi' = (Z Z')^-1 Z Y'
    let rhs = reg.z_centered() * reg.y_centered().transpose();
    let stacked = chol.solve(&rhs).transpose();
    Ok(CoefficientSet::from_stacked(
        reg,
        &stacked,
        PenaltyFamily::None,
        None,
        None,
    ))
}

/// The all-zero lag fit: predicts the regression-window mean of each
/// component whatever the history.
pub fn fit_intercept_only(reg: &RegressionForm) -> CoefficientSet {
    let zero = nalgebra::DMatrix::zeros(reg.k(), reg.n_regressors());
    CoefficientSet::from_stacked(reg, &zero, PenaltyFamily::None, None, None)
}

// Gram-Schmidt over the regressor rows; names the first row that is
// (numerically) a combination of the earlier ones.
fn check_rank(reg: &RegressionForm) -> Result<(), VarError> {
    let k = reg.k();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(reg.n_regressors());
    for r in 0..reg.n_regressors() {
        let row: DVector<f64> = reg.z_centered().row(r).transpose();
        let scale = row.norm();
        let mut resid = row.clone();
        for q in &basis {
            let proj = q.dot(&resid);
            resid -= q * proj;
        }
        let norm = resid.norm();
        if scale == 0.0 || norm <= 1e-9 * scale {
            return Err(VarError::RankDeficient {
                what: format!(
                    "regressor for component {} at lag {} is collinear with earlier regressors",
                    r % k + 1,
                    r / k + 1
                ),
            });
        }
        basis.push(resid / norm);
    }
    Ok(())
}
