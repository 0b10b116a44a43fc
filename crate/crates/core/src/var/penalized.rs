use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fista::{fista_fit_row, RowFit, RowProblem};
use super::prox::hglasso_prox;
use super::{fit_ols, CoefficientSet, FistaSettings, PenaltyFamily, PenaltySpec, RegressionForm, VarError};

/// Number of log-spaced values in the default grid.
pub const DEFAULT_GRID_SIZE: usize = 20;

/// Smallest lambda whose penalised fit is identically zero.
///
/// Zero solves row `i` exactly when `Z Y_i'` lies in `lambda` times the
/// subdifferential of the penalty at zero. For the LASSO that is the largest
/// absolute cross product; for the nested groups it is found by bisection on
/// "the proximal map sends `Z Y_i'` to zero", which is monotone in lambda.
pub fn lambda_max(reg: &RegressionForm, family: PenaltyFamily) -> f64 {
    let (k, p) = (reg.k(), reg.p);
    (0..k)
        .map(|i| {
            let c = reg.cross(i);
            match family {
                PenaltyFamily::None => 0.0,
                PenaltyFamily::Lasso => c.amax(),
                PenaltyFamily::HgLasso => {
                    let zero = |l: f64| hglasso_prox(c.as_slice(), k, p, l).iter().all(|v| *v == 0.0);
                    let mut hi = (0..k)
                        .map(|j| (0..p).map(|l| c[l * k + j].powi(2)).sum::<f64>().sqrt())
                        .fold(0.0, f64::max);
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if zero(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    // rounding in the rescaled solver step needs a hair of slack
                    hi * (1.0 + 1e-10)
                }
            }
        })
        .fold(0.0, f64::max)
}

/// `n` log-spaced values from `max` down to `max / ratio`, largest first.
pub fn log_lambda_grid(max: f64, n: usize, ratio: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..n)
            .map(|s| max * ratio.powf(-(s as f64) / (n - 1) as f64))
            .collect(),
    }
}

/// `n` log-spaced values over three decades below `lambda_max`, then one
/// value per further decade down to `1e-8 * lambda_max` so nearly
/// unpenalised fits stay reachable. Empty when `lambda_max` is zero.
pub fn default_lambda_grid(reg: &RegressionForm, family: PenaltyFamily, n: usize) -> Vec<f64> {
    let max = lambda_max(reg, family);
    if !(max > 0.0) || family == PenaltyFamily::None {
        return Vec::new();
    }
    let mut grid = log_lambda_grid(max, n, 1e3);
    grid.extend((4..=8).map(|e| max * 10f64.powi(-e)));
    grid.dedup_by(|a, b| *a >= *b);
    grid
}

fn step_size(reg: &RegressionForm) -> Result<f64, VarError> {
    let sigma = reg.largest_singular_value();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(VarError::RankDeficient {
            what: "all regressors are zero".into(),
        });
    }
    Ok(1.0 / (sigma * sigma))
}

fn fit_rows(
    reg: &RegressionForm,
    gram: &DMatrix<f64>,
    step: f64,
    family: PenaltyFamily,
    lambda: f64,
    settings: &FistaSettings,
    init: Option<&DMatrix<f64>>,
) -> Result<Vec<RowFit>, VarError> {
    (0..reg.k())
        .into_par_iter()
        .map(|i| {
            let problem = RowProblem::new(reg, gram, i, step);
            let warm: Option<Vec<f64>> = init.map(|m| m.row(i).iter().copied().collect());
            fista_fit_row(&problem, family, lambda, settings, warm.as_deref())
        })
        .collect()
}

fn assemble(
    reg: &RegressionForm,
    rows: &[RowFit],
    family: PenaltyFamily,
    lambda: f64,
) -> CoefficientSet {
    let stacked = DMatrix::from_fn(reg.k(), reg.n_regressors(), |i, c| rows[i].coeffs[c]);
    let iterations = rows.iter().map(|r| r.iterations).max();
    CoefficientSet::from_stacked(reg, &stacked, family, Some(lambda), iterations)
}

/// Row-by-row penalised fit at one lambda. Rows run on the rayon pool; the
/// result does not depend on how many threads it has.
pub fn fit_penalized(
    reg: &RegressionForm,
    penalty: &PenaltySpec,
    lambda: f64,
    settings: &FistaSettings,
) -> Result<CoefficientSet, VarError> {
    let gram = reg.gram();
    let step = step_size(reg)?;
    let rows = fit_rows(reg, &gram, step, penalty.family(), lambda, settings, None)?;
    Ok(assemble(reg, &rows, penalty.family(), lambda))
}

/// Fits every value of the penalty grid, largest first, each started from the
/// previous solution.
pub fn fit_path(
    reg: &RegressionForm,
    penalty: &PenaltySpec,
    settings: &FistaSettings,
) -> Result<Vec<CoefficientSet>, VarError> {
    let gram = reg.gram();
    let step = step_size(reg)?;
    let mut out: Vec<CoefficientSet> = Vec::with_capacity(penalty.lambda_grid().len());
    for &lambda in penalty.lambda_grid() {
        let init = out.last().map(|m| m.stacked());
        let rows = fit_rows(
            reg,
            &gram,
            step,
            penalty.family(),
            lambda,
            settings,
            init.as_ref(),
        )?;
        out.push(assemble(reg, &rows, penalty.family(), lambda));
    }
    Ok(out)
}

/// Least squares for the `none` family, otherwise a penalised fit at
/// `lambda`.
pub fn fit_model(
    reg: &RegressionForm,
    penalty: &PenaltySpec,
    lambda: Option<f64>,
    settings: &FistaSettings,
) -> Result<CoefficientSet, VarError> {
    match (penalty.family(), lambda) {
        (PenaltyFamily::None, _) => fit_ols(reg),
        (_, Some(l)) => fit_penalized(reg, penalty, l, settings),
        (_, None) => Err(VarError::InvalidPenalty(
            "penalised fit needs a lambda".into(),
        )),
    }
}
