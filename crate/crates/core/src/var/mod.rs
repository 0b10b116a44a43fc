//! Vector autoregression: regression form, least squares, and penalised
//! fits (LASSO and hierarchical group LASSO) by accelerated proximal
//! gradient, one coefficient row at a time.

mod export;
mod fista;
mod ols;
mod penalized;
mod prox;
mod regression;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::SeriesError;

pub use export::{read_coefficients, write_coefficients, CoefficientManifest};
pub use fista::{fista_fit_row, row_gradient, row_objective, RowFit, RowProblem};
pub use ols::{fit_intercept_only, fit_ols};
pub use penalized::{
    default_lambda_grid, fit_model, fit_path, fit_penalized, lambda_max, log_lambda_grid,
    DEFAULT_GRID_SIZE,
};
pub use prox::{hglasso_penalty, hglasso_prox, lasso_penalty, lasso_prox};
pub use regression::{build_regression, RegressionForm};

#[derive(Debug, Error, PartialEq)]
pub enum VarError {
    #[error("lag order {p} is invalid for a series of length {len}")]
    InvalidLag { p: usize, len: usize },
    #[error("regressors are rank deficient: {what}")]
    RankDeficient { what: String },
    #[error("solver diverged: objective became {objective} at iteration {iteration}")]
    NumericalFailure { iteration: usize, objective: f64 },
    #[error("history has {len} observations, need {needed}")]
    ShortHistory { len: usize, needed: usize },
    #[error("observation has {found} components, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("coefficient file: {0}")]
    Io(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    None,
    Lasso,
    HgLasso,
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyFamily::None => "none",
            PenaltyFamily::Lasso => "lasso",
            PenaltyFamily::HgLasso => "hglasso",
        })
    }
}

impl FromStr for PenaltyFamily {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "ols" | "var" => Ok(PenaltyFamily::None),
            "lasso" => Ok(PenaltyFamily::Lasso),
            "hglasso" | "hvar" => Ok(PenaltyFamily::HgLasso),
            other => Err(VarError::InvalidPenalty(format!("unknown family {other:?}"))),
        }
    }
}

/// Penalty family with its candidate tuning values, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    family: PenaltyFamily,
    lambda_grid: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, lambda_grid: Vec<f64>) -> Result<Self, VarError> {
        if lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(VarError::InvalidPenalty("grid values must be positive".into()));
        }
        if lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(VarError::InvalidPenalty(
                "grid must be strictly decreasing".into(),
            ));
        }
        Ok(Self {
            family,
            lambda_grid,
        })
    }

    /// Unpenalised least squares.
    pub fn none() -> Self {
        Self {
            family: PenaltyFamily::None,
            lambda_grid: Vec::new(),
        }
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaSettings {
    pub max_iters: usize,
    /// Stop once the relative change of the objective, and of the
    /// coefficients, between accepted iterates drops below this.
    pub objective_tolerance: f64,
    /// Keep the objective value of every iterate in [`RowFit::trace`].
    pub record_trace: bool,
}

impl Default for FistaSettings {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            objective_tolerance: 1e-8,
            record_trace: false,
        }
    }
}

/// Fitted VAR(p): intercept, lag matrices and residual covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub intercept: Vec<f64>,
    /// `lags[l - 1]` is the `k x k` matrix for lag `l`.
    pub lags: Vec<DMatrix<f64>>,
    pub residual_cov: DMatrix<f64>,
    pub family: PenaltyFamily,
    pub lambda: Option<f64>,
    /// Largest iteration count over the row solves, for penalised fits.
    pub iterations: Option<usize>,
}

impl CoefficientSet {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }

    pub fn p(&self) -> usize {
        self.lags.len()
    }

    /// Builds the set from a stacked `k x kp` coefficient matrix fitted on a
    /// demeaned regression.
    pub(crate) fn from_stacked(
        reg: &RegressionForm,
        stacked: &DMatrix<f64>,
        family: PenaltyFamily,
        lambda: Option<f64>,
        iterations: Option<usize>,
    ) -> Self {
        let k = reg.k();
        let lags: Vec<DMatrix<f64>> = (0..reg.p)
            .map(|l| stacked.columns(l * k, k).into_owned())
            .collect();
        // centred model: y~_t = c + Phi z~_t with c = ybar - Phi zbar;
        // back in levels v = mu + c - sum_l Phi(l) mu
        let (y_bar, z_bar) = reg.row_offsets();
        let shift = stacked * z_bar;
        let mut intercept: Vec<f64> = (0..k).map(|i| reg.means[i] + (y_bar[i] - shift[i])).collect();
        for phi in &lags {
            for i in 0..k {
                for j in 0..k {
                    intercept[i] -= phi[(i, j)] * reg.means[j];
                }
            }
        }
        let residuals = reg.y_centered() - stacked * reg.z_centered();
        let n = reg.n_eff();
        let df = if n > reg.n_regressors() {
            n - reg.n_regressors()
        } else {
            n
        };
        let residual_cov = (&residuals * residuals.transpose()) / df as f64;
        Self {
            intercept,
            lags,
            residual_cov,
            family,
            lambda,
            iterations,
        }
    }

    /// `[Phi(1) ... Phi(p)]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut out = DMatrix::zeros(k, k * self.p());
        for (l, phi) in self.lags.iter().enumerate() {
            out.columns_mut(l * k, k).copy_from(phi);
        }
        out
    }

    pub fn nonzero_count(&self) -> usize {
        self.lags
            .iter()
            .map(|m| m.iter().filter(|v| **v != 0.0).count())
            .sum()
    }

    /// One-step-ahead prediction from observations ordered oldest first;
    /// only the last `p` are used.
    pub fn predict_one_step(&self, history: &[Vec<f64>]) -> Result<Vec<f64>, VarError> {
        predict_one_step(self, history)
    }
}

/// `v + sum_l Phi(l) y_{t+1-l}` from observations ordered oldest first.
pub fn predict_one_step(
    model: &CoefficientSet,
    history: &[Vec<f64>],
) -> Result<Vec<f64>, VarError> {
    let p = model.p();
    if history.len() < p {
        return Err(VarError::ShortHistory {
            len: history.len(),
            needed: p,
        });
    }
    let k = model.k();
    let mut out = model.intercept.clone();
    for (l, phi) in model.lags.iter().enumerate() {
        let y = &history[history.len() - 1 - l];
        if y.len() != k {
            return Err(VarError::DimensionMismatch {
                expected: k,
                found: y.len(),
            });
        }
        for i in 0..k {
            out[i] += (0..k).map(|j| phi[(i, j)] * y[j]).sum::<f64>();
        }
    }
    Ok(out)
}
