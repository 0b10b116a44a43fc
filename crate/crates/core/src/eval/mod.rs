//! Rolling tuning, holdout scoring and comparison of the five forecasters.

mod report;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{average_last_k_forecast, PanelMeta, PanelSeries, SeriesError};
use crate::univariate::{fit_selected, forecast_series, UnivariateError};
use crate::var::{
    build_regression, default_lambda_grid, fit_intercept_only, fit_ols, fit_path, fit_penalized,
    CoefficientSet, FistaSettings, PenaltyFamily, PenaltySpec, VarError, DEFAULT_GRID_SIZE,
};

pub use report::{
    aggregate_reports, aggregate_scores, read_seed_scores, seed_scores, write_seed_scores,
    write_signal_table, write_tables, write_trace_csv, AggregateRow, SeedScore,
};

pub const DEFAULT_HOLDOUT: usize = 75;
pub const AVERAGE_WINDOW: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("panel has {len} cycles, need at least {needed}")]
    InsufficientData { len: usize, needed: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("every candidate fit failed: {0}")]
    AllFitsFailed(String),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Univariate(#[from] UnivariateError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Mean of squared errors over all components and horizon points.
pub fn mspe(actual: &DMatrix<f64>, predicted: &DMatrix<f64>) -> Result<f64, EvalError> {
    if actual.shape() != predicted.shape() {
        return Err(EvalError::Shape(format!(
            "actual {:?} vs predicted {:?}",
            actual.shape(),
            predicted.shape()
        )));
    }
    if actual.is_empty() {
        return Err(EvalError::Shape("no prediction points".into()));
    }
    Ok((actual - predicted).norm_squared() / actual.len() as f64)
}

/// Cycle indices `0 < t1 < t2 <= t`: fit on `[0, t1)`, validate on
/// `[t1, t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingSplit {
    pub t1: usize,
    pub t2: usize,
    pub t: usize,
}

impl RollingSplit {
    /// Every segment must hold at least `max_lag + 10` cycles.
    pub fn new(t1: usize, t2: usize, t: usize, max_lag: usize) -> Result<Self, EvalError> {
        if !(0 < t1 && t1 < t2 && t2 <= t) {
            return Err(EvalError::InvalidSplit(format!(
                "need 0 < T1 < T2 <= T, got {t1}, {t2}, {t}"
            )));
        }
        let min = max_lag + 10;
        if t1 < min || t2 - t1 < min {
            return Err(EvalError::InvalidSplit(format!(
                "segments of {t1} and {} cycles are shorter than {min}",
                t2 - t1
            )));
        }
        Ok(Self { t1, t2, t })
    }

    /// `t1` and `t2` at the given fractions of `t`.
    pub fn from_fractions(
        t: usize,
        train: f64,
        validate: f64,
        max_lag: usize,
    ) -> Result<Self, EvalError> {
        if !(0.0 < train && train < validate && validate <= 1.0) {
            return Err(EvalError::InvalidSplit(format!(
                "fractions {train} and {validate} must satisfy 0 < a < b <= 1"
            )));
        }
        let t1 = (train * t as f64).round() as usize;
        let t2 = (validate * t as f64).round() as usize;
        Self::new(t1, t2, t, max_lag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Averaging,
    Univariate,
    Var,
    Lasso,
    HgLasso,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Averaging,
        ModelKind::Univariate,
        ModelKind::Var,
        ModelKind::Lasso,
        ModelKind::HgLasso,
    ];

    pub fn penalty(self) -> Option<PenaltyFamily> {
        match self {
            ModelKind::Var => Some(PenaltyFamily::None),
            ModelKind::Lasso => Some(PenaltyFamily::Lasso),
            ModelKind::HgLasso => Some(PenaltyFamily::HgLasso),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Averaging => "averaging",
            ModelKind::Univariate => "univariate",
            ModelKind::Var => "var",
            ModelKind::Lasso => "lasso",
            ModelKind::HgLasso => "hglasso",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub holdout: usize,
    pub train_fraction: f64,
    pub validate_fraction: f64,
    /// Log-spaced values in the data-derived lambda grid.
    pub grid_size: usize,
    /// Fixed grid used instead of the data-derived one.
    pub lambda_grid: Option<Vec<f64>>,
    pub fista: FistaSettings,
    pub univariate_max_ma: usize,
    pub difference: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            holdout: DEFAULT_HOLDOUT,
            train_fraction: 0.6,
            validate_fraction: 0.8,
            grid_size: DEFAULT_GRID_SIZE,
            lambda_grid: None,
            fista: FistaSettings::default(),
            univariate_max_ma: 1,
            difference: false,
        }
    }
}

/// Outcome of the validation search over a lambda grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Validation MSPE per grid value; `None` where the fit failed.
    pub scores: Vec<Option<f64>>,
}

/// One-step predictions of cycles `from..to`, each from the true preceding
/// observations. Returns a `k x (to - from)` matrix.
pub fn var_predictions(
    model: &CoefficientSet,
    panel: &PanelSeries,
    from: usize,
    to: usize,
) -> Result<DMatrix<f64>, EvalError> {
    let p = model.p();
    if from < p || to > panel.len() || from > to {
        return Err(EvalError::Shape(format!(
            "cannot predict cycles {from}..{to} of {} with {p} lags",
            panel.len()
        )));
    }
    let mut out = DMatrix::zeros(panel.k(), to - from);
    for t in from..to {
        let history: Vec<Vec<f64>> = (t - p..t).map(|s| panel.observation(s)).collect();
        let pred = model.predict_one_step(&history)?;
        out.set_column(t - from, &nalgebra::DVector::from_vec(pred));
    }
    Ok(out)
}

fn actual_block(panel: &PanelSeries, from: usize, to: usize) -> DMatrix<f64> {
    DMatrix::from_fn(panel.k(), to - from, |i, c| panel.at(i, from + c))
}

/// Fits the grid on `[0, t1)` with warm starts and scores one-step
/// predictions on `[t1, t2)`. The lowest score wins; ties go to the larger
/// lambda. An empty grid in `penalty` means the data-derived default.
pub fn select_lambda(
    panel: &PanelSeries,
    p: usize,
    penalty: &PenaltySpec,
    split: &RollingSplit,
    settings: &FistaSettings,
) -> Result<LambdaChoice, EvalError> {
    if panel.len() < split.t2 {
        return Err(EvalError::InsufficientData {
            len: panel.len(),
            needed: split.t2,
        });
    }
    let train = panel.slice(0..split.t1)?;
    let reg = build_regression(&train, p)?;
    let spec = if penalty.lambda_grid().is_empty() {
        let grid = default_lambda_grid(&reg, penalty.family(), DEFAULT_GRID_SIZE);
        PenaltySpec::new(penalty.family(), grid)?
    } else {
        penalty.clone()
    };
    if spec.lambda_grid().is_empty() {
        return Err(EvalError::AllFitsFailed("empty lambda grid".into()));
    }
    let path = fit_path(&reg, &spec, settings)?;
    let actual = actual_block(panel, split.t1, split.t2);
    let mut scores = Vec::with_capacity(path.len());
    let mut best: Option<(f64, f64)> = None;
    for (model, &lambda) in path.iter().zip(spec.lambda_grid()) {
        let score = var_predictions(model, panel, split.t1, split.t2)
            .and_then(|pred| mspe(&actual, &pred))
            .ok()
            .filter(|s| s.is_finite());
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((lambda, s));
            }
        }
        scores.push(score);
    }
    let (lambda, _) = best.ok_or_else(|| EvalError::AllFitsFailed("no finite validation score".into()))?;
    Ok(LambdaChoice {
        lambda,
        grid: spec.lambda_grid().to_vec(),
        scores,
    })
}

/// Scores of one forecaster at one lag order (`None` for the averaging
/// baseline, which has no lag).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub model: ModelKind,
    pub lag: Option<usize>,
    pub mspe: f64,
    pub per_signal_mspe: Vec<f64>,
    /// Lambda used for the final fit, for penalised models.
    pub lambda: Option<f64>,
    /// `k x holdout` one-step predictions.
    pub predictions: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub meta: PanelMeta,
    pub labels: Vec<String>,
    /// First holdout cycle.
    pub holdout_start: usize,
    /// `k x holdout` observed cycle lengths.
    pub actual: DMatrix<f64>,
    pub entries: Vec<ModelEntry>,
    /// Intercept-only predictor per lag, for reference.
    pub intercept_only: Vec<ModelEntry>,
}

impl EvaluationReport {
    pub fn entry(&self, model: ModelKind, lag: Option<usize>) -> Option<&ModelEntry> {
        self.entries
            .iter()
            .find(|e| e.model == model && (e.lag == lag || model == ModelKind::Averaging))
    }

    pub fn holdout(&self) -> usize {
        self.actual.ncols()
    }
}

fn entry(
    model: ModelKind,
    lag: Option<usize>,
    lambda: Option<f64>,
    actual: &DMatrix<f64>,
    predictions: DMatrix<f64>,
) -> Result<ModelEntry, EvalError> {
    let per_signal_mspe = (0..actual.nrows())
        .map(|i| {
            let a = actual.rows(i, 1).into_owned();
            let p = predictions.rows(i, 1).into_owned();
            mspe(&a, &p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelEntry {
        model,
        lag,
        mspe: mspe(actual, &predictions)?,
        per_signal_mspe,
        lambda,
        predictions,
    })
}

/// Holdout predictions of the last-`AVERAGE_WINDOW` mean.
pub fn averaging_predictions(panel: &PanelSeries, from: usize) -> Result<DMatrix<f64>, EvalError> {
    let mut out = DMatrix::zeros(panel.k(), panel.len() - from);
    for i in 0..panel.k() {
        let series = panel.component(i);
        for t in from..panel.len() {
            out[(i, t - from)] = average_last_k_forecast(&series[..t], AVERAGE_WINDOW)?;
        }
    }
    Ok(out)
}

/// Tunes, refits and scores a penalised VAR at lag `p`. The tuned lambda is
/// rescaled by the ratio of usable cycles because the objective is not
/// normalised by sample size.
pub fn evaluate_penalized(
    panel: &PanelSeries,
    pre_len: usize,
    p: usize,
    family: PenaltyFamily,
    split: &RollingSplit,
    options: &EvalOptions,
) -> Result<(CoefficientSet, f64), EvalError> {
    let grid = options.lambda_grid.clone().unwrap_or_default();
    let spec = if grid.is_empty() {
        let train = build_regression(&panel.slice(0..split.t1)?, p)?;
        PenaltySpec::new(family, default_lambda_grid(&train, family, options.grid_size))?
    } else {
        PenaltySpec::new(family, grid)?
    };
    let choice = select_lambda(panel, p, &spec, split, &options.fista)?;
    let scale = (pre_len - p) as f64 / (split.t1 - p) as f64;
    let lambda = choice.lambda * scale;
    let reg = build_regression(&panel.slice(0..pre_len)?, p)?;
    let model = fit_penalized(&reg, &spec, lambda, &options.fista)?;
    Ok((model, lambda))
}

/// Runs every forecaster at every lag in `lags` on one panel: tune on the
/// data before the holdout, refit on all of it, then predict each holdout
/// cycle one step ahead from the true history.
pub fn run_comparison(
    panel: &PanelSeries,
    lags: &[usize],
    options: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    let t = panel.len();
    let h = options.holdout;
    if h == 0 || t < h + 100 {
        return Err(EvalError::InsufficientData {
            len: t,
            needed: h.max(1) + 100,
        });
    }
    if lags.is_empty() || lags.contains(&0) {
        return Err(EvalError::InvalidSplit("lag list must hold positive orders".into()));
    }
    let pre_len = t - h;
    let max_lag = *lags.iter().max().expect("non-empty");
    let split = RollingSplit::from_fractions(
        pre_len,
        options.train_fraction,
        options.validate_fraction,
        max_lag,
    )?;
    let pre = panel.slice(0..pre_len)?;
    let actual = actual_block(panel, pre_len, t);

    let mut entries = vec![entry(
        ModelKind::Averaging,
        None,
        None,
        &actual,
        averaging_predictions(panel, pre_len)?,
    )?];
    let mut intercept_only = Vec::new();
    for &p in lags {
        let mut uni = DMatrix::zeros(panel.k(), h);
        for i in 0..panel.k() {
            let model = fit_selected(pre.component(i), p, options.univariate_max_ma, options.difference)?;
            let f = forecast_series(&model, panel.component(i), pre_len)?;
            uni.set_row(i, &nalgebra::RowDVector::from_vec(f));
        }
        entries.push(entry(ModelKind::Univariate, Some(p), None, &actual, uni)?);

        let reg = build_regression(&pre, p)?;
        let base = fit_intercept_only(&reg);
        intercept_only.push(entry(
            ModelKind::Var,
            Some(p),
            None,
            &actual,
            var_predictions(&base, panel, pre_len, t)?,
        )?);
        let ols = fit_ols(&reg)?;
        entries.push(entry(
            ModelKind::Var,
            Some(p),
            None,
            &actual,
            var_predictions(&ols, panel, pre_len, t)?,
        )?);
        for (kind, family) in [
            (ModelKind::Lasso, PenaltyFamily::Lasso),
            (ModelKind::HgLasso, PenaltyFamily::HgLasso),
        ] {
            let (model, lambda) = evaluate_penalized(panel, pre_len, p, family, &split, options)?;
            entries.push(entry(
                kind,
                Some(p),
                Some(lambda),
                &actual,
                var_predictions(&model, panel, pre_len, t)?,
            )?);
        }
    }
    Ok(EvaluationReport {
        meta: panel.meta().clone(),
        labels: panel.labels().to_vec(),
        holdout_start: pre_len,
        actual,
        entries,
        intercept_only,
    })
}
