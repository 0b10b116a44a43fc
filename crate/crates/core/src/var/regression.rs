use nalgebra::{DMatrix, DVector};

use super::VarError;
use crate::series::PanelSeries;

/// Compact regression form `Y = Phi Z + U` of a demeaned panel.
///
/// Row `(l - 1) * k + j` of `Z` holds component `j` lagged `l` cycles, so the
/// coefficient row of a target is laid out lag-major, matching
/// `[Phi(1) ... Phi(p)]`.
///
/// The panel means leave small residual offsets in each row of `Y` and `Z`
/// (the lagged windows do not cover the same cycles). Fits work on the
/// row-centred copies so the intercept stays unpenalised and exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForm {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub p: usize,
    /// Per-component means removed before stacking.
    pub means: Vec<f64>,
    y_bar: DVector<f64>,
    z_bar: DVector<f64>,
    yc: DMatrix<f64>,
    zc: DMatrix<f64>,
}

impl RegressionForm {
    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    /// Number of usable time points, `T - p`.
    pub fn n_eff(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.z.nrows()
    }

    /// Row-centred responses.
    pub fn y_centered(&self) -> &DMatrix<f64> {
        &self.yc
    }

    /// Row-centred regressors.
    pub fn z_centered(&self) -> &DMatrix<f64> {
        &self.zc
    }

    /// Row means of `Y` and `Z` removed by the centring.
    pub fn row_offsets(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.y_bar, &self.z_bar)
    }

    /// `Z Z'` on the centred regressors.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.zc * self.zc.transpose()
    }

    /// `Z Y_i'` for target row `i`, centred.
    pub fn cross(&self, i: usize) -> DVector<f64> {
        &self.zc * self.yc.row(i).transpose()
    }

    /// Largest singular value of the centred `Z`, by power iteration on
    /// `Z Z'`.
    pub fn largest_singular_value(&self) -> f64 {
        largest_eigenvalue(&self.gram()).sqrt()
    }
}

fn center_rows(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.ncols() as f64;
    let bar = DVector::from_fn(m.nrows(), |r, _| m.row(r).sum() / n);
    let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] - bar[r]);
    (centered, bar)
}

/// Demeans the panel and stacks `Y` and `Z` over cycles `p..T`.
pub fn build_regression(panel: &PanelSeries, p: usize) -> Result<RegressionForm, VarError> {
    let t_len = panel.len();
    if p == 0 {
        return Err(VarError::InvalidLag { p, len: t_len });
    }
    if p >= t_len {
        return Err(VarError::InvalidLag { p, len: t_len });
    }
    let k = panel.k();
    let means = panel.means();
    let n = t_len - p;
    let centered = |j: usize, t: usize| panel.at(j, t) - means[j];
    let y = DMatrix::from_fn(k, n, |i, c| centered(i, c + p));
    let z = DMatrix::from_fn(k * p, n, |r, c| {
        let lag = r / k + 1;
        let j = r % k;
        centered(j, c + p - lag)
    });
    let (yc, y_bar) = center_rows(&y);
    let (zc, z_bar) = center_rows(&z);
    Ok(RegressionForm {
        y,
        z,
        p,
        means,
        y_bar,
        z_bar,
        yc,
        zc,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix, to a
/// relative tolerance of 1e-6.
pub(crate) fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-6 * next.abs() {
            // Rayleigh quotient at the converged vector
            return (m * &v).dot(&v).max(next);
        }
        estimate = next;
    }
    estimate
}
