use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CoefficientSet, PenaltyFamily, VarError};
use crate::fsio::write_atomic;

/// `manifest.toml` next to the per-lag matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientManifest {
    pub k: usize,
    pub p: usize,
    pub family: PenaltyFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub intercept: Vec<f64>,
    /// Lag matrix files in lag order, relative to the manifest.
    pub lag_files: Vec<String>,
    pub residual_cov_file: String,
}

fn io_err(e: impl std::fmt::Display) -> VarError {
    VarError::Io(e.to_string())
}

fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), VarError> {
    write_atomic(path, |w| {
        let mut writer = csv::Writer::from_writer(w);
        for r in 0..m.nrows() {
            writer.write_record(m.row(r).iter().map(|v| v.to_string()))?;
        }
        writer.flush()
    })
    .map_err(io_err)
}

fn read_matrix(path: &Path, k: usize) -> Result<DMatrix<f64>, VarError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(k * k);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(io_err)?;
        if record.len() != k {
            return Err(io_err(format!("{}: expected {k} columns", path.display())));
        }
        for field in &record {
            values.push(field.trim().parse::<f64>().map_err(io_err)?);
        }
        rows += 1;
    }
    if rows != k {
        return Err(io_err(format!("{}: expected {k} rows, found {rows}", path.display())));
    }
    Ok(DMatrix::from_row_slice(k, k, &values))
}

/// Writes `phi_lag{l}.csv` for each lag, `residual_cov.csv` and
/// `manifest.toml` into `dir`.
pub fn write_coefficients(dir: &Path, model: &CoefficientSet) -> Result<CoefficientManifest, VarError> {
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut lag_files = Vec::with_capacity(model.p());
    for (l, phi) in model.lags.iter().enumerate() {
        let name = format!("phi_lag{}.csv", l + 1);
        write_matrix(&dir.join(&name), phi)?;
        lag_files.push(name);
    }
    let residual_cov_file = "residual_cov.csv".to_string();
    write_matrix(&dir.join(&residual_cov_file), &model.residual_cov)?;
    let manifest = CoefficientManifest {
        k: model.k(),
        p: model.p(),
        family: model.family,
        lambda: model.lambda,
        iterations: model.iterations,
        intercept: model.intercept.clone(),
        lag_files,
        residual_cov_file,
    };
    let text = toml::to_string(&manifest).map_err(io_err)?;
    write_atomic(&dir.join("manifest.toml"), |w| w.write_all(text.as_bytes())).map_err(io_err)?;
    Ok(manifest)
}

pub fn read_coefficients(dir: &Path) -> Result<CoefficientSet, VarError> {
    let text = fs::read_to_string(dir.join("manifest.toml")).map_err(io_err)?;
    let manifest: CoefficientManifest = toml::from_str(&text).map_err(io_err)?;
    if manifest.intercept.len() != manifest.k || manifest.lag_files.len() != manifest.p {
        return Err(io_err("manifest dimensions disagree"));
    }
    let lags = manifest
        .lag_files
        .iter()
        .map(|f| read_matrix(&dir.join(f), manifest.k))
        .collect::<Result<Vec<_>, _>>()?;
    let residual_cov = read_matrix(&dir.join(&manifest.residual_cov_file), manifest.k)?;
    Ok(CoefficientSet {
        intercept: manifest.intercept,
        lags,
        residual_cov,
        family: manifest.family,
        lambda: manifest.lambda,
        iterations: manifest.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(family: PenaltyFamily, lambda: Option<f64>) -> CoefficientSet {
        CoefficientSet {
            intercept: vec![10.5, -2.25],
            lags: vec![
                DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.125, 0.3]),
                DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.0]),
            ],
            residual_cov: DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]),
            family,
            lambda,
            iterations: lambda.map(|_| 57),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = sample(PenaltyFamily::HgLasso, Some(3.5));
        let manifest = write_coefficients(dir.path(), &model).unwrap();
        assert_eq!(manifest.lag_files, vec!["phi_lag1.csv", "phi_lag2.csv"]);
        assert_eq!(read_coefficients(dir.path()).unwrap(), model);
    }

    #[test]
    fn least_squares_manifest_has_no_lambda() {
        let dir = tempfile::tempdir().unwrap();
        write_coefficients(dir.path(), &sample(PenaltyFamily::None, None)).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(!text.contains("lambda"), "{text}");
        assert!(text.contains("family = \"none\""));
    }
}
