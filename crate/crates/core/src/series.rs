//! Panel time-series container for per-signal cycle lengths.
//!
//! A [`PanelSeries`] holds `k` aligned components (one per signal, ordered
//! upstream to downstream) over `T` cycles. Values are cycle lengths in
//! seconds and are always strictly positive.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use thiserror::Error;

/// Default number of lags reported by [`sample_acf`] callers.
pub const DEFAULT_MAX_LAG: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("panel needs at least one component")]
    Empty,
    #[error("component {component} has no observations")]
    EmptyComponent { component: usize },
    #[error("component {component} entry {index} is not a positive finite value ({value})")]
    NonPositive {
        component: usize,
        index: usize,
        value: f64,
    },
    #[error("component {component} has {found} entries, expected {expected}")]
    Misaligned {
        component: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} labels, got {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("component index {index} out of range for a {k}-component panel")]
    ComponentOutOfRange { index: usize, k: usize },
    #[error("max lag {max_lag} must be smaller than the series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("component {component} is constant; correlations are undefined")]
    Degenerate { component: usize },
    #[error("history has {len} entries, need at least {needed}")]
    ShortHistory { len: usize, needed: usize },
    #[error("invalid range {start}..{end} for a series of length {len}")]
    BadRange { start: usize, end: usize, len: usize },
    #[error("malformed panel csv: {0}")]
    Csv(String),
}

/// Scenario descriptor carried alongside a panel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelMeta {
    pub spacing_m: Option<f64>,
    pub demand_vph: Option<f64>,
    pub seed: Option<u64>,
}

impl PanelMeta {
    pub fn scenario(spacing_m: f64, demand_vph: f64, seed: u64) -> Self {
        Self {
            spacing_m: Some(spacing_m),
            demand_vph: Some(demand_vph),
            seed: Some(seed),
        }
    }
}

/// `k` aligned cycle-length series over `T` cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    values: Vec<Vec<f64>>,
    labels: Vec<String>,
    meta: PanelMeta,
}

impl PanelSeries {
    /// Builds a panel from already aligned components.
    pub fn new(
        values: Vec<Vec<f64>>,
        labels: Vec<String>,
        meta: PanelMeta,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if labels.len() != values.len() {
            return Err(SeriesError::LabelCount {
                expected: values.len(),
                found: labels.len(),
            });
        }
        let len = values[0].len();
        for (component, series) in values.iter().enumerate() {
            if series.is_empty() {
                return Err(SeriesError::EmptyComponent { component });
            }
            if series.len() != len {
                return Err(SeriesError::Misaligned {
                    component,
                    expected: len,
                    found: series.len(),
                });
            }
            check_positive(component, series)?;
        }
        Ok(Self {
            values,
            labels,
            meta,
        })
    }

    /// Same as [`PanelSeries::new`] with labels `S1..Sk`.
    pub fn from_components(values: Vec<Vec<f64>>) -> Result<Self, SeriesError> {
        let labels = default_labels(values.len());
        Self::new(values, labels, PanelMeta::default())
    }

    /// Number of components.
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Number of cycles.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn meta(&self) -> &PanelMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: PanelMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Value of component `i` at cycle `t`.
    pub fn at(&self, i: usize, t: usize) -> f64 {
        self.values[i][t]
    }

    /// Observation vector `y_t` across all components.
    pub fn observation(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|s| s[t]).collect()
    }

    /// Per-component sample means.
    pub fn means(&self) -> Vec<f64> {
        self.values.iter().map(|s| mean(s)).collect()
    }

    /// Cycles in `range`, keeping labels and metadata.
    pub fn slice(&self, range: Range<usize>) -> Result<Self, SeriesError> {
        if range.start >= range.end || range.end > self.len() {
            return Err(SeriesError::BadRange {
                start: range.start,
                end: range.end,
                len: self.len(),
            });
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .map(|s| s[range.clone()].to_vec())
                .collect(),
            labels: self.labels.clone(),
            meta: self.meta.clone(),
        })
    }

    /// A single-component panel holding component `i`.
    pub fn select(&self, i: usize) -> Result<Self, SeriesError> {
        self.check_component(i)?;
        Ok(Self {
            values: vec![self.values[i].clone()],
            labels: vec![self.labels[i].clone()],
            meta: self.meta.clone(),
        })
    }

    /// Copy with every value replaced by `f(component, cycle, value)`.
    pub fn map_values(
        &self,
        mut f: impl FnMut(usize, usize, f64) -> f64,
    ) -> Result<Self, SeriesError> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, s)| s.iter().enumerate().map(|(t, &v)| f(i, t, v)).collect())
            .collect();
        Self::new(values, self.labels.clone(), self.meta.clone())
    }

    fn check_component(&self, i: usize) -> Result<(), SeriesError> {
        if i >= self.k() {
            return Err(SeriesError::ComponentOutOfRange {
                index: i,
                k: self.k(),
            });
        }
        Ok(())
    }

    /// Writes the panel as CSV: `#` metadata lines, a header of labels,
    /// then one row per cycle.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Some(spacing) = self.meta.spacing_m {
            writeln!(out, "# spacing_m={spacing}")?;
        }
        if let Some(demand) = self.meta.demand_vph {
            writeln!(out, "# demand_vph={demand}")?;
        }
        if let Some(seed) = self.meta.seed {
            writeln!(out, "# seed={seed}")?;
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.labels)?;
        for t in 0..self.len() {
            writer.write_record(self.values.iter().map(|s| s[t].to_string()))?;
        }
        writer.flush()
    }

    /// Parses the format produced by [`PanelSeries::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SeriesError> {
        let mut meta = PanelMeta::default();
        let mut body = String::new();
        for line in input.lines() {
            let line = line.map_err(|e| SeriesError::Csv(e.to_string()))?;
            if let Some(comment) = line.trim_start().strip_prefix('#') {
                parse_meta_line(comment, &mut meta)?;
            } else if !line.trim().is_empty() {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let labels: Vec<String> = reader
            .headers()
            .map_err(|e| SeriesError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if labels.is_empty() {
            return Err(SeriesError::Empty);
        }
        let mut values = vec![Vec::new(); labels.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| SeriesError::Csv(e.to_string()))?;
            if record.len() != labels.len() {
                return Err(SeriesError::Csv(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    record.len(),
                    labels.len()
                )));
            }
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    SeriesError::Csv(format!("row {}: cannot parse {field:?}", row + 1))
                })?;
                values[i].push(v);
            }
        }
        Self::new(values, labels, meta)
    }
}

impl fmt::Display for PanelSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "panel k={} T={}", self.k(), self.len())
    }
}

fn parse_meta_line(comment: &str, meta: &mut PanelMeta) -> Result<(), SeriesError> {
    let Some((key, value)) = comment.split_once('=') else {
        return Ok(());
    };
    let value = value.trim();
    let bad = || SeriesError::Csv(format!("bad metadata line: {comment:?}"));
    match key.trim() {
        "spacing_m" => meta.spacing_m = Some(value.parse().map_err(|_| bad())?),
        "demand_vph" => meta.demand_vph = Some(value.parse().map_err(|_| bad())?),
        "seed" => meta.seed = Some(value.parse().map_err(|_| bad())?),
        _ => {}
    }
    Ok(())
}

fn check_positive(component: usize, series: &[f64]) -> Result<(), SeriesError> {
    match series
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        Some((index, &value)) => Err(SeriesError::NonPositive {
            component,
            index,
            value,
        }),
        None => Ok(()),
    }
}

pub fn default_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("S{i}")).collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Aligns variable-length cycle sequences into a rectangular panel by
/// dropping trailing cycles down to the shortest sequence.
pub fn make_panel(
    raw: Vec<Vec<f64>>,
    labels: Vec<String>,
    meta: PanelMeta,
) -> Result<PanelSeries, SeriesError> {
    if raw.is_empty() {
        return Err(SeriesError::Empty);
    }
    for (component, series) in raw.iter().enumerate() {
        if series.is_empty() {
            return Err(SeriesError::EmptyComponent { component });
        }
        check_positive(component, series)?;
    }
    let len = raw.iter().map(Vec::len).min().unwrap_or(0);
    let values = raw
        .into_iter()
        .map(|mut s| {
            s.truncate(len);
            s
        })
        .collect();
    PanelSeries::new(values, labels, meta)
}

/// Sample cross-correlations between components `i` and `j` for lags
/// `0..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfTable {
    pub pair: (usize, usize),
    pub correlations: Vec<f64>,
}

impl AcfTable {
    pub fn max_lag(&self) -> usize {
        self.correlations.len() - 1
    }

    pub fn at(&self, lag: usize) -> f64 {
        self.correlations[lag]
    }
}

/// Correlation at lag `l` between component `i` at `t` and component `j` at
/// `t - l`, with full-sample means and the usual `1/T` normalisation.
pub fn sample_acf(
    panel: &PanelSeries,
    i: usize,
    j: usize,
    max_lag: usize,
) -> Result<AcfTable, SeriesError> {
    panel.check_component(i)?;
    panel.check_component(j)?;
    let len = panel.len();
    if max_lag >= len {
        return Err(SeriesError::LagTooLarge { max_lag, len });
    }
    let xi = centered(panel.component(i));
    let xj = centered(panel.component(j));
    let var_i = lagged_sum(&xi, &xi, 0);
    let var_j = lagged_sum(&xj, &xj, 0);
    if var_i <= 0.0 {
        return Err(SeriesError::Degenerate { component: i });
    }
    if var_j <= 0.0 {
        return Err(SeriesError::Degenerate { component: j });
    }
    let scale = (var_i * var_j).sqrt();
    let correlations = (0..=max_lag)
        .map(|lag| (lagged_sum(&xi, &xj, lag) / scale).clamp(-1.0, 1.0))
        .collect();
    Ok(AcfTable {
        pair: (i, j),
        correlations,
    })
}

/// Correlation tables for every ordered pair `(i, j)`, row-major.
pub fn acf_matrix(panel: &PanelSeries, max_lag: usize) -> Result<Vec<AcfTable>, SeriesError> {
    let k = panel.k();
    (0..k * k)
        .map(|idx| sample_acf(panel, idx / k, idx % k, max_lag))
        .collect()
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    xs.iter().map(|x| x - m).collect()
}

// sum_t a[t] * b[t - lag]
fn lagged_sum(a: &[f64], b: &[f64], lag: usize) -> f64 {
    a[lag..].iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forecast of the next cycle as the mean of the last `k` cycles.
pub fn average_last_k_forecast(history: &[f64], k: usize) -> Result<f64, SeriesError> {
    if k == 0 || history.len() < k {
        return Err(SeriesError::ShortHistory {
            len: history.len(),
            needed: k.max(1),
        });
    }
    Ok(mean(&history[history.len() - k..]))
}
