use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvaluationReport, ModelKind};
use crate::fsio::write_atomic;

/// Median MSPE of one forecaster at one lag over the seeds of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub spacing_m: Option<f64>,
    pub demand_vph: Option<f64>,
    pub model: ModelKind,
    pub lag: Option<usize>,
    pub seeds: usize,
    pub median_mspe: f64,
    /// Median MSPE of the last (most downstream) component.
    pub median_last_signal_mspe: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// f64 keys in a BTreeMap, via their bit patterns for non-negative values
fn key(v: Option<f64>) -> i64 {
    v.map_or(-1, |x| x.to_bits() as i64)
}

/// Score of one forecaster at one lag on one seeded panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub spacing_m: Option<f64>,
    pub demand_vph: Option<f64>,
    pub seed: Option<u64>,
    pub model: ModelKind,
    pub lag: Option<usize>,
    pub lambda: Option<f64>,
    pub mspe: f64,
    pub last_signal_mspe: f64,
}

/// Flattens reports into one score per (report, entry).
pub fn seed_scores(reports: &[EvaluationReport]) -> Vec<SeedScore> {
    reports
        .iter()
        .flat_map(|r| {
            r.entries.iter().map(|e| SeedScore {
                spacing_m: r.meta.spacing_m,
                demand_vph: r.meta.demand_vph,
                seed: r.meta.seed,
                model: e.model,
                lag: e.lag,
                lambda: e.lambda,
                mspe: e.mspe,
                last_signal_mspe: *e.per_signal_mspe.last().unwrap_or(&f64::NAN),
            })
        })
        .collect()
}

pub fn write_seed_scores(path: &Path, scores: &[SeedScore]) -> io::Result<()> {
    write_atomic(path, |out| {
        let mut writer = csv::Writer::from_writer(out);
        for s in scores {
            writer.serialize(s)?;
        }
        writer.flush()
    })
}

pub fn read_seed_scores<R: io::Read>(input: R) -> Result<Vec<SeedScore>, csv::Error> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
        .deserialize()
        .collect()
}

/// Groups reports by scenario (spacing, demand) and takes medians over
/// seeds.
pub fn aggregate_reports(reports: &[EvaluationReport]) -> Vec<AggregateRow> {
    aggregate_scores(&seed_scores(reports))
}

/// Medians over seeds. The output order is deterministic: spacing, demand,
/// then lag with the averaging baseline first, then model.
pub fn aggregate_scores(scores: &[SeedScore]) -> Vec<AggregateRow> {
    type Key = (i64, i64, usize, ModelKind);
    let mut groups: BTreeMap<Key, (Option<f64>, Option<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in scores {
        let k = (key(s.spacing_m), key(s.demand_vph), s.lag.unwrap_or(0), s.model);
        let g = groups
            .entry(k)
            .or_insert_with(|| (s.spacing_m, s.demand_vph, Vec::new(), Vec::new()));
        g.2.push(s.mspe);
        g.3.push(s.last_signal_mspe);
    }
    groups
        .into_iter()
        .map(|((_, _, lag, model), (spacing, demand, all, last))| AggregateRow {
            spacing_m: spacing,
            demand_vph: demand,
            model,
            lag: (lag > 0).then_some(lag),
            seeds: all.len(),
            median_mspe: median(all),
            median_last_signal_mspe: median(last),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn demands(rows: &[&AggregateRow]) -> Vec<Option<f64>> {
    let mut d: Vec<Option<f64>> = rows.iter().map(|r| r.demand_vph).collect();
    d.sort_by(|a, b| a.unwrap_or(-1.0).total_cmp(&b.unwrap_or(-1.0)));
    d.dedup();
    d
}

// Rows in first-seen (lag, model) order, one column per demand; `leading`
// is prepended to every record.
fn write_rows(
    out: &mut dyn Write,
    group: &[&AggregateRow],
    demands: &[Option<f64>],
    leading: Option<String>,
    value: fn(&AggregateRow) -> f64,
) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut order: Vec<(Option<usize>, ModelKind)> = Vec::new();
    for r in group {
        if !order.contains(&(r.lag, r.model)) {
            order.push((r.lag, r.model));
        }
    }
    for (lag, model) in order {
        let mut record: Vec<String> = leading.iter().cloned().collect();
        record.push(lag.map_or_else(String::new, |l| l.to_string()));
        record.push(model.to_string());
        for d in demands {
            let cell = group
                .iter()
                .find(|r| r.lag == lag && r.model == model && r.demand_vph == *d)
                .map(|r| value(r));
            record.push(cell.map_or_else(String::new, |v| format!("{v:.6}")));
        }
        writer.write_record(&record)?;
    }
    writer.flush()
}

fn by_spacing(rows: &[AggregateRow]) -> Vec<(Option<f64>, Vec<&AggregateRow>)> {
    let mut out: Vec<(Option<f64>, Vec<&AggregateRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _)| *s == r.spacing_m) {
            Some((_, v)) => v.push(r),
            None => out.push((r.spacing_m, vec![r])),
        }
    }
    out
}

/// One CSV per spacing: rows are lag x model, columns are demand levels,
/// values are median MSPE over all signals. Returns the written paths.
pub fn write_tables(dir: &Path, rows: &[AggregateRow]) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (spacing, group) in by_spacing(rows) {
        let name = match spacing {
            Some(s) => format!("mspe_spacing_{s}m.csv"),
            None => "mspe.csv".into(),
        };
        let path = dir.join(name);
        write_atomic(&path, |out| {
            writeln!(out, "# spacing_m={}", fmt_opt(spacing))?;
            writeln!(out, "# seeds={}", group.iter().map(|r| r.seeds).max().unwrap_or(0))?;
            let demands = demands(&group);
            let mut header = vec!["lag".to_string(), "model".into()];
            header.extend(demands.iter().copied().map(fmt_opt));
            writeln!(out, "{}", header.join(","))?;
            write_rows(out, &group, &demands, None, |r| r.median_mspe)
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// The same layout for the most downstream signal only, all spacings in one
/// file with a leading spacing column.
pub fn write_signal_table(path: &Path, rows: &[AggregateRow]) -> io::Result<()> {
    let all: Vec<&AggregateRow> = rows.iter().collect();
    let demands = demands(&all);
    write_atomic(path, |out| {
        let mut header = vec!["spacing_m".to_string(), "lag".into(), "model".into()];
        header.extend(demands.iter().copied().map(fmt_opt));
        writeln!(out, "{}", header.join(","))?;
        for (spacing, group) in by_spacing(rows) {
            write_rows(out, &group, &demands, Some(fmt_opt(spacing)), |r| {
                r.median_last_signal_mspe
            })?;
        }
        Ok(())
    })
}

/// Holdout trace of one report: cycle index, signal, actual, then one column
/// per forecaster and lag.
pub fn write_trace_csv<W: Write>(report: &EvaluationReport, out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["cycle_index".to_string(), "signal".into(), "actual".into()];
    for e in &report.entries {
        header.push(match e.lag {
            Some(l) => format!("{}_lag{l}", e.model),
            None => e.model.to_string(),
        });
    }
    writer.write_record(&header)?;
    for c in 0..report.holdout() {
        for (i, label) in report.labels.iter().enumerate() {
            let mut record = vec![
                (report.holdout_start + c).to_string(),
                label.clone(),
                report.actual[(i, c)].to_string(),
            ];
            record.extend(report.entries.iter().map(|e| e.predictions[(i, c)].to_string()));
            writer.write_record(&record)?;
        }
    }
    writer.flush()
}
