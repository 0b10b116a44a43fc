//! Holdout comparison of every forecaster on a handful of seeds, with the
//! median MSPE table printed the way the CLI writes it.
//!
//! Pass `time` as the first argument to build panels by cycle end time
//! instead of by cycle index.

use cyclecast::eval::{aggregate_reports, run_comparison, EvalOptions};
use cyclecast::sim::{simulate_corridor, CorridorConfig, PanelAlignment};
use rayon::prelude::*;

fn main() {
    let alignment = match std::env::args().nth(1).as_deref() {
        Some("time") => PanelAlignment::Time,
        _ => PanelAlignment::CycleIndex,
    };
    let cells: Vec<(f64, u64)> = [1200.0, 1600.0]
        .iter()
        .flat_map(|&d| (1..=5u64).map(move |s| (d, s)))
        .collect();
    let reports: Vec<_> = cells
        .par_iter()
        .map(|&(demand, seed)| {
            let mut cfg = CorridorConfig::scenario(500.0, demand, seed).with_hours(5.0);
            cfg.alignment = alignment;
            let panel = simulate_corridor(&cfg).unwrap();
            run_comparison(&panel, &[1, 2], &EvalOptions::default()).unwrap()
        })
        .collect();

    println!("{alignment:?} alignment, 500 m, median over 5 seeds");
    println!("{:<12} {:>4} {:>10} {:>10}", "model", "lag", "1200", "1600");
    let rows = aggregate_reports(&reports);
    let mut seen = Vec::new();
    for r in &rows {
        if seen.contains(&(r.lag, r.model)) {
            continue;
        }
        seen.push((r.lag, r.model));
        let at = |d: f64| {
            rows.iter()
                .find(|x| x.lag == r.lag && x.model == r.model && x.demand_vph == Some(d))
                .map_or(f64::NAN, |x| x.median_mspe)
        };
        let lag = r.lag.map_or_else(|| "-".to_string(), |l| l.to_string());
        println!("{:<12} {:>4} {:>10.2} {:>10.2}", r.model.to_string(), lag, at(1200.0), at(1600.0));
    }
}
