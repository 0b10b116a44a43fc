//! Per-signal ARMA baseline: order selection, then one-step forecasts over
//! the last 75 cycles.

use cyclecast::eval::mspe;
use cyclecast::sim::{simulate_corridor, CorridorConfig};
use cyclecast::univariate::{fit_selected, forecast_series};
use nalgebra::DMatrix;

fn main() {
    let cfg = CorridorConfig::scenario(1000.0, 1200.0, 11).with_hours(5.0);
    let panel = simulate_corridor(&cfg).unwrap();
    let from = panel.len() - 75;
    for (i, label) in panel.labels().iter().enumerate() {
        let series = panel.component(i);
        let model = fit_selected(&series[..from], 3, 1, false).unwrap();
        let forecast = forecast_series(&model, series, from).unwrap();
        let actual = DMatrix::from_row_slice(1, 75, &series[from..]);
        let predicted = DMatrix::from_row_slice(1, 75, &forecast);
        println!(
            "{label}: ARMA({},{}) mean {:.1} s, noise var {:.1}, holdout MSPE {:.1}",
            model.p(),
            model.q(),
            model.mean,
            model.noise_var,
            mspe(&actual, &predicted).unwrap()
        );
    }
}
