//! Lag-1 autocorrelation of the most downstream signal as mainline demand
//! grows, median over a few seeds.

use cyclecast::series::sample_acf;
use cyclecast::sim::{simulate_corridor, CorridorConfig};
use rayon::prelude::*;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn main() {
    let spacing = 200.0;
    for demand in [800.0, 1200.0, 1600.0] {
        let acfs: Vec<(f64, f64)> = (1..=5u64)
            .into_par_iter()
            .map(|seed| {
                let cfg = CorridorConfig::scenario(spacing, demand, seed).with_hours(5.0);
                let panel = simulate_corridor(&cfg).unwrap();
                let last = panel.k() - 1;
                let own = sample_acf(&panel, last, last, 5).unwrap();
                let cross = sample_acf(&panel, last, last - 1, 5).unwrap();
                (own.at(1), cross.at(1))
            })
            .collect();
        let own = median(acfs.iter().map(|a| a.0).collect());
        let cross = median(acfs.iter().map(|a| a.1).collect());
        println!("{demand:>6} veh/h  acf(S5, lag 1) = {own:.3}  ccf(S5, S4, lag 1) = {cross:.3}");
    }
}
