//! Simulates one corridor scenario and prints per-signal cycle statistics.
//!
//! ```text
//! cargo run --release --example simulate_corridor -- 500 1400 7
//! ```
//! Arguments: spacing (m), mainline demand (veh/h), seed.

use cyclecast::sim::{run_corridor, CorridorConfig};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let spacing = args.first().copied().unwrap_or(500.0);
    let demand = args.get(1).copied().unwrap_or(1200.0);
    let seed = args.get(2).copied().unwrap_or(1.0) as u64;

    let cfg = CorridorConfig::scenario(spacing, demand, seed).with_hours(1.0);
    let run = run_corridor(&cfg).expect("valid scenario");
    println!("{} ({} s warm-up discarded)", run.panel, cfg.warmup_s);
    println!("{:?}", run.invariants);

    for (i, label) in run.panel.labels().iter().enumerate() {
        let c = run.panel.component(i);
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{label}: mean {mean:6.1} s  min {min:5.1}  max {max:5.1}");
    }

    // every signal cycles at its own pace, so the panel is truncated to the
    // slowest one
    let per_signal: Vec<usize> = (0..cfg.n_signals)
        .map(|s| run.cycles.iter().filter(|c| c.signal_id == s).count())
        .collect();
    println!("completed cycles per signal: {per_signal:?}");

    run.panel.write_csv(std::io::stdout().lock()).unwrap();
}
