//! Proximal operators on a hand-made coefficient row, then one row of a
//! VAR solved by FISTA with the objective trace.

use cyclecast::series::PanelSeries;
use cyclecast::var::{
    build_regression, fista_fit_row, hglasso_penalty, hglasso_prox, lasso_prox, FistaSettings,
    PenaltyFamily, RowProblem,
};

fn main() {
    // k = 2 sources, p = 3 lags; entry (l - 1) * k + j is source j at lag l
    let row = [0.9, -0.2, 0.4, 0.1, 0.3, -0.05];
    println!("row            {row:?}");
    println!("lasso  t=0.15  {:?}", lasso_prox(&row, 0.15));
    println!("hglasso t=0.15 {:?}", hglasso_prox(&row, 2, 3, 0.15));
    println!("penalty        {:.4}", hglasso_penalty(&row, 2, 3));

    // noisy VAR(1) with one active cross effect
    let mut a = vec![40.0];
    let mut b = vec![45.0];
    let mut state = 1u64;
    let mut noise = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
    };
    for _ in 0..300 {
        let (x, y) = (*a.last().unwrap(), *b.last().unwrap());
        a.push(20.0 + 0.5 * x + noise());
        b.push(15.0 + 0.3 * x + 0.4 * y + noise());
    }
    let panel = PanelSeries::from_components(vec![a, b]).unwrap();
    let reg = build_regression(&panel, 3).unwrap();
    let gram = reg.gram();
    let step = 1.0 / reg.largest_singular_value().powi(2);
    let problem = RowProblem::new(&reg, &gram, 1, step);
    let settings = FistaSettings {
        record_trace: true,
        ..FistaSettings::default()
    };
    let fit = fista_fit_row(&problem, PenaltyFamily::HgLasso, 5.0, &settings, None).unwrap();
    println!("\nrow 2, lambda 5: {:?}", fit.coeffs.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>());
    println!("{} iterations, objective {:.5}", fit.iterations, fit.objective);
    for (r, f) in fit.trace.iter().enumerate().take(6) {
        println!("  {r:>3} {f:.6}");
    }
}
