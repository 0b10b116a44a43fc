//! Fits LASSO and hierarchical group LASSO paths to a simulated panel and
//! exports the coefficients of a mid-path model.

use cyclecast::sim::{simulate_corridor, CorridorConfig};
use cyclecast::var::{
    build_regression, default_lambda_grid, fit_ols, fit_path, write_coefficients, FistaSettings,
    PenaltyFamily, PenaltySpec, DEFAULT_GRID_SIZE,
};

fn main() {
    let cfg = CorridorConfig::scenario(500.0, 1400.0, 3).with_hours(5.0);
    let panel = simulate_corridor(&cfg).unwrap();
    let reg = build_regression(&panel, 2).unwrap();
    let settings = FistaSettings::default();

    let ols = fit_ols(&reg).unwrap();
    println!("OLS VAR(2): {} nonzero of {}", ols.nonzero_count(), 2 * 25);

    for family in [PenaltyFamily::Lasso, PenaltyFamily::HgLasso] {
        let grid = default_lambda_grid(&reg, family, DEFAULT_GRID_SIZE);
        let spec = PenaltySpec::new(family, grid).unwrap();
        let path = fit_path(&reg, &spec, &settings).unwrap();
        println!("{family}:");
        for m in path.iter().step_by(4) {
            println!("  lambda {:>12.4}  nonzero {:>2}", m.lambda.unwrap(), m.nonzero_count());
        }
        if family == PenaltyFamily::HgLasso {
            let dir = std::env::temp_dir().join("cyclecast_hglasso");
            let manifest = write_coefficients(&dir, &path[path.len() / 2]).unwrap();
            println!("  exported {:?} to {}", manifest.lag_files, dir.display());
            println!("  lag 1:\n{:.3}", path[path.len() / 2].lags[0]);
        }
    }
}
