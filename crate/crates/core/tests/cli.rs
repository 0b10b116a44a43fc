use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cyclecast::cli::ScenarioGrid;

fn cyclecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

const FULL_GRID: &str = r#"
spacings = [200, 500, 1000]
demands = [800, 1000, 1200, 1400, 1600]
seeds = [1]
lag_list = [1, 2, 3]
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn shipped_grid_covers_the_full_matrix() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml");
    let grid = ScenarioGrid::load(&path).unwrap();
    assert_eq!(grid.cells().unwrap().len(), 15);
    assert_eq!(grid.hours, Some(1.0));
}

#[test]
fn simulate_writes_one_panel_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = write(tmp.path(), "grid.toml", FULL_GRID);
    let out = tmp.path().join("nested/out");
    let run = cyclecast(&["simulate", "--config", &grid, "--out", out.to_str().unwrap(), "--hours", "0.25"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let names = files(&out);
    assert_eq!(names.iter().filter(|n| n.starts_with("panel_")).count(), 15);
    assert_eq!(names.iter().filter(|n| n.starts_with("cycles_")).count(), 15);
    assert!(names.contains(&"panel_s1000_d1600_seed1.csv".to_string()));
    let panel = fs::read_to_string(out.join("panel_s500_d800_seed1.csv")).unwrap();
    assert!(panel.starts_with("# spacing_m=500\n# demand_vph=800\n# seed=1\nS1,S2,S3,S4,S5\n"));
}

#[test]
fn malformed_config_leaves_no_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (name, text) in [
        ("syntax.toml", "spacings = [500"),
        ("bounds.toml", "spacings = [500]\ndemands = [800]\nseeds = [1]\n[corridor.controller]\nmax_green_s = 5"),
        ("empty.toml", "spacings = [500]\ndemands = []\nseeds = [1]"),
    ] {
        let grid = write(tmp.path(), name, text);
        let run = cyclecast(&["simulate", "--config", &grid, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&run), 2, "{name}");
        assert!(!String::from_utf8_lossy(&run.stderr).is_empty());
        assert!(files(&out).is_empty(), "{name}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&cyclecast(&[])), 1);
    assert_eq!(code(&cyclecast(&["simulate", "--out", "x"])), 1);
    assert_eq!(code(&cyclecast(&["fit", "p.csv", "--out", "x", "--penalty", "ridge"])), 1);
    assert_eq!(code(&cyclecast(&["evaluate", "--config", "g.toml", "--out", "x", "--lags", "a"])), 1);
    assert_eq!(code(&cyclecast(&["--version"])), 0);
}

#[test]
fn simulate_then_evaluate_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = write(tmp.path(), "grid.toml", FULL_GRID);
    let sim = tmp.path().join("sim");
    let run = cyclecast(&["simulate", "--config", &grid, "--out", sim.to_str().unwrap(), "--hours", "5"]);
    assert_eq!(code(&run), 0);

    let eval = tmp.path().join("eval");
    let args = ["evaluate", "--config", &grid, "--panels", sim.to_str().unwrap(), "--out", eval.to_str().unwrap()];
    let run = cyclecast(&args);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        files(&eval),
        [
            "mspe_last_signal.csv",
            "mspe_spacing_1000m.csv",
            "mspe_spacing_200m.csv",
            "mspe_spacing_500m.csv",
            "scores.csv",
            "traces"
        ]
    );
    assert_eq!(files(&eval.join("traces")).len(), 15);

    let table = fs::read_to_string(eval.join("mspe_spacing_1000m.csv")).unwrap();
    let rows: Vec<(&str, &str)> = table
        .lines()
        .skip(3)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    assert_eq!(rows[0], ("", "averaging"));
    let lags: Vec<&str> = rows[1..].iter().map(|r| r.0).collect();
    assert_eq!(lags, ["1", "1", "1", "1", "2", "2", "2", "2", "3", "3", "3", "3"]);
    assert!(table.lines().nth(2).unwrap().ends_with(",800,1000,1200,1400,1600"));

    // same inputs, fewer workers: identical bytes
    let again = tmp.path().join("again");
    let mut args2 = args.to_vec();
    let again_str = again.to_str().unwrap().to_string();
    args2[6] = &again_str;
    args2.extend(["--jobs", "1"]);
    assert_eq!(code(&cyclecast(&args2)), 0);
    for name in ["scores.csv", "mspe_spacing_500m.csv", "mspe_last_signal.csv"] {
        assert_eq!(fs::read(eval.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }

    let report = tmp.path().join("report");
    let run = cyclecast(&["report", eval.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    assert_eq!(table, fs::read_to_string(report.join("mspe_spacing_1000m.csv")).unwrap());

    // 1-hour panels are too short for a 75-cycle holdout
    let short = tmp.path().join("short");
    cyclecast(&["simulate", "--config", &grid, "--out", short.to_str().unwrap(), "--hours", "1"]);
    let run = cyclecast(&["evaluate", "--config", &grid, "--panels", short.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("--hours"));
}

#[test]
fn fit_exports_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = write(tmp.path(), "grid.toml", "spacings = [500]\ndemands = [1400]\nseeds = [4]\nhours = 3");
    let sim = tmp.path().join("sim");
    assert_eq!(code(&cyclecast(&["simulate", "--config", &grid, "--out", sim.to_str().unwrap()])), 0);
    let panel = sim.join("panel_s500_d1400_seed4.csv");
    let panel = panel.to_str().unwrap();

    let hg = tmp.path().join("hg");
    let run = cyclecast(&["fit", panel, "--penalty", "hglasso", "--lags", "2", "--out", hg.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(files(&hg), ["manifest.toml", "phi_lag1.csv", "phi_lag2.csv", "residual_cov.csv"]);
    let manifest = fs::read_to_string(hg.join("manifest.toml")).unwrap();
    assert!(manifest.contains("family = \"hglasso\"") && manifest.contains("lambda = "));

    let ols = tmp.path().join("ols");
    let run = cyclecast(&["fit", panel, "--penalty", "none", "--out", ols.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    assert!(!fs::read_to_string(ols.join("manifest.toml")).unwrap().contains("lambda"));

    let run = cyclecast(&["fit", "/nonexistent/panel.csv", "--out", ols.to_str().unwrap()]);
    assert_eq!(code(&run), 2);
}

#[test]
fn acf_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let five = write(
        tmp.path(),
        "five.csv",
        &(std::iter::once("S1,S2,S3,S4,S5".to_string())
            .chain((0..40).map(|t| {
                (0..5).map(|i| (40 + (t * (i + 3)) % 17).to_string()).collect::<Vec<_>>().join(",")
            }))
            .collect::<Vec<_>>()
            .join("\n")),
    );
    let out = tmp.path().join("acf");
    let run = cyclecast(&["acf", &five, "--lags", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("acf.csv")).unwrap();
    let mut pairs: Vec<(String, String)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(pairs.len(), 25 * 6);
    pairs.dedup();
    assert_eq!(pairs.len(), 25);

    let run = cyclecast(&["acf", &five, "--lags", "40", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 2);

    let one = write(tmp.path(), "one.csv", "S1\n40\n45\n38\n50\n41\n");
    let out = tmp.path().join("acf1");
    assert_eq!(code(&cyclecast(&["acf", &one, "--lags", "2", "--out", out.to_str().unwrap()])), 0);
    let text = fs::read_to_string(out.join("acf.csv")).unwrap();
    assert_eq!(text.lines().nth(2), Some("S1,S1,0,1"));
    assert_eq!(text.lines().count(), 2 + 3);
}
