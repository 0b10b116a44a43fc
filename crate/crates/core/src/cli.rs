//! Command-line front end: scenario grids in, panels, coefficients and
//! MSPE tables out.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::eval::{
    aggregate_scores, evaluate_penalized, read_seed_scores, run_comparison, seed_scores,
    write_seed_scores, write_signal_table, write_tables, write_trace_csv, EvalError, EvalOptions,
    EvaluationReport, RollingSplit, SeedScore, DEFAULT_HOLDOUT,
};
use crate::fsio::write_atomic;
use crate::series::{acf_matrix, PanelSeries, SeriesError, DEFAULT_MAX_LAG};
use crate::sim::{run_corridor, CorridorConfig, SimError, SimulationRun};
use crate::univariate::UnivariateError;
use crate::var::{build_regression, fit_ols, write_coefficients, PenaltyFamily, VarError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<VarError> for CliError {
    fn from(e: VarError) -> Self {
        match e {
            VarError::NumericalFailure { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<UnivariateError> for CliError {
    fn from(e: UnivariateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Var(v) => v.into(),
            EvalError::AllFitsFailed(_) => CliError::Numerical(e.to_string()),
            EvalError::InsufficientData { .. } => CliError::Data(format!(
                "{e}; a longer simulation (for example --hours 5) yields more cycles"
            )),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn default_lags() -> Vec<usize> {
    vec![1]
}

fn default_holdout() -> usize {
    DEFAULT_HOLDOUT
}

/// Experiment matrix: every spacing x demand x seed combination on a
/// shared base corridor.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub spacings: Vec<f64>,
    pub demands: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_lags")]
    pub lag_list: Vec<usize>,
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    /// Post-warm-up duration; overrides `corridor.sim_duration_s`.
    pub hours: Option<f64>,
    /// Everything else, including `[corridor.controller]` overrides.
    #[serde(default)]
    pub corridor: CorridorConfig,
}

impl ScenarioGrid {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        Self::parse(&text).map_err(|e| e.context(path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let grid: Self = toml::from_str(text).map_err(|e| CliError::Data(e.to_string()))?;
        grid.cells()?;
        Ok(grid)
    }

    /// Corridor configurations in spacing, demand, seed order, all
    /// validated.
    pub fn cells(&self) -> Result<Vec<CorridorConfig>, CliError> {
        for (name, empty) in [
            ("spacings", self.spacings.is_empty()),
            ("demands", self.demands.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("lag_list", self.lag_list.is_empty()),
        ] {
            if empty {
                return Err(CliError::Data(format!("scenario grid has an empty {name} list")));
            }
        }
        if self.lag_list.contains(&0) {
            return Err(CliError::Data("lag_list entries must be positive".into()));
        }
        if self.holdout == 0 {
            return Err(CliError::Data("holdout must be positive".into()));
        }
        let mut cells = Vec::new();
        for &spacing in &self.spacings {
            for &demand in &self.demands {
                for &seed in &self.seeds {
                    let mut cfg = CorridorConfig {
                        spacing_m: spacing,
                        mainline_demand_vph: demand,
                        seed,
                        ..self.corridor.clone()
                    };
                    if let Some(h) = self.hours {
                        if !(h.is_finite() && h > 0.0) {
                            return Err(CliError::Data(format!("hours must be positive, got {h}")));
                        }
                        cfg = cfg.with_hours(h);
                    }
                    cfg.validate()
                        .map_err(|e| CliError::from(e).context(cell_name(&cfg)))?;
                    cells.push(cfg);
                }
            }
        }
        Ok(cells)
    }
}

/// `s{spacing}_d{demand}_seed{seed}`, the stem shared by every per-cell file.
pub fn cell_name(cfg: &CorridorConfig) -> String {
    format!("s{}_d{}_seed{}", cfg.spacing_m, cfg.mainline_demand_vph, cfg.seed)
}

#[derive(Debug, Parser)]
#[command(name = "cyclecast", version, about = "Actuated corridor simulation and cycle-length forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every cell of a scenario grid and write panel and cycle CSVs.
    Simulate(SimulateArgs),
    /// Fit a VAR to a stored panel and export its coefficients.
    Fit(FitArgs),
    /// Compare all forecasters on every cell of a scenario grid.
    Evaluate(EvaluateArgs),
    /// Cross-correlation tables for every signal pair of a panel.
    Acf(AcfArgs),
    /// Rebuild MSPE tables from per-seed score files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Scenario grid (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Replace the grid's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Post-warm-up simulated hours, overriding the grid.
    #[arg(long)]
    pub hours: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV as written by `simulate`.
    pub panel: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lag order.
    #[arg(long, default_value_t = 1)]
    pub lags: usize,
    /// none, lasso or hglasso.
    #[arg(long, default_value = "lasso")]
    pub penalty: PenaltyFamily,
    #[arg(long, default_value_t = crate::var::DEFAULT_GRID_SIZE)]
    pub lambda_grid_size: usize,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Read panels written by `simulate` from this directory instead of
    /// simulating.
    #[arg(long)]
    pub panels: Option<PathBuf>,
    /// Comma-separated lag orders, overriding the grid.
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// Holdout length in cycles, overriding the grid.
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long, default_value_t = crate::var::DEFAULT_GRID_SIZE)]
    pub lambda_grid_size: usize,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    pub panel: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest lag.
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    pub lags: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Score files (`scores.csv`) or directories holding one.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let jobs = a.grid.jobs;
            with_pool(jobs, || cmd_simulate(&a))
        }
        Command::Fit(a) => with_pool(a.jobs, || cmd_fit(&a)),
        Command::Evaluate(a) => {
            let jobs = a.grid.jobs;
            with_pool(jobs, || cmd_evaluate(&a))
        }
        Command::Acf(a) => cmd_acf(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn with_pool<F>(jobs: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

fn load_grid(args: &GridArgs) -> Result<ScenarioGrid, CliError> {
    let mut grid = ScenarioGrid::load(&args.config)?;
    if let Some(seed) = args.seed {
        grid.seeds = vec![seed];
    }
    if args.hours.is_some() {
        grid.hours = args.hours;
    }
    Ok(grid)
}

fn write_panel(path: &Path, panel: &PanelSeries) -> Result<(), CliError> {
    write_atomic(path, |out| panel.write_csv(out)).map_err(io_error(path))
}

fn read_panel(path: &Path) -> Result<PanelSeries, CliError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    PanelSeries::read_csv(BufReader::new(file))
        .map_err(|e| CliError::from(e).context(path.display()))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cells = load_grid(&args.grid)?.cells()?;
    let runs: Vec<SimulationRun> = cells
        .par_iter()
        .map(|cfg| run_corridor(cfg).map_err(|e| CliError::from(e).context(cell_name(cfg))))
        .collect::<Result<_, _>>()?;
    for (cfg, run) in cells.iter().zip(&runs) {
        let name = cell_name(cfg);
        write_panel(&args.out.join(format!("panel_{name}.csv")), &run.panel)?;
        let path = args.out.join(format!("cycles_{name}.csv"));
        write_atomic(&path, |out| run.write_cycle_csv(out)).map_err(io_error(&path))?;
        if !run.invariants.is_clean() {
            eprintln!("warning: {name}: invariant violations {:?}", run.invariants);
        }
    }
    println!("wrote {} panels to {}", runs.len(), args.out.display());
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    if args.lags == 0 {
        return Err(CliError::Usage("--lags must be positive".into()));
    }
    let panel = read_panel(&args.panel)?;
    let model = match args.penalty {
        PenaltyFamily::None => fit_ols(&build_regression(&panel, args.lags)?)?,
        family => {
            let options = EvalOptions {
                grid_size: args.lambda_grid_size,
                ..EvalOptions::default()
            };
            let split = RollingSplit::from_fractions(
                panel.len(),
                options.train_fraction,
                options.validate_fraction,
                args.lags,
            )?;
            evaluate_penalized(&panel, panel.len(), args.lags, family, &split, &options)?.0
        }
    };
    write_coefficients(&args.out, &model)?;
    let lambda = model.lambda.map_or_else(String::new, |l| format!(", lambda {l:.6}"));
    println!(
        "{} VAR({}) on {} signals: {} nonzero coefficients{lambda}",
        model.family,
        model.p(),
        model.k(),
        model.nonzero_count()
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let mut grid = load_grid(&args.grid)?;
    if let Some(lags) = &args.lags {
        grid.lag_list = lags.clone();
    }
    if let Some(h) = args.holdout {
        grid.holdout = h;
    }
    let cells = grid.cells()?;
    let options = EvalOptions {
        holdout: grid.holdout,
        grid_size: args.lambda_grid_size,
        ..EvalOptions::default()
    };
    let reports: Vec<EvaluationReport> = cells
        .par_iter()
        .map(|cfg| {
            let name = cell_name(cfg);
            let panel = match &args.panels {
                Some(dir) => read_panel(&dir.join(format!("panel_{name}.csv")))?,
                None => run_corridor(cfg).map_err(|e| CliError::from(e).context(&name))?.panel,
            };
            run_comparison(&panel, &grid.lag_list, &options)
                .map_err(|e| CliError::from(e).context(&name))
        })
        .collect::<Result<_, _>>()?;

    let scores = seed_scores(&reports);
    write_outputs(&args.out, &scores)?;
    for (cfg, report) in cells.iter().zip(&reports) {
        let path = args.out.join("traces").join(format!("trace_{}.csv", cell_name(cfg)));
        write_atomic(&path, |out| write_trace_csv(report, out)).map_err(io_error(&path))?;
    }
    println!("evaluated {} scenarios into {}", reports.len(), args.out.display());
    Ok(())
}

// scores.csv plus the aggregate tables
fn write_outputs(out: &Path, scores: &[SeedScore]) -> Result<(), CliError> {
    let path = out.join("scores.csv");
    write_seed_scores(&path, scores).map_err(io_error(&path))?;
    let rows = aggregate_scores(scores);
    write_tables(out, &rows).map_err(io_error(out))?;
    let path = out.join("mspe_last_signal.csv");
    write_signal_table(&path, &rows).map_err(io_error(&path))
}

pub fn cmd_acf(args: &AcfArgs) -> Result<(), CliError> {
    let panel = read_panel(&args.panel)?;
    let tables = acf_matrix(&panel, args.lags)?;
    let labels = panel.labels();
    let path = args.out.join("acf.csv");
    write_atomic(&path, |out| {
        writeln!(out, "# max_lag={}", args.lags)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["signal_i", "signal_j", "lag", "acf"])?;
        for t in &tables {
            for (lag, r) in t.correlations.iter().enumerate() {
                writer.write_record([
                    labels[t.pair.0].as_str(),
                    labels[t.pair.1].as_str(),
                    &lag.to_string(),
                    &r.to_string(),
                ])?;
            }
        }
        writer.flush()
    })
    .map_err(io_error(&path))?;
    println!("wrote {} pair tables to {}", tables.len(), path.display());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let mut scores = Vec::new();
    for input in &args.inputs {
        let path = if input.is_dir() {
            input.join("scores.csv")
        } else {
            input.clone()
        };
        let file = fs::File::open(&path).map_err(io_error(&path))?;
        let mut part = read_seed_scores(file)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        scores.append(&mut part);
    }
    if scores.is_empty() {
        return Err(CliError::Data("no scores in the given inputs".into()));
    }
    write_outputs(&args.out, &scores)?;
    println!("aggregated {} scores into {}", scores.len(), args.out.display());
    Ok(())
}
