//! Command-line driver: simulate, fit, experiment and rate-check.
//!
//! Settings come from an optional JSON file (`--config`) and flags; a flag
//! always wins over the file. Every output file is written to a temporary
//! file in the output directory and renamed into place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::datagen::{simulate_scenario_with, Censoring, RawSample, Scenario, ScenarioConfig};
use crate::estimator::{estimate, EstimatorConfig, GuardRule, PenaltyForm, DEFAULT_F0_GRID, DEFAULT_K0, DEFAULT_QUANTILE};
use crate::eval::{extract_sections, midpoints, mise_experiment, rate_fit, ExperimentConfig, RiskTable, SectionAxis, DEFAULT_ISE_GRID};
use crate::par::Execution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_N: usize = 1000;
const DEFAULT_REPS: usize = 20;
const DEFAULT_SURFACE_GRID: usize = 64;
const DEFAULT_SECTION_RESOLUTION: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "condint", version, about = "Adaptive estimation of conditional intensities")]
pub struct Cli {
    /// JSON file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<CommandKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Simulate,
    Fit,
    Experiment,
    RateCheck,
}

#[derive(Debug, Subcommand)]
pub enum CommandKind {
    /// Draw a sample and write `sample.csv`.
    Simulate(Flags),
    /// Fit the adaptive estimator and write surface, sections and criteria.
    Fit(Flags),
    /// Monte Carlo risk table over sizes and replications.
    Experiment(Flags),
    /// Risk table plus log-log slope of the median ISE.
    RateCheck(Flags),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// Only read from the config file.
    #[arg(skip)]
    pub command: Option<CommandName>,
    /// NL, AFT, PH or Cox.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k0: Option<f64>,
    #[arg(long, value_enum)]
    pub penalty_form: Option<PenaltyForm>,
    #[arg(long, value_enum)]
    pub guard: Option<GuardRule>,
    /// H, T or DP<r>.
    #[arg(long)]
    pub basis_x: Option<String>,
    #[arg(long)]
    pub basis_z: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub quantile: Option<f64>,
    /// none, exp:<rate> or uniform:<upper>.
    #[arg(long)]
    pub censoring: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ise_grid: Option<usize>,
    #[arg(long)]
    pub f0_grid: Option<usize>,
    #[arg(long)]
    pub surface_grid: Option<usize>,
    #[arg(long)]
    pub section_resolution: Option<usize>,
    /// Covariate value of the x-fixed section.
    #[arg(long, allow_negative_numbers = true)]
    pub section_x: Option<f64>,
    /// Time (original units) of the z-fixed section; defaults to half the rescaling time.
    #[arg(long, allow_negative_numbers = true)]
    pub section_z: Option<f64>,
    /// Run without the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

impl Flags {
    fn overlay(self, base: Flags) -> Flags {
        Flags {
            command: self.command.or(base.command),
            scenario: self.scenario.or(base.scenario),
            n: self.n.or(base.n),
            sizes: self.sizes.or(base.sizes),
            reps: self.reps.or(base.reps),
            seed: self.seed.or(base.seed),
            k0: self.k0.or(base.k0),
            penalty_form: self.penalty_form.or(base.penalty_form),
            guard: self.guard.or(base.guard),
            basis_x: self.basis_x.or(base.basis_x),
            basis_z: self.basis_z.or(base.basis_z),
            quantile: self.quantile.or(base.quantile),
            censoring: self.censoring.or(base.censoring),
            out: self.out.or(base.out),
            ise_grid: self.ise_grid.or(base.ise_grid),
            f0_grid: self.f0_grid.or(base.f0_grid),
            surface_grid: self.surface_grid.or(base.surface_grid),
            section_resolution: self.section_resolution.or(base.section_resolution),
            section_x: self.section_x.or(base.section_x),
            section_z: self.section_z.or(base.section_z),
            sequential: self.sequential || base.sequential,
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandName,
    pub scenario: Scenario,
    pub n: usize,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub censoring: Censoring,
    pub estimator: EstimatorConfig,
    pub out: PathBuf,
    pub ise_grid: usize,
    pub surface_grid: usize,
    pub section_resolution: usize,
    pub section_x: f64,
    pub section_z: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Numerical(e)
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Merges the config file and flags into a validated [`RunConfig`].
pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Flags>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => Flags::default(),
    };
    let (command, flags) = match cli.command {
        Some(CommandKind::Simulate(f)) => (CommandName::Simulate, f),
        Some(CommandKind::Fit(f)) => (CommandName::Fit, f),
        Some(CommandKind::Experiment(f)) => (CommandName::Experiment, f),
        Some(CommandKind::RateCheck(f)) => (CommandName::RateCheck, f),
        None => (
            file.command.ok_or_else(|| config_err("no command given on the command line or in the config file"))?,
            Flags::default(),
        ),
    };
    let f = flags.overlay(file);

    let scenario: Scenario = f
        .scenario
        .as_deref()
        .ok_or_else(|| config_err("--scenario is required"))?
        .parse()
        .map_err(config_err)?;
    let seed = f.seed.ok_or_else(|| config_err("--seed is required"))?;
    let n = f.n.unwrap_or(DEFAULT_N);
    let sizes = f.sizes.unwrap_or_else(|| vec![n]);
    let reps = f.reps.unwrap_or(DEFAULT_REPS);
    let censoring: Censoring = match f.censoring.as_deref() {
        Some(s) => s.parse().map_err(config_err)?,
        None => Censoring::None,
    };
    let parse_basis = |s: Option<&str>| -> Result<BasisKind, CliError> {
        s.map_or(Ok(BasisKind::Histogram), |s| s.parse().map_err(config_err))
    };
    let estimator = EstimatorConfig {
        kind_x: parse_basis(f.basis_x.as_deref())?,
        kind_z: parse_basis(f.basis_z.as_deref())?,
        k0: f.k0.unwrap_or(DEFAULT_K0),
        penalty_form: f.penalty_form.unwrap_or_default(),
        guard: f.guard.unwrap_or_default(),
        quantile_level: f.quantile.unwrap_or(DEFAULT_QUANTILE),
        f0_grid: f.f0_grid.unwrap_or(DEFAULT_F0_GRID),
        execution: if f.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let config = RunConfig {
        command,
        scenario,
        n,
        sizes,
        reps,
        seed,
        censoring,
        estimator,
        out: f.out.unwrap_or_else(|| PathBuf::from(".")),
        ise_grid: f.ise_grid.unwrap_or(DEFAULT_ISE_GRID),
        surface_grid: f.surface_grid.unwrap_or(DEFAULT_SURFACE_GRID),
        section_resolution: f.section_resolution.unwrap_or(DEFAULT_SECTION_RESOLUTION),
        section_x: f.section_x.unwrap_or(0.5),
        section_z: f.section_z,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(c: &RunConfig) -> Result<(), CliError> {
    let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config_err(msg)) };
    check(c.estimator.k0 > 0.0 && c.estimator.k0.is_finite(), "--k0 must be positive")?;
    check(c.estimator.quantile_level > 0.0 && c.estimator.quantile_level <= 1.0, "--quantile must lie in (0, 1]")?;
    check(c.estimator.f0_grid >= 1, "--f0-grid must be positive")?;
    check(c.ise_grid >= 2, "--ise-grid must be at least 2")?;
    check(c.surface_grid >= 1 && c.section_resolution >= 1, "grid resolutions must be positive")?;
    check((0.0..=1.0).contains(&c.section_x), "--section-x must lie in [0, 1]")?;
    check(c.section_z.is_none_or(|z| z >= 0.0), "--section-z must be nonnegative")?;
    match c.command {
        CommandName::Simulate => check(c.n >= 1, "--n must be positive"),
        CommandName::Fit => check(c.n >= 8, "fitting needs --n of at least 8"),
        CommandName::Experiment | CommandName::RateCheck => {
            check(c.reps >= 1, "--reps must be positive")?;
            check(!c.sizes.is_empty() && c.sizes.iter().all(|&n| n >= 8), "every size must be at least 8")?;
            let mut distinct = c.sizes.clone();
            distinct.sort_unstable();
            distinct.dedup();
            check(
                c.command == CommandName::Experiment || distinct.len() >= 3,
                "rate-check needs at least 3 distinct sizes",
            )
        }
    }
}

/// Writes `rows` as CSV to `dir/name` through a temporary file.
pub fn write_csv_atomic<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
    let io_err = |e: &dyn std::fmt::Display| config_err(format!("cannot write {}: {e}", dir.join(name).display()));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(&e))?;
    {
        let mut w = csv::Writer::from_writer(io::BufWriter::new(tmp.as_file()));
        for row in rows {
            w.serialize(row).map_err(|e| io_err(&e))?;
        }
        w.flush().map_err(|e| io_err(&e))?;
    }
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| io_err(&e.error))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub x: f64,
    pub z: f64,
    pub delta: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub x: f64,
    pub z: f64,
    pub alpha_hat: f64,
    pub alpha_true: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub d1: usize,
    pub d2: usize,
    pub contrast: f64,
    pub penalty: f64,
    pub criterion: f64,
    pub guard: bool,
}

/// Rows of `sample.csv`. Survival data give `(X, Z, delta)`; a counting
/// process gives one `delta = 1` row per jump and a closing `(X, 1, 0)` row.
pub fn sample_rows(raw: &RawSample) -> Vec<SampleRow> {
    match raw {
        RawSample::Survival(records) => records
            .iter()
            .map(|r| SampleRow { x: r.x, z: r.time, delta: r.event as u8 })
            .collect(),
        RawSample::Counting(records) => records
            .iter()
            .flat_map(|r| {
                r.jumps
                    .iter()
                    .map(|&t| SampleRow { x: r.x, z: t, delta: 1 })
                    .chain(std::iter::once(SampleRow { x: r.x, z: 1.0, delta: 0 }))
            })
            .collect(),
    }
}

fn simulate(c: &RunConfig, n: usize) -> Result<RawSample, CliError> {
    let sim = ScenarioConfig { scenario: c.scenario, n, seed: c.seed, censoring: c.censoring };
    Ok(simulate_scenario_with(&sim, c.estimator.execution)?)
}

fn experiment_config(c: &RunConfig) -> ExperimentConfig {
    ExperimentConfig { estimator: c.estimator, censoring: c.censoring, master_seed: c.seed, ise_grid: c.ise_grid }
}

fn write_risk(c: &RunConfig, table: &RiskTable, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    files.push(write_csv_atomic(&c.out, "risk.csv", &table.rows)?);
    files.push(write_csv_atomic(&c.out, "selection.csv", &table.selection_histogram())?);
    Ok(())
}

/// Runs the command and returns the files it wrote.
pub fn run(c: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&c.out).map_err(|e| config_err(format!("cannot create {}: {e}", c.out.display())))?;
    let mut files = Vec::new();
    match c.command {
        CommandName::Simulate => {
            let raw = simulate(c, c.n)?;
            files.push(write_csv_atomic(&c.out, "sample.csv", &sample_rows(&raw))?);
        }
        CommandName::Fit => {
            let sample = simulate(c, c.n)?.to_unit(c.estimator.quantile_level)?;
            let fit = estimate(&sample, &c.estimator)?;
            let tau = fit.rescale;
            let grid = midpoints(c.surface_grid);
            let surface: Vec<SurfaceRow> = grid
                .iter()
                .flat_map(|&x| grid.iter().map(move |&u| (x, u * tau)))
                .map(|(x, z)| SurfaceRow {
                    x,
                    z,
                    alpha_hat: fit.eval(x, z),
                    alpha_true: crate::datagen::true_hazard(&c.scenario, x, z),
                })
                .collect();
            let at_x = extract_sections(&fit, &c.scenario, SectionAxis::XFixed, c.section_x, c.section_resolution)?;
            let z_value = c.section_z.unwrap_or(0.5 * tau);
            let at_z = extract_sections(&fit, &c.scenario, SectionAxis::ZFixed, z_value, c.section_resolution)
                .map_err(config_err)?;
            let criteria: Vec<CriterionRow> = fit
                .candidates
                .iter()
                .map(|m| CriterionRow {
                    d1: m.model.d1,
                    d2: m.model.d2,
                    contrast: m.contrast,
                    penalty: m.penalty,
                    criterion: m.criterion(),
                    guard: m.guard_passed,
                })
                .collect();
            files.push(write_csv_atomic(&c.out, "surface.csv", &surface)?);
            files.push(write_csv_atomic(&c.out, "sections_x.csv", &at_x)?);
            files.push(write_csv_atomic(&c.out, "sections_z.csv", &at_z)?);
            files.push(write_csv_atomic(&c.out, "criteria.csv", &criteria)?);
            println!(
                "selected (D1, D2) = ({}, {}), tau = {tau}, f0_hat = {}, sup plug-in = {}",
                fit.selected.d1, fit.selected.d2, fit.f0_hat, fit.sup_plugin
            );
        }
        CommandName::Experiment => {
            let table = mise_experiment(&c.scenario, &c.sizes, c.reps, &experiment_config(c))?;
            write_risk(c, &table, &mut files)?;
            for (n, m) in table.median_ise_by_n() {
                println!("n = {n}: median ISE {m}");
            }
        }
        CommandName::RateCheck => {
            let table = mise_experiment(&c.scenario, &c.sizes, c.reps, &experiment_config(c))?;
            write_risk(c, &table, &mut files)?;
            let rate = rate_fit(&table)?;
            files.push(write_csv_atomic(&c.out, "slope.csv", &[rate])?);
            println!("slope {} (intercept {}, {} sizes)", rate.slope, rate.intercept, rate.n_points);
        }
    }
    Ok(files)
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match resolve(cli).and_then(|c| run(&c)) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("condint: {e}");
            e.exit_code()
        }
    }
}
