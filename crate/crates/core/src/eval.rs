//! Integrated squared error, oracle gaps, Monte Carlo risk tables and rate
//! slopes, plus section readouts of fitted surfaces.
//!
//! Errors are measured on the unit square in rescaled coordinates: the
//! truth there is `tau * alpha(x, tau * u)`.

use serde::{Deserialize, Serialize};

use crate::datagen::{simulate_scenario_with, true_hazard, Censoring, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::{estimate, estimate_on, AdaptiveFit, EstimatorConfig, FittedModel, UnitSample};
use crate::models::ModelCollection;
use crate::par;
use crate::rng::{derive_seed, domain};

/// Default midpoint grid for ISE; a multiple of every dyadic dimension used
/// at desk-scale sample sizes.
pub const DEFAULT_ISE_GRID: usize = 128;

/// Cell midpoints of `[0, 1]` split into `res` cells.
pub fn midpoints(res: usize) -> Vec<f64> {
    (0..res).map(|i| (i as f64 + 0.5) / res as f64).collect()
}

/// Truth in rescaled coordinates at `(x, u)`.
pub fn rescaled_truth(scenario: &Scenario, rescale: f64, x: f64, u: f64) -> f64 {
    rescale * true_hazard(scenario, x, rescale * u)
}

/// Midpoint-rule `int int (h - g)^2` over the unit square, with `g` sampled
/// on the same grid as `values` (row-major in `x`).
fn squared_distance(values: &[f64], truth: &[f64], res: usize) -> f64 {
    let sum: f64 = values.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    sum / (res * res) as f64
}

fn truth_grid(scenario: &Scenario, rescale: f64, res: usize) -> Vec<f64> {
    let pts = midpoints(res);
    pts.iter()
        .flat_map(|&x| pts.iter().map(move |&u| rescaled_truth(scenario, rescale, x, u)))
        .collect()
}

fn check_resolution(res: usize) -> Result<()> {
    if res < 2 {
        return Err(Error::InvalidInput(format!("grid resolution must be at least 2, got {res}")));
    }
    Ok(())
}

/// ISE of a single fitted model against an arbitrary surface on the unit square.
pub fn model_ise<F: Fn(f64, f64) -> f64>(fit: &FittedModel, truth: F, res: usize) -> Result<f64> {
    check_resolution(res)?;
    let pts = midpoints(res);
    let values = fit.grid_values(&pts, &pts);
    let t: Vec<f64> = pts.iter().flat_map(|&x| pts.iter().map(move |&u| (x, u))).map(|(x, u)| truth(x, u)).collect();
    Ok(squared_distance(&values, &t, res))
}

/// ISE of the selected estimate against the scenario's true intensity.
pub fn ise_on_grid(fit: &AdaptiveFit, scenario: &Scenario, res: usize) -> Result<f64> {
    check_resolution(res)?;
    let pts = midpoints(res);
    let truth = truth_grid(scenario, fit.rescale, res);
    Ok(squared_distance(&fit.fit.grid_values(&pts, &pts), &truth, res))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGap {
    pub selected_ise: f64,
    pub oracle_min_ise: f64,
    /// `selected_ise / oracle_min_ise`; 1 when both vanish.
    pub ratio: f64,
}

/// Compares the selected model's ISE with the best ISE over all candidates
/// of the same fit.
pub fn oracle_gap_of(fit: &AdaptiveFit, scenario: &Scenario, res: usize) -> Result<OracleGap> {
    check_resolution(res)?;
    let pts = midpoints(res);
    let truth = truth_grid(scenario, fit.rescale, res);
    let ises: Vec<f64> = fit
        .candidates
        .iter()
        .map(|c| squared_distance(&c.grid_values(&pts, &pts), &truth, res))
        .collect();
    let selected = fit
        .candidates
        .iter()
        .position(|c| c.model == fit.selected)
        .map(|i| ises[i])
        .unwrap_or_else(|| squared_distance(&fit.fit.grid_values(&pts, &pts), &truth, res));
    let best = ises.iter().copied().fold(selected, f64::min);
    let ratio = if best > 0.0 {
        selected / best
    } else if selected == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(OracleGap { selected_ise: selected, oracle_min_ise: best, ratio })
}

/// Fits `sample` on `collection` and reports its oracle gap.
pub fn oracle_gap(
    sample: &UnitSample,
    collection: &ModelCollection,
    scenario: &Scenario,
    config: &EstimatorConfig,
    res: usize,
) -> Result<OracleGap> {
    let fit = estimate_on(sample, collection, config)?;
    oracle_gap_of(&fit, scenario, res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub scenario: String,
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub d1: usize,
    pub d2: usize,
    pub ise: f64,
    pub oracle_min_ise: f64,
    pub oracle_ratio: f64,
    /// `ok`, or the error that stopped this replication.
    pub status: String,
}

impl RiskRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub estimator: EstimatorConfig,
    pub censoring: Censoring,
    pub master_seed: u64,
    pub ise_grid: usize,
}

impl ExperimentConfig {
    pub fn new(master_seed: u64) -> Self {
        ExperimentConfig {
            estimator: EstimatorConfig::default(),
            censoring: Censoring::None,
            master_seed,
            ise_grid: DEFAULT_ISE_GRID,
        }
    }
}

/// Seed of replication `rep` at size `n`.
pub fn replication_seed(master_seed: u64, scenario: &Scenario, n: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[domain::REPLICATION, scenario.label(), n as u64, rep as u64])
}

fn run_replication(scenario: &Scenario, n: usize, rep: usize, config: &ExperimentConfig) -> RiskRow {
    let seed = replication_seed(config.master_seed, scenario, n, rep);
    let outcome = (|| {
        let sim = ScenarioConfig { scenario: *scenario, n, seed, censoring: config.censoring };
        let raw = simulate_scenario_with(&sim, config.estimator.execution)?;
        let sample = raw.to_unit(config.estimator.quantile_level)?;
        let fit = estimate(&sample, &config.estimator)?;
        let gap = oracle_gap_of(&fit, scenario, config.ise_grid)?;
        Ok::<_, Error>((fit.selected, gap))
    })();
    let mut row = RiskRow {
        scenario: scenario.name().to_string(),
        n,
        replication: rep,
        seed,
        d1: 0,
        d2: 0,
        ise: f64::NAN,
        oracle_min_ise: f64::NAN,
        oracle_ratio: f64::NAN,
        status: "ok".into(),
    };
    match outcome {
        Ok((model, gap)) => {
            row.d1 = model.d1;
            row.d2 = model.d2;
            row.ise = gap.selected_ise;
            row.oracle_min_ise = gap.oracle_min_ise;
            row.oracle_ratio = gap.ratio;
        }
        Err(e) => row.status = e.to_string(),
    }
    row
}

/// Monte Carlo risk table: one row per `(n, replication)`, sizes in the given
/// order and replications ascending. Failed replications are kept with their
/// error in `status`.
pub fn mise_experiment(scenario: &Scenario, sizes: &[usize], replications: usize, config: &ExperimentConfig) -> Result<RiskTable> {
    if replications == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if sizes.is_empty() {
        return Err(Error::InvalidInput("at least one sample size is required".into()));
    }
    check_resolution(config.ise_grid)?;
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..replications).map(move |r| (n, r))).collect();
    let rows = par::map(&jobs, config.estimator.execution, |&(n, rep)| run_replication(scenario, n, rep, config));
    Ok(RiskTable { rows })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

impl RiskTable {
    /// Median of `ise` over successful rows, per sample size, sizes ascending.
    pub fn median_ise_by_n(&self) -> Vec<(usize, f64)> {
        self.median_by_n(|r| r.ise)
    }

    pub fn median_ratio_by_n(&self) -> Vec<(usize, f64)> {
        self.median_by_n(|r| r.oracle_ratio)
    }

    fn median_by_n(&self, f: impl Fn(&RiskRow) -> f64) -> Vec<(usize, f64)> {
        let mut sizes: Vec<usize> = self.rows.iter().filter(|r| r.is_ok()).map(|r| r.n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes
            .into_iter()
            .map(|n| {
                let mut v: Vec<f64> = self.rows.iter().filter(|r| r.is_ok() && r.n == n).map(&f).collect();
                (n, median(&mut v))
            })
            .collect()
    }

    /// Counts of selected `(d1, d2)` per `(scenario, n)`.
    pub fn selection_histogram(&self) -> Vec<SelectionCount> {
        let mut keys: Vec<(String, usize, usize, usize)> = self
            .rows
            .iter()
            .filter(|r| r.is_ok())
            .map(|r| (r.scenario.clone(), r.n, r.d1, r.d2))
            .collect();
        keys.sort();
        let mut out: Vec<SelectionCount> = Vec::new();
        for (scenario, n, d1, d2) in keys {
            match out.last_mut() {
                Some(c) if c.scenario == scenario && c.n == n && c.d1 == d1 && c.d2 == d2 => c.count += 1,
                _ => out.push(SelectionCount { scenario, n, d1, d2, count: 1, fraction: 0.0 }),
            }
        }
        for i in 0..out.len() {
            let total: usize = out.iter().filter(|c| c.scenario == out[i].scenario && c.n == out[i].n).map(|c| c.count).sum();
            out[i].fraction = out[i].count as f64 / total as f64;
        }
        out
    }

    /// Share of successful replications selecting `d1 != d2`, per `(scenario, n)`.
    pub fn anisotropy_share(&self) -> Vec<(String, usize, f64)> {
        let mut cells: Vec<(String, usize, f64)> = Vec::new();
        for c in self.selection_histogram() {
            let off = if c.d1 != c.d2 { c.fraction } else { 0.0 };
            match cells.last_mut() {
                Some(last) if last.0 == c.scenario && last.1 == c.n => last.2 += off,
                _ => cells.push((c.scenario, c.n, off)),
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCount {
    pub scenario: String,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

/// Least-squares line through `(log n, log median ISE)`.
pub fn rate_fit(table: &RiskTable) -> Result<RateFit> {
    let medians = table.median_ise_by_n();
    if medians.len() < 3 {
        return Err(Error::TooFewSizes(medians.len()));
    }
    if let Some(&(n, v)) = medians.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("median ISE at n={n} is {v}; cannot take its logarithm")));
    }
    let xs: Vec<f64> = medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|&(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, n_points: medians.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionAxis {
    /// `x` held fixed; the readout runs along time.
    XFixed,
    /// Time held fixed; the readout runs along `x`.
    ZFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub coord: f64,
    pub alpha_hat: f64,
    pub alpha_true: f64,
}

/// Estimate and truth along a line in original units. Time runs over
/// `[0, tau]`, `x` over `[0, 1]`, read at `resolution` cell midpoints.
pub fn extract_sections(
    fit: &AdaptiveFit,
    scenario: &Scenario,
    axis: SectionAxis,
    value: f64,
    resolution: usize,
) -> Result<Vec<SectionPoint>> {
    let tau = fit.rescale;
    let in_domain = match axis {
        SectionAxis::XFixed => (0.0..=1.0).contains(&value),
        SectionAxis::ZFixed => (0.0..=tau).contains(&value),
    };
    if !in_domain {
        return Err(Error::InvalidInput(format!("section value {value} lies outside the domain")));
    }
    Ok(midpoints(resolution)
        .into_iter()
        .map(|m| {
            let (x, z, coord) = match axis {
                SectionAxis::XFixed => (value, m * tau, m * tau),
                SectionAxis::ZFixed => (m, value, m),
            };
            SectionPoint { coord, alpha_hat: fit.eval(x, z), alpha_true: true_hazard(scenario, x, z) }
        })
        .collect())
}
