//! Seeded data generators with exact true intensities.
//!
//! Survival scenarios draw `T` given `X ~ U[0, 1]`:
//!
//! * `NL`:  `T = 2X + 5 + sigma * eps`, `eps ~ chi2(4)`
//! * `AFT`: `log T = a + bX + eps`, `eps ~ N(0, 1)`, `a = 5`, `b = 2`
//! * `PH`:  hazard `exp(bX) * shape * lambda * t^(shape - 1)`, `b = 0.4`,
//!   Weibull `shape = 3`, `lambda = 1`
//!
//! `Cox` draws a counting process on `[0, 1]` with intensity `alpha(X, t)`
//! by thinning a homogeneous Poisson process.
//!
//! Individual `i` always reads from its own stream `(seed, i)`, and the
//! censoring variable from a separate stream, so a sample does not depend on
//! how generation is scheduled.

use std::f64::consts::{PI, SQRT_2};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{rescale_sample, SurvivalRecord, UnitSample};
use crate::par::{self, Execution};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoxIntensity {
    Constant { rate: f64 },
    /// `exp(b x) * shape * lambda * t^(shape - 1)` on `[0, 1]`.
    ProportionalWeibull { b: f64, shape: f64, lambda: f64 },
}

impl CoxIntensity {
    pub fn value(&self, x: f64, t: f64) -> f64 {
        match *self {
            CoxIntensity::Constant { rate } => rate,
            CoxIntensity::ProportionalWeibull { b, shape, lambda } => weibull_ph_hazard(x, t, b, shape, lambda),
        }
    }

    /// Upper bound of the intensity on `[0, 1]^2`.
    pub fn bound(&self) -> f64 {
        match *self {
            CoxIntensity::Constant { rate } => rate,
            CoxIntensity::ProportionalWeibull { b, shape, lambda } => {
                let t_part = if shape >= 1.0 { 1.0 } else { f64::INFINITY };
                b.abs().exp() * shape * lambda * t_part
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum Scenario {
    #[serde(rename = "NL")]
    NonLinear { sigma: f64 },
    #[serde(rename = "AFT")]
    Aft { a: f64, b: f64 },
    #[serde(rename = "PH")]
    ProportionalHazards { b: f64, shape: f64, lambda: f64 },
    #[serde(rename = "Cox")]
    Cox { intensity: CoxIntensity },
}

impl Scenario {
    pub fn nl() -> Self {
        Scenario::NonLinear { sigma: 1.0 }
    }

    pub fn aft() -> Self {
        Scenario::Aft { a: 5.0, b: 2.0 }
    }

    pub fn ph() -> Self {
        Scenario::ProportionalHazards { b: 0.4, shape: 3.0, lambda: 1.0 }
    }

    /// Cox process with the PH-shaped intensity restricted to the unit square.
    pub fn cox() -> Self {
        Scenario::Cox { intensity: CoxIntensity::ProportionalWeibull { b: 0.4, shape: 3.0, lambda: 1.0 } }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::NonLinear { .. } => "NL",
            Scenario::Aft { .. } => "AFT",
            Scenario::ProportionalHazards { .. } => "PH",
            Scenario::Cox { .. } => "Cox",
        }
    }

    /// Stable numeric label for seed derivation.
    pub(crate) fn label(&self) -> u64 {
        match self {
            Scenario::NonLinear { .. } => 1,
            Scenario::Aft { .. } => 2,
            Scenario::ProportionalHazards { .. } => 3,
            Scenario::Cox { .. } => 4,
        }
    }

    pub fn is_counting(&self) -> bool {
        matches!(self, Scenario::Cox { .. })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NL" => Ok(Scenario::nl()),
            "AFT" => Ok(Scenario::aft()),
            "PH" => Ok(Scenario::ph()),
            "COX" => Ok(Scenario::cox()),
            _ => Err(Error::InvalidInput(format!("unknown scenario '{s}' (expected NL, AFT, PH or Cox)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Censoring {
    #[default]
    None,
    Exponential { rate: f64 },
    Uniform { upper: f64 },
}

impl FromStr for Censoring {
    type Err = Error;

    /// `none`, `exp:<rate>` or `uniform:<upper>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "none" {
            return Ok(Censoring::None);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("bad censoring spec '{s}'")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad censoring parameter in '{s}'")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidInput(format!("censoring parameter must be positive in '{s}'")));
        }
        match kind {
            "exp" | "exponential" => Ok(Censoring::Exponential { rate: value }),
            "uniform" | "unif" => Ok(Censoring::Uniform { upper: value }),
            _ => Err(Error::InvalidInput(format!("unknown censoring '{kind}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub censoring: Censoring,
}

/// One individual of a counting-process sample observed on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingRecord {
    pub x: f64,
    pub jumps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawSample {
    Survival(Vec<SurvivalRecord>),
    Counting(Vec<CountingRecord>),
}

impl RawSample {
    pub fn len(&self) -> usize {
        match self {
            RawSample::Survival(r) => r.len(),
            RawSample::Counting(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Maps the sample onto the unit square. Counting data already live on
    /// `[0, 1]` and are kept at risk throughout.
    pub fn to_unit(&self, quantile_level: f64) -> Result<UnitSample> {
        match self {
            RawSample::Survival(records) => rescale_sample(records, quantile_level),
            RawSample::Counting(records) => UnitSample::from_counting(
                records.iter().map(|r| r.x).collect(),
                records.iter().map(|r| r.jumps.clone()).collect(),
            ),
        }
    }
}

// --- inverse transforms ------------------------------------------------------

pub fn nl_time(x: f64, eps: f64, sigma: f64) -> f64 {
    2.0 * x + 5.0 + sigma * eps
}

pub fn aft_time(x: f64, eps: f64, a: f64, b: f64) -> f64 {
    (a + b * x + eps).exp()
}

/// Inverse of the conditional survival function at `u`.
pub fn ph_time(x: f64, u: f64, b: f64, shape: f64, lambda: f64) -> f64 {
    (-u.ln() * (-b * x).exp() / lambda).powf(1.0 / shape)
}

/// `chi2(4)` draw as the sum of two exponentials with mean 2.
fn chi2_4<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    -2.0 * (1.0 - u1).ln() - 2.0 * (1.0 - u2).ln()
}

fn draw_time<R: Rng>(scenario: &Scenario, x: f64, rng: &mut R) -> f64 {
    match *scenario {
        Scenario::NonLinear { sigma } => nl_time(x, chi2_4(rng), sigma),
        Scenario::Aft { a, b } => aft_time(x, rng.sample(StandardNormal), a, b),
        Scenario::ProportionalHazards { b, shape, lambda } => {
            // 1 - U lies in (0, 1], keeping the logarithm finite
            let u = 1.0 - rng.random::<f64>();
            ph_time(x, u, b, shape, lambda)
        }
        Scenario::Cox { .. } => unreachable!("counting scenarios have no survival time"),
    }
}

// --- hazards ----------------------------------------------------------------

/// Hazard of the `chi2(4)` distribution: `u / (2 (u + 2))` for `u >= 0`.
pub fn chi2_4_hazard(u: f64) -> f64 {
    if u < 0.0 {
        0.0
    } else {
        u / (2.0 * (u + 2.0))
    }
}

/// Standard normal hazard `phi(u) / (1 - Phi(u))`.
pub fn normal_hazard(u: f64) -> f64 {
    if u > 30.0 {
        let inv2 = 1.0 / (u * u);
        return u / (1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2);
    }
    let density = (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    let survival = 0.5 * statrs::function::erf::erfc(u / SQRT_2);
    density / survival
}

fn weibull_ph_hazard(x: f64, t: f64, b: f64, shape: f64, lambda: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    (b * x).exp() * shape * lambda * t.powf(shape - 1.0)
}

/// True conditional intensity at covariate `x` and time `t` (original units).
pub fn true_hazard(scenario: &Scenario, x: f64, t: f64) -> f64 {
    match *scenario {
        Scenario::NonLinear { sigma } => chi2_4_hazard((t - (2.0 * x + 5.0)) / sigma) / sigma,
        Scenario::Aft { a, b } => {
            if t <= 0.0 {
                0.0
            } else {
                normal_hazard(t.ln() - (a + b * x)) / t
            }
        }
        Scenario::ProportionalHazards { b, shape, lambda } => weibull_ph_hazard(x, t, b, shape, lambda),
        Scenario::Cox { intensity } => intensity.value(x, t),
    }
}

// --- sampling ---------------------------------------------------------------

/// `Z = min(T, C)` and `delta = 1(T <= C)` with `C` independent of `(X, T)`.
pub fn apply_censoring(times: &[f64], censoring: Censoring, seed: u64) -> Vec<(f64, bool)> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = match censoring {
                Censoring::None => return (t, true),
                Censoring::Exponential { rate } => {
                    let mut rng = stream(seed, domain::CENSORING, i as u64);
                    -(1.0 - rng.random::<f64>()).ln() / rate
                }
                Censoring::Uniform { upper } => {
                    let mut rng = stream(seed, domain::CENSORING, i as u64);
                    upper * rng.random::<f64>()
                }
            };
            (t.min(c), t <= c)
        })
        .collect()
}

pub fn simulate_scenario(config: &ScenarioConfig) -> Result<RawSample> {
    simulate_scenario_with(config, Execution::Parallel)
}

pub fn simulate_scenario_with(config: &ScenarioConfig, exec: Execution) -> Result<RawSample> {
    validate(config)?;
    if let Scenario::Cox { intensity } = config.scenario {
        let bound = intensity.bound();
        if !bound.is_finite() {
            return Err(Error::InvalidInput("Cox intensity has no finite bound on [0, 1]".into()));
        }
        return simulate_cox_with(config.n, config.seed, |x, t| intensity.value(x, t), bound, exec)
            .map(RawSample::Counting);
    }
    let draws: Vec<(f64, f64)> = par::map_range(config.n, exec, |i| {
        let mut rng = stream(config.seed, domain::INDIVIDUAL, i as u64);
        let x: f64 = rng.random();
        (x, draw_time(&config.scenario, x, &mut rng))
    });
    let times: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let observed = apply_censoring(&times, config.censoring, config.seed);
    Ok(RawSample::Survival(
        draws
            .iter()
            .zip(observed)
            .map(|(&(x, _), (time, event))| SurvivalRecord { x, time, event })
            .collect(),
    ))
}

/// Counting processes on `[0, 1]` with intensity `alpha <= bound`, by thinning.
pub fn simulate_cox(config: &ScenarioConfig) -> Result<RawSample> {
    match config.scenario {
        Scenario::Cox { .. } => simulate_scenario(config),
        _ => Err(Error::InvalidInput(format!("scenario {} is not a Cox process", config.scenario.name()))),
    }
}

pub fn simulate_cox_with<F>(n: usize, seed: u64, intensity: F, bound: f64, exec: Execution) -> Result<Vec<CountingRecord>>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::InvalidInput(format!("thinning bound must be finite and nonnegative, got {bound}")));
    }
    par::map_range(n, exec, |i| {
        let mut rng = stream(seed, domain::INDIVIDUAL, i as u64);
        let x: f64 = rng.random();
        let mut jumps = Vec::new();
        if bound > 0.0 {
            let mut t = 0.0;
            loop {
                t += -(1.0 - rng.random::<f64>()).ln() / bound;
                if t > 1.0 {
                    break;
                }
                let value = intensity(x, t);
                if value > bound * (1.0 + 1e-12) || value < 0.0 {
                    return Err(Error::IntensityAboveBound { value, bound, x, t });
                }
                if rng.random::<f64>() * bound < value {
                    jumps.push(t);
                }
            }
        }
        Ok(CountingRecord { x, jumps })
    })
    .into_iter()
    .collect()
}

fn validate(config: &ScenarioConfig) -> Result<()> {
    if config.n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let positive = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{what} must be positive, got {v}")))
        }
    };
    match config.scenario {
        Scenario::NonLinear { sigma } => positive(sigma, "sigma")?,
        Scenario::ProportionalHazards { shape, lambda, .. } => {
            positive(shape, "Weibull shape")?;
            positive(lambda, "Weibull scale")?;
        }
        Scenario::Cox { intensity: CoxIntensity::Constant { rate } } if rate < 0.0 => {
            return Err(Error::InvalidInput("Cox rate must be nonnegative".into()));
        }
        _ => {}
    }
    match config.censoring {
        Censoring::Exponential { rate } => positive(rate, "censoring rate"),
        Censoring::Uniform { upper } => positive(upper, "censoring upper bound"),
        Censoring::None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scenario: Scenario, n: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig { scenario, n, seed, censoring: Censoring::None }
    }

    #[test]
    fn transforms() {
        assert_eq!(nl_time(0.25, 0.0, 1.0), 5.5);
        assert!((ph_time(0.0, (-1.0f64).exp(), 0.4, 3.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((aft_time(0.0, 0.0, 5.0, 2.0) - 5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn hazards() {
        assert!((true_hazard(&Scenario::ph(), 0.0, 1.0) - 3.0).abs() < 1e-15);
        assert!((true_hazard(&Scenario::nl(), 0.0, 7.0) - 0.25).abs() < 1e-15);
        assert_eq!(true_hazard(&Scenario::nl(), 0.5, 5.5), 0.0);
        let aft = true_hazard(&Scenario::aft(), 0.0, 5f64.exp());
        let oracle = (2.0 / PI).sqrt() / 5f64.exp();
        assert!((aft - oracle).abs() < 1e-15, "{aft}");
        assert!((aft - 0.005376).abs() < 1e-6);
        assert_eq!(true_hazard(&Scenario::aft(), 0.3, 0.0), 0.0);
    }

    #[test]
    fn normal_hazard_branches_join() {
        let below = normal_hazard(30.0 - 1e-9);
        let above = normal_hazard(30.0 + 1e-9);
        assert!((below - above).abs() / below < 1e-8);
        assert!((normal_hazard(0.0) - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn seeded_determinism_and_parallel_equivalence() {
        for scenario in [Scenario::nl(), Scenario::aft(), Scenario::ph(), Scenario::cox()] {
            let c = ScenarioConfig { censoring: Censoring::Exponential { rate: 0.1 }, ..cfg(scenario, 200, 42) };
            let a = simulate_scenario_with(&c, Execution::Sequential).unwrap();
            let b = simulate_scenario_with(&c, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, simulate_scenario(&c).unwrap());
            assert_ne!(a, simulate_scenario(&ScenarioConfig { seed: 43, ..c }).unwrap());
        }
    }

    #[test]
    fn censoring_cases() {
        let times = [1.0, 2.0, 3.0];
        let none = apply_censoring(&times, Censoring::None, 1);
        assert!(none.iter().zip(times).all(|(o, t)| o.1 && o.0 == t));

        let tiny = apply_censoring(&[1.0; 1000], Censoring::Exponential { rate: 1e-9 }, 1);
        assert!(tiny.iter().all(|o| o.1));

        let all = apply_censoring(&[5.0; 100], Censoring::Uniform { upper: 4.0 }, 1);
        assert!(all.iter().all(|o| !o.1 && o.0 <= 4.0));
    }

    #[test]
    fn cox_zero_intensity_has_no_jumps() {
        let recs = simulate_cox_with(100, 1, |_, _| 0.0, 0.0, Execution::Sequential).unwrap();
        assert!(recs.iter().all(|r| r.jumps.is_empty()));
        let recs = simulate_cox_with(100, 1, |_, _| 0.0, 2.0, Execution::Sequential).unwrap();
        assert!(recs.iter().all(|r| r.jumps.is_empty()));
    }

    #[test]
    fn cox_bound_violation_aborts() {
        let err = simulate_cox_with(50, 1, |_, _| 3.0, 2.0, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::IntensityAboveBound { .. }));
    }

    #[test]
    fn cox_jumps_sorted_in_unit_interval() {
        let recs = simulate_cox_with(200, 5, |x, t| 2.0 + x * t, 3.0, Execution::Parallel).unwrap();
        for r in recs {
            assert!(r.jumps.windows(2).all(|w| w[0] <= w[1]));
            assert!(r.jumps.iter().all(|t| *t > 0.0 && *t <= 1.0));
        }
    }

    #[test]
    fn parsing() {
        assert_eq!("ph".parse::<Scenario>().unwrap(), Scenario::ph());
        assert!("XX".parse::<Scenario>().is_err());
        assert_eq!("exp:0.5".parse::<Censoring>().unwrap(), Censoring::Exponential { rate: 0.5 });
        assert_eq!("uniform:3".parse::<Censoring>().unwrap(), Censoring::Uniform { upper: 3.0 });
        assert_eq!("none".parse::<Censoring>().unwrap(), Censoring::None);
        assert!("exp:-1".parse::<Censoring>().is_err());
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(simulate_scenario(&cfg(Scenario::ph(), 0, 1)).is_err());
        assert!(simulate_scenario(&cfg(Scenario::NonLinear { sigma: 0.0 }, 5, 1)).is_err());
        assert!(simulate_cox(&cfg(Scenario::ph(), 5, 1)).is_err());
    }
}
