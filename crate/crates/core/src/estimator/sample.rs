//! Observations on the unit square.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One right-censored observation in original time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub x: f64,
    pub time: f64,
    pub event: bool,
}

/// `n` individuals rescaled to `[0, 1]^2`: covariate `x_i`, jump times of
/// `N^i`, and at-risk horizon `R_i` with `Y^i(z) = 1(z <= R_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSample {
    x: Vec<f64>,
    jumps: Vec<Vec<f64>>,
    risk_end: Vec<f64>,
    rescale: f64,
    /// Canonical summation order, so sums are invariant under relabeling.
    order: Vec<usize>,
}

impl UnitSample {
    pub fn new(x: Vec<f64>, jumps: Vec<Vec<f64>>, risk_end: Vec<f64>, rescale: f64) -> Result<Self> {
        let n = x.len();
        if jumps.len() != n || risk_end.len() != n {
            return Err(Error::InvalidInput(format!(
                "length mismatch: {n} covariates, {} jump lists, {} risk ends",
                jumps.len(),
                risk_end.len()
            )));
        }
        if !(rescale.is_finite() && rescale > 0.0) {
            return Err(Error::InvalidInput(format!("rescale factor must be positive, got {rescale}")));
        }
        for i in 0..n {
            if !(0.0..=1.0).contains(&x[i]) {
                return Err(Error::InvalidInput(format!("covariate {} outside [0, 1]", x[i])));
            }
            let r = risk_end[i];
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidInput(format!("risk end {r} outside [0, 1]")));
            }
            if jumps[i].windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidInput(format!("jump times of individual {i} not sorted")));
            }
            if jumps[i].iter().any(|&t| !(0.0..=r).contains(&t)) {
                return Err(Error::InvalidInput(format!("individual {i} jumps outside [0, {r}]")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            x[a].total_cmp(&x[b])
                .then(risk_end[a].total_cmp(&risk_end[b]))
                .then_with(|| cmp_lists(&jumps[a], &jumps[b]))
        });
        Ok(UnitSample { x, jumps, risk_end, rescale, order })
    }

    /// Counting-process data observed on all of `[0, 1]` (`Y = 1`).
    pub fn from_counting(x: Vec<f64>, jumps: Vec<Vec<f64>>) -> Result<Self> {
        let n = x.len();
        Self::new(x, jumps, vec![1.0; n], 1.0)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn jumps(&self) -> &[Vec<f64>] {
        &self.jumps
    }

    pub fn risk_end(&self) -> &[f64] {
        &self.risk_end
    }

    /// Original time units per unit interval.
    pub fn rescale_factor(&self) -> f64 {
        self.rescale
    }

    pub fn total_jumps(&self) -> usize {
        self.jumps.iter().map(Vec::len).sum()
    }

    /// Individual indices in canonical order.
    pub(crate) fn canonical(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    /// The same individuals listed in `perm` order.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::InvalidInput("permutation length mismatch".into()));
        }
        Self::new(
            perm.iter().map(|&i| self.x[i]).collect(),
            perm.iter().map(|&i| self.jumps[i].clone()).collect(),
            perm.iter().map(|&i| self.risk_end[i]).collect(),
            self.rescale,
        )
    }
}

fn cmp_lists(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Nearest-rank empirical quantile of `values` (need not be sorted).
pub fn nearest_rank_quantile(values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() || !(level > 0.0 && level <= 1.0) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Maps censored observations onto the unit square.
///
/// Times are divided by `tau`, the nearest-rank empirical quantile of the
/// observed times at `quantile_level`. Individuals whose rescaled time
/// exceeds 1 stay at risk on all of `[0, 1]` and contribute no jump.
pub fn rescale_sample(raw: &[SurvivalRecord], quantile_level: f64) -> Result<UnitSample> {
    if raw.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if !(quantile_level > 0.0 && quantile_level <= 1.0) {
        return Err(Error::InvalidInput(format!("quantile level {quantile_level} not in (0, 1]")));
    }
    if let Some(bad) = raw.iter().find(|r| !(r.time.is_finite() && r.time >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid observed time {}", bad.time)));
    }
    let times: Vec<f64> = raw.iter().map(|r| r.time).collect();
    let tau = nearest_rank_quantile(&times, quantile_level).unwrap_or(0.0);
    if tau <= 0.0 {
        return Err(Error::DegenerateTimes);
    }
    let mut x = Vec::with_capacity(raw.len());
    let mut jumps = Vec::with_capacity(raw.len());
    let mut risk_end = Vec::with_capacity(raw.len());
    for r in raw {
        let u = r.time / tau;
        x.push(r.x);
        if u > 1.0 {
            risk_end.push(1.0);
            jumps.push(Vec::new());
        } else {
            risk_end.push(u);
            jumps.push(if r.event { vec![u] } else { Vec::new() });
        }
    }
    UnitSample::new(x, jumps, risk_end, tau)
}
