//! Projection estimate of the density `f(x, z) = E(Y(z) | X = x) f_X(x)` of
//! the reference measure, and of its lower bound `f0` on the unit square.
//!
//! Coefficients are explicit averages, no linear solve is needed:
//! `b_{jk} = (1/n) sum_i phi_j(X_i) int_0^{R_i} psi_k(z) dz`.

use crate::basis::{Basis1D, BasisKind};
use crate::error::{Error, Result};
use crate::estimator::UnitSample;
use crate::models::{dimension_cap, ModelIndex};

/// Lower floor applied to `f0_hat` so the eigenvalue guard stays positive.
pub const F0_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct DensityFit {
    pub model: ModelIndex,
    /// Row-major `d1 x d2` coefficients.
    pub coefficients: Vec<f64>,
    pub f0_hat: f64,
    pub grid_resolution: usize,
    basis_x: Basis1D,
    basis_z: Basis1D,
}

pub fn density_coefficients(model: &ModelIndex, sample: &UnitSample) -> Result<Vec<f64>> {
    let (bx, bz) = model.bases()?;
    let d2 = model.d2;
    let mut b = vec![0.0; model.product_dim()];
    let mut phi = Vec::new();
    let mut psi_int = vec![0.0; d2];
    for i in sample.canonical() {
        let r = sample.risk_end()[i];
        if r <= 0.0 {
            continue;
        }
        bx.eval_nonzero(sample.x()[i], &mut phi);
        for (k, v) in psi_int.iter_mut().enumerate() {
            *v = bz.integral_unchecked(k, 0.0, r);
        }
        for &(j, pj) in &phi {
            for (k, v) in psi_int.iter().enumerate() {
                b[j * d2 + k] += pj * v;
            }
        }
    }
    if !sample.is_empty() {
        let n = sample.len() as f64;
        b.iter_mut().for_each(|v| *v /= n);
    }
    Ok(b)
}

impl DensityFit {
    pub fn new(model: ModelIndex, sample: &UnitSample, grid_resolution: usize) -> Result<Self> {
        if grid_resolution == 0 {
            return Err(Error::InvalidInput("grid resolution must be positive".into()));
        }
        let coefficients = density_coefficients(&model, sample)?;
        let (basis_x, basis_z) = model.bases()?;
        let mut fit = DensityFit { model, coefficients, f0_hat: F0_FLOOR, grid_resolution, basis_x, basis_z };
        fit.f0_hat = fit.grid_minimum().max(F0_FLOOR);
        Ok(fit)
    }

    /// Minimum of the fitted surface over the midpoints of a
    /// `grid_resolution x grid_resolution` grid.
    fn grid_minimum(&self) -> f64 {
        let res = self.grid_resolution;
        let pts: Vec<f64> = (0..res).map(|i| (i as f64 + 0.5) / res as f64).collect();
        let d2 = self.model.d2;
        let psi: Vec<Vec<f64>> = pts.iter().map(|&z| self.basis_z.eval_all(z)).collect();
        let mut min = f64::INFINITY;
        for &x in &pts {
            let phi = self.basis_x.eval_all(x);
            let row: Vec<f64> = (0..d2)
                .map(|k| phi.iter().enumerate().map(|(j, p)| p * self.coefficients[j * d2 + k]).sum())
                .collect();
            for q in &psi {
                min = min.min(q.iter().zip(&row).map(|(a, b)| a * b).sum());
            }
        }
        min
    }
}

/// `sum_{jk} b_{jk} phi_j(x) psi_k(z)`.
pub fn density_eval(fit: &DensityFit, x: f64, z: f64) -> f64 {
    let phi = fit.basis_x.eval_all(x);
    let psi = fit.basis_z.eval_all(z);
    let d2 = fit.model.d2;
    let mut total = 0.0;
    for (j, p) in phi.iter().enumerate() {
        for (k, q) in psi.iter().enumerate() {
            total += fit.coefficients[j * d2 + k] * p * q;
        }
    }
    total
}

/// Trigonometric model used for `f0`: `D2` at the (M1) cap and `D1` the
/// smallest dimension `>= ceil(log n)`, clamped to the same cap.
pub fn f0_model(n: usize) -> Result<ModelIndex> {
    if n < 8 {
        return Err(Error::InvalidInput(format!("f0 estimation needs n >= 8, got {n}")));
    }
    let cap = dimension_cap(BasisKind::Trigonometric, n).max(1);
    let d1 = ((n as f64).ln().ceil() as usize).clamp(1, cap);
    Ok(ModelIndex::new(d1, cap, BasisKind::Trigonometric, BasisKind::Trigonometric))
}

/// Fits the density model used for `f0`.
pub fn fit_f0_density(sample: &UnitSample, grid_resolution: usize) -> Result<DensityFit> {
    DensityFit::new(f0_model(sample.len())?, sample, grid_resolution)
}

/// `f0_hat`: grid infimum of the trigonometric density fit, floored at [`F0_FLOOR`].
pub fn estimate_f0(sample: &UnitSample, grid_resolution: usize) -> Result<f64> {
    Ok(fit_f0_density(sample, grid_resolution)?.f0_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_full_risk(n: usize, seed: u64) -> UnitSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        UnitSample::from_counting(x, vec![vec![]; n]).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let s = UnitSample::new(vec![0.3], vec![vec![]], vec![0.5], 1.0).unwrap();
        assert_eq!(density_coefficients(&ModelIndex::histogram(1, 1), &s).unwrap(), vec![0.5]);

        let zero = UnitSample::new(vec![0.3, 0.8], vec![vec![], vec![]], vec![0.0, 0.0], 1.0).unwrap();
        assert!(density_coefficients(&ModelIndex::histogram(2, 2), &zero).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trig_coefficients_near_uniform_density() {
        let s = uniform_full_risk(100_000, 3);
        let m = ModelIndex::new(3, 3, BasisKind::Trigonometric, BasisKind::Trigonometric);
        let b = density_coefficients(&m, &s).unwrap();
        assert!((b[0] - 1.0).abs() < 0.02);
        for v in &b[1..] {
            assert!(v.abs() < 0.02);
        }
        let fit = DensityFit::new(m, &s, 50).unwrap();
        for i in 0..50 {
            for k in 0..50 {
                let v = density_eval(&fit, (i as f64 + 0.5) / 50.0, (k as f64 + 0.5) / 50.0);
                assert!((0.9..=1.1).contains(&v));
            }
        }
    }

    #[test]
    fn eval_examples() {
        let s = UnitSample::new(vec![0.3], vec![vec![]], vec![1.0], 1.0).unwrap();
        let fit = DensityFit::new(ModelIndex::histogram(1, 1), &s, 4).unwrap();
        assert_eq!(fit.coefficients, vec![1.0]);
        assert_eq!(density_eval(&fit, 0.1, 0.9), 1.0);
        let empty = UnitSample::new(vec![0.3], vec![vec![]], vec![0.0], 1.0).unwrap();
        let fit = DensityFit::new(ModelIndex::histogram(2, 2), &empty, 4).unwrap();
        assert_eq!(density_eval(&fit, 0.1, 0.9), 0.0);
    }

    #[test]
    fn f0_floor_and_degenerate_grid() {
        let empty = UnitSample::new(vec![0.5; 20], vec![vec![]; 20], vec![0.0; 20], 1.0).unwrap();
        assert_eq!(estimate_f0(&empty, 200).unwrap(), F0_FLOOR);

        let s = uniform_full_risk(1000, 1);
        let fit = fit_f0_density(&s, 1).unwrap();
        let centre = density_eval(&fit, 0.5, 0.5);
        assert_eq!(fit.f0_hat, centre.max(F0_FLOOR));
        assert_eq!(estimate_f0(&s, 50).unwrap(), estimate_f0(&s, 50).unwrap());
        assert!(estimate_f0(&uniform_full_risk(7, 1), 10).is_err());
    }

    #[test]
    fn f0_model_dimensions() {
        let m = f0_model(10_000).unwrap();
        assert_eq!((m.d1, m.d2), (3, 3));
        let m = f0_model(1000).unwrap();
        assert_eq!((m.d1, m.d2), (2, 2));
        let m = f0_model(8).unwrap();
        assert_eq!((m.d1, m.d2), (1, 1));
    }
}
