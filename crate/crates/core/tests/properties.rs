use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use condint::basis::BasisKind;
use condint::density::{estimate_f0, F0_FLOOR};
use condint::estimator::{
    fit_model_with, select_model, GuardRule, PenaltyForm, SelectionConfig, SurvivalRecord, UnitSample,
    rescale_sample,
};
use condint::eval::{oracle_gap_of, ise_on_grid};
use condint::datagen::Scenario;
use condint::models::{enumerate_collection, ModelIndex};
use condint::par::Execution;

/// Censored survival data with hazard `1 + x` on `[0, 2]` and uniform censoring.
fn survival(n: usize, seed: u64) -> Vec<SurvivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let t = -(1.0 - rng.random::<f64>()).ln() / (1.0 + x);
            let c = 2.0 * rng.random::<f64>();
            SurvivalRecord { x, time: t.min(c), event: t <= c }
        })
        .collect()
}

fn sample(n: usize, seed: u64) -> UnitSample {
    rescale_sample(&survival(n, seed), 0.95).unwrap()
}

fn selection(f0_hat: f64, k0: f64, execution: Execution) -> SelectionConfig {
    SelectionConfig { k0, penalty_form: PenaltyForm::Practical, f0_hat, guard: GuardRule::Invertibility, execution }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permutation_invariance_is_exact(n in 20usize..300, seed in any::<u64>()) {
        let s = sample(n, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled = s.permuted(&perm).unwrap();
        let c = enumerate_collection(n, BasisKind::Histogram, BasisKind::Histogram).unwrap();
        let cfg = selection(estimate_f0(&s, 50).unwrap(), 5.0, Execution::Sequential);
        prop_assert_eq!(estimate_f0(&s, 50).unwrap().to_bits(), estimate_f0(&shuffled, 50).unwrap().to_bits());
        let a = select_model(&s, &c, &cfg).unwrap();
        let b = select_model(&shuffled, &c, &cfg).unwrap();
        prop_assert_eq!(a.selected, b.selected);
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&x.coefficients), bits(&y.coefficients));
            prop_assert_eq!(x.contrast.to_bits(), y.contrast.to_bits());
        }
    }

    #[test]
    fn larger_k0_never_selects_a_larger_model(seed in any::<u64>(), k_lo in 0.1f64..5.0, bump in 0.1f64..20.0) {
        let s = sample(400, seed);
        let c = enumerate_collection(400, BasisKind::Histogram, BasisKind::Histogram).unwrap();
        let lo = select_model(&s, &c, &selection(0.5, k_lo, Execution::Sequential)).unwrap();
        let hi = select_model(&s, &c, &selection(0.5, k_lo + bump, Execution::Sequential)).unwrap();
        prop_assert!(hi.selected.product_dim() <= lo.selected.product_dim());
    }

    #[test]
    fn histogram_fit_is_occurrence_over_exposure(n in 30usize..400, seed in any::<u64>(), l1 in 0u32..4, l2 in 0u32..4) {
        let s = sample(n, seed);
        let (d1, d2) = (1usize << l1, 1usize << l2);
        let fit = fit_model_with(&ModelIndex::histogram(d1, d2), &s, 0.01, GuardRule::Invertibility).unwrap();
        prop_assume!(fit.guard_passed);
        let cell = |v: f64, d: usize| ((v * d as f64) as usize).min(d - 1);
        let mut events = vec![0.0; d1 * d2];
        let mut exposure = vec![0.0; d1 * d2];
        for i in 0..n {
            let j = cell(s.x()[i], d1);
            for &t in &s.jumps()[i] {
                events[j * d2 + cell(t, d2)] += 1.0;
            }
            for k in 0..d2 {
                let (lo, hi) = (k as f64 / d2 as f64, (k + 1) as f64 / d2 as f64);
                exposure[j * d2 + k] += (s.risk_end()[i].min(hi) - lo).max(0.0);
            }
        }
        let scale = ((d1 * d2) as f64).sqrt();
        for idx in 0..d1 * d2 {
            let oracle = events[idx] / exposure[idx];
            let got = fit.coefficients[idx] * scale;
            prop_assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{} vs {}", got, oracle);
        }
    }

    #[test]
    fn guard_failure_means_zero_estimator(n in 8usize..60, seed in any::<u64>()) {
        let s = sample(n, seed);
        for m in &enumerate_collection(n, BasisKind::Histogram, BasisKind::Histogram).unwrap().models {
            let fit = fit_model_with(m, &s, 3.0, GuardRule::Theorem).unwrap();
            if !fit.guard_passed {
                prop_assert!(fit.coefficients.iter().all(|a| *a == 0.0));
                prop_assert_eq!(fit.contrast, 0.0);
                prop_assert_eq!(fit.value(0.3, 0.6), 0.0);
            }
        }
    }

    #[test]
    fn selection_minimizes_the_criterion(seed in any::<u64>(), k0 in 0.5f64..10.0) {
        let s = sample(250, seed);
        let c = enumerate_collection(250, BasisKind::Histogram, BasisKind::Trigonometric).unwrap();
        let fit = select_model(&s, &c, &selection(0.2, k0, Execution::Parallel)).unwrap();
        let best = fit.candidates.iter().map(|m| m.criterion()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(fit.fit.criterion(), best);
        for m in &fit.candidates {
            if m.criterion() == best {
                prop_assert!(fit.selected.order_key() <= m.model.order_key());
            }
        }
    }

    #[test]
    fn parallel_and_sequential_selection_agree(seed in any::<u64>()) {
        let s = sample(300, seed);
        let c = enumerate_collection(300, BasisKind::Histogram, BasisKind::Histogram).unwrap();
        let a = select_model(&s, &c, &selection(0.3, 5.0, Execution::Parallel)).unwrap();
        let b = select_model(&s, &c, &selection(0.3, 5.0, Execution::Sequential)).unwrap();
        prop_assert_eq!(a.selected, b.selected);
        prop_assert_eq!(a.sup_plugin.to_bits(), b.sup_plugin.to_bits());
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            prop_assert_eq!(&x.coefficients, &y.coefficients);
        }
    }

    #[test]
    fn f0_hat_respects_floor(n in 8usize..200, seed in any::<u64>(), grid in 1usize..40) {
        prop_assert!(estimate_f0(&sample(n, seed), grid).unwrap() >= F0_FLOOR);
    }

    #[test]
    fn ise_and_oracle_ratio_bounds(seed in any::<u64>()) {
        let s = sample(200, seed);
        let c = enumerate_collection(200, BasisKind::Histogram, BasisKind::Histogram).unwrap();
        let fit = select_model(&s, &c, &selection(0.3, 5.0, Execution::Sequential)).unwrap();
        let scenario = Scenario::Cox { intensity: condint::datagen::CoxIntensity::Constant { rate: 1.0 } };
        prop_assert!(ise_on_grid(&fit, &scenario, 32).unwrap() >= 0.0);
        prop_assert!(oracle_gap_of(&fit, &scenario, 32).unwrap().ratio >= 1.0 - 1e-12);
    }
}
