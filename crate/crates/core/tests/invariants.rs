//! Property tests of the model invariants across modules.

use hawkes_watch::baselines::{baseline1_stat, bin_counts};
use hawkes_watch::detector::{run_online, DetectorConfig};
use hawkes_watch::em::{self, e_step, EmConfig};
use hawkes_watch::model::spectral_radius;
use hawkes_watch::simulate::{simulate_hawkes, simulate_poisson, SimSeed};
use hawkes_watch::theory::{info_hawkes_to_hawkes_1d, info_poisson_to_hawkes_1d, stationary_intensity};
use hawkes_watch::{Event, EventStream, HawkesParams, Setting, Window};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Random stationary model: entries uniform on the mask, rescaled to radius `rho`.
fn random_model(seed: u64, d: usize, rho: f64) -> HawkesParams {
    let mut rng = SimSeed::new(seed).rng();
    let mask = DMatrix::from_fn(d, d, |i, j| i == j || rng.gen_bool(0.5));
    let mut a = DMatrix::from_fn(d, d, |i, j| if mask[(i, j)] { rng.gen_range(0.05..1.0) } else { 0.0 });
    let r = spectral_radius(&a);
    a *= rho / r;
    let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..3.0)).collect();
    HawkesParams::new(mu, a, rng.gen_range(0.5..3.0)).with_mask(mask)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn responsibilities_are_distributions(seed in 0u64..100_000, d in 1usize..4) {
        let p = random_model(seed, d, 0.6);
        let s = simulate_hawkes(&p, 25.0, SimSeed::new(seed ^ 1)).unwrap();
        let resp = e_step(&s, Window::new(5.0, 25.0).unwrap(), &p).unwrap();
        for row in &resp.rows {
            prop_assert!(row.background >= 0.0);
            prop_assert!(row.parents.iter().all(|&(_, w)| w >= 0.0));
            let total = row.background + row.parents.iter().map(|&(_, w)| w).sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-12, "row sums to {}", total);
        }
    }

    #[test]
    fn em_climbs_and_respects_topology(seed in 0u64..100_000, d in 1usize..4) {
        let p = random_model(seed, d, 0.5);
        let s = simulate_hawkes(&p, 60.0, SimSeed::new(seed ^ 2)).unwrap();
        let cfg = EmConfig::default();
        let prior = p.with_influence(cfg.cold_start(&p.mask));
        let fit = em::fit(&s, Window::new(0.0, 60.0).unwrap(), &prior, &cfg).unwrap();
        for pair in fit.loglik_trace.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9, "loglik fell {} -> {}", pair[0], pair[1]);
        }
        for i in 0..d {
            for j in 0..d {
                let a = fit.influence[(i, j)];
                if p.mask[(i, j)] {
                    prop_assert!((0.0..1.0).contains(&a));
                } else {
                    prop_assert_eq!(a, 0.0);
                }
            }
        }
    }

    #[test]
    fn stationary_intensity_solves_balance(seed in 0u64..100_000, d in 1usize..6, rho in 0.0f64..0.95) {
        let p = random_model(seed, d, rho.max(1e-3));
        let lam = stationary_intensity(&p).unwrap();
        let mu = DVector::from_vec(p.mu.iter().copied().collect());
        let resid = (DMatrix::identity(d, d) - &p.influence) * &lam - &mu;
        prop_assert!(resid.amax() < 1e-9 * lam.amax());
        prop_assert!(lam.iter().zip(mu.iter()).all(|(l, m)| l >= m));
    }

    #[test]
    fn radius_respects_classical_bounds(seed in 0u64..100_000, d in 1usize..8, scale in 0.1f64..3.0) {
        let mut rng = SimSeed::new(seed).rng();
        let a = DMatrix::from_fn(d, d, |_, _| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.0) } else { 0.0 });
        let r = spectral_radius(&a);
        let max_diag = (0..d).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let row = a.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
        let col = a.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
        prop_assert!(r >= max_diag * (1.0 - 1e-9));
        prop_assert!(r <= row.min(col) * (1.0 + 1e-9) + 1e-300);
        let scaled = spectral_radius(&(&a * scale));
        prop_assert!((scaled - scale * r).abs() <= 1e-9 * (1.0 + scale * r));
    }

    #[test]
    fn alarm_is_first_strict_crossing(seed in 0u64..100_000, x in 0.5f64..6.0) {
        let s = simulate_poisson(&[3.0], 80.0, SimSeed::new(seed)).unwrap();
        let null = HawkesParams::poisson(vec![3.0], 1.0);
        let free = run_online(&s, &DetectorConfig::new(null.clone(), Setting::PoissonToHawkes, 10.0, f64::INFINITY)).unwrap();
        prop_assert!(free.records.iter().all(|r| r.statistic >= 0.0));
        let stopped = run_online(&s, &DetectorConfig::new(null, Setting::PoissonToHawkes, 10.0, x)).unwrap();
        prop_assert_eq!(stopped.stopping_time, free.first_crossing(x));
        prop_assert_eq!(&stopped.records[..], &free.records[..stopped.records.len()]);
    }

    #[test]
    fn binned_statistic_ignores_labels(seed in 0u64..100_000, d in 2usize..5) {
        let mut rng = SimSeed::new(seed).rng();
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..4.0)).collect();
        let s = simulate_poisson(&mu, 20.0, SimSeed::new(seed ^ 3)).unwrap();
        // Reverse the node labels.
        let flipped = EventStream::new(
            d,
            s.events().iter().map(|e| Event::new(e.time, d - 1 - e.node)).collect(),
            s.horizon(),
        )
        .unwrap();
        let mu_flipped: Vec<f64> = mu.iter().rev().copied().collect();
        let w = Window::new(0.0, 20.0).unwrap();
        let a = baseline1_stat(&bin_counts(&s, 1.0, w).unwrap(), &mu).unwrap();
        let b = baseline1_stat(&bin_counts(&flipped, 1.0, w).unwrap(), &mu_flipped).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn same_seed_same_stream(seed in 0u64..100_000, d in 1usize..4) {
        let p = random_model(seed, d, 0.7);
        let a = simulate_hawkes(&p, 30.0, SimSeed::new(seed).replicate(4)).unwrap();
        let b = simulate_hawkes(&p, 30.0, SimSeed::new(seed).replicate(4)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scalar_information_signs(mu in 0.1f64..20.0, alpha in 0.01f64..0.95, star in 0.01f64..0.95) {
        let q = info_poisson_to_hawkes_1d(mu, alpha);
        prop_assert!(q.i > 0.0 && q.i0 < 0.0 && q.sigma2 > 0.0 && q.sigma02 > 0.0 && q.xi() > 0.0);
        prop_assume!((alpha - star).abs() > 1e-3);
        let h = info_hawkes_to_hawkes_1d(mu, alpha, star);
        prop_assert!(h.i > 0.0 && h.i0 < 0.0 && h.sigma2 > 0.0 && h.sigma02 > 0.0 && h.xi() > 0.0);
    }
}
