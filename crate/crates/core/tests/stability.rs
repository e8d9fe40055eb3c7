mod common;

use approx::assert_relative_eq;
use ndarray::{aview1, Array1};
use plab::classifier::ConstantClassifier;
use plab::data::synthetic::{normal_cdf, persistence_at_distance};
use plab::stability::*;
use plab::Classifier;
use proptest::prelude::*;

use common::{linear_net, point_at};

fn cfg(n: usize, precision: f64, seed: u64) -> PersistenceConfig {
    PersistenceConfig {
        gamma: 0.7,
        n_samples: n,
        max_steps: 30,
        precision,
        range_cap: 60,
        seed,
        schedule: NoiseSchedule::Common,
    }
}

#[test]
fn constant_classifier_is_always_stable() {
    let net = ConstantClassifier {
        dim: 3,
        num_classes: 4,
        class: 2,
    };
    for sigma in [1e-3, 1.0, 1e3] {
        let e = estimate_stability(&net, aview1(&[0.0, 1.0, 2.0]), sigma, 500, 1).unwrap();
        assert_eq!(e.gamma_hat, 1.0);
        assert_eq!(e.class_counts, vec![0, 0, 500, 0]);
        assert_eq!(e.base_class, 2);
    }
}

#[test]
fn linear_stability_matches_gaussian_cdf() {
    let net = linear_net(2);
    let e = estimate_stability(&net, point_at(2, 1.0).view(), 1.0, 100_000, 42).unwrap();
    assert!((e.gamma_hat - normal_cdf(1.0)).abs() <= 0.004, "{}", e.gamma_hat);
}

#[test]
fn single_sample_is_binary_and_wrapper_matches() {
    let net = linear_net(2);
    let x = point_at(2, 0.3);
    for seed in 0..20 {
        let g = compute_persistence(1.0, x.view(), 1, &net, seed).unwrap();
        assert!(g == 0.0 || g == 1.0);
        let e = estimate_stability(&net, x.view(), 1.0, 1, seed).unwrap();
        assert_eq!(g.to_bits(), e.gamma_hat.to_bits());
    }
}

#[test]
fn invalid_inputs_rejected() {
    let net = linear_net(2);
    let x = point_at(2, 1.0);
    assert!(estimate_stability(&net, x.view(), 0.0, 10, 1).is_err());
    assert!(estimate_stability(&net, x.view(), 1.0, 0, 1).is_err());
    assert!(estimate_stability(&net, aview1(&[1.0]), 1.0, 10, 1).is_err());
    let mut c = cfg(10, 0.01, 1);
    c.gamma = 1.0;
    assert!(bracketing(&net, x.view(), &c).is_err());
}

#[test]
fn cached_and_streamed_draws_agree() {
    let net = linear_net(5);
    let x = point_at(5, 0.4);
    let cached = GaussianProbe::new(9, 3000, 5).unwrap();
    let streamed = GaussianProbe::uncached(9, 3000, 5).unwrap();
    for sigma in [0.1, 0.7, 3.0] {
        assert_eq!(
            cached.class_counts(&net, x.view(), sigma),
            streamed.class_counts(&net, x.view(), sigma)
        );
    }
}

#[test]
fn result_independent_of_thread_count() {
    let net = linear_net(10);
    let x = point_at(10, 0.8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bracketing(&net, x.view(), &cfg(2000, 0.01, 5)).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn gaussian_sample_mean_within_four_standard_errors() {
    let n = 20_000;
    let probe = GaussianProbe::new(3, n, 4).unwrap();
    let sigma = 2.5;
    let x = [1.0, -2.0, 0.5, 10.0];
    let mut mean = [0.0; 4];
    let mut z = [0.0; 4];
    for i in 0..n {
        probe.draw(i, &mut z);
        for j in 0..4 {
            mean[j] += (x[j] + sigma * z[j]) / n as f64;
        }
    }
    for j in 0..4 {
        assert!((mean[j] - x[j]).abs() < 4.0 * sigma / (n as f64).sqrt());
    }
}

/// Standard deviation of `reps` independent estimates at `n` samples.
fn empirical_se(n: usize, reps: u64, offset: u64) -> f64 {
    let net = linear_net(2);
    let x = point_at(2, 1.0);
    let vals: Vec<f64> = (0..reps)
        .map(|r| estimate_stability(&net, x.view(), 1.0, n, offset + r).unwrap().gamma_hat)
        .collect();
    let m = vals.iter().sum::<f64>() / reps as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
}

#[test]
fn standard_error_scales_as_inverse_root_n() {
    // 30 repetitions per size; the log of a ratio of sample standard
    // deviations has standard error sqrt(1/29) ≈ 0.186.
    let tol = 2.0 * (1.0f64 / 29.0).sqrt();
    let base = empirical_se(2000, 30, 1000);
    let doubled = empirical_se(4000, 30, 2000);
    let quadrupled = empirical_se(8000, 30, 3000);
    assert!(((base / doubled).ln() - 2f64.sqrt().ln()).abs() < tol);
    assert!(((base / quadrupled).ln() - 2f64.ln()).abs() < tol);
    let p = normal_cdf(1.0);
    let theory = (p * (1.0 - p) / 2000.0).sqrt();
    assert!(((base / theory).ln()).abs() < tol);
}

#[test]
fn rangefinder_censors_constant_classifier() {
    let net = ConstantClassifier {
        dim: 2,
        num_classes: 2,
        class: 0,
    };
    let mut c = cfg(100, 0.01, 1);
    c.range_cap = 10;
    let b = rangefinder(&net, aview1(&[0.0, 0.0]), &c).unwrap();
    assert_eq!(b.censored, Censoring::AtLeast(1.5 * 1024.0));
    let r = bracketing(&net, aview1(&[0.0, 0.0]), &c).unwrap();
    assert!(!r.converged);
    assert_eq!(r.display_value(), ">=1536");
}

#[test]
fn rangefinder_censors_boundary_point() {
    let net = linear_net(2);
    let mut c = cfg(1000, 0.01, 1);
    c.range_cap = 10;
    // Half of all samples land on each side of the boundary.
    let b = rangefinder(&net, aview1(&[0.0, 0.0]), &c).unwrap();
    assert_eq!(b.censored, Censoring::AtMost(0.5 / 1024.0));
}

#[test]
fn rangefinder_brackets_linear_oracle() {
    let net = linear_net(2);
    let b = rangefinder(&net, point_at(2, 1.0).view(), &cfg(2000, 0.02, 3)).unwrap();
    assert_eq!(b.censored, Censoring::None);
    let truth = persistence_at_distance(1.0, 0.7);
    assert!(b.sigma_min <= truth && truth <= b.sigma_max, "{b:?}");
    assert!(b.gamma_at_min >= 0.7 && b.gamma_at_max <= 0.7);
}

#[test]
fn bracketing_recovers_linear_persistence() {
    let net = linear_net(3);
    for d in [0.5, 1.0, 2.0, 3.7] {
        let r = bracketing(&net, point_at(3, d).view(), &cfg(20_000, 0.003, 11)).unwrap();
        let truth = persistence_at_distance(d, 0.7);
        assert!(r.converged);
        assert!((r.sigma_star / truth - 1.0).abs() < 0.05, "d={d}: {} vs {truth}", r.sigma_star);
    }
}

#[test]
fn bracketing_stops_on_first_midpoint_within_precision() {
    // With precision 0.02 the first midpoint of [0.5, 3] already has
    // stability Φ(1/1.75) ≈ 0.716, so the search returns 1.75.
    let net = linear_net(2);
    let mut c = cfg(200_000, 0.02, 4);
    c.schedule = NoiseSchedule::Common;
    let r = bracketing(&net, point_at(2, 1.0).view(), &c).unwrap();
    assert_eq!((r.bracket.sigma_min, r.bracket.sigma_max), (0.5, 3.0));
    assert_eq!(r.steps, 1);
    assert_eq!(r.sigma_star, 1.75);
}

#[test]
fn bisection_invariant_holds_within_three_standard_errors() {
    let net = linear_net(4);
    let n = 2000;
    let mut c = cfg(n, 0.005, 8);
    c.schedule = NoiseSchedule::Fresh;
    let x = point_at(4, 1.3);
    let r = bracketing(&net, x.view(), &c).unwrap();
    assert!(!r.trace.is_empty());
    for (k, step) in r.trace.iter().enumerate() {
        let lo = estimate_stability(&net, x.view(), step.sigma_min, n, 900 + k as u64).unwrap();
        let hi = estimate_stability(&net, x.view(), step.sigma_max, n, 950 + k as u64).unwrap();
        let slack = |e: &StabilityEstimate| 3.0 * (0.7 * 0.3 / n as f64).sqrt().max(e.standard_error());
        assert!(lo.gamma_hat >= 0.7 - slack(&lo), "step {k}: {lo:?}");
        assert!(hi.gamma_hat <= 0.7 + slack(&hi), "step {k}: {hi:?}");
        assert!(step.sigma_min < step.sigma && step.sigma < step.sigma_max);
    }
}

#[test]
fn max_steps_bounds_the_search() {
    let net = linear_net(2);
    let mut c = cfg(2000, 1e-9, 1);
    c.max_steps = 5;
    let r = bracketing(&net, point_at(2, 1.0).view(), &c).unwrap();
    assert_eq!(r.steps, 4);
    assert!(!r.converged);
    assert_eq!(r.sigma_star, r.trace.last().unwrap().sigma);
}

#[test]
fn sweep_rows_are_stochastic_and_follow_cdf() {
    let net = linear_net(2);
    let x = point_at(2, 0.8);
    let n = 5000;
    let s = class_frequency_sweep(&net, x.view(), 0.1, 3.0, 30, n, 17).unwrap();
    assert_eq!(s.sigma_grid.len(), 30);
    assert_relative_eq!(s.sigma_grid[29], 3.0);
    assert_eq!(s.base_class, 1);
    for (row, &sigma) in s.frequencies.rows().into_iter().zip(&s.sigma_grid) {
        assert!((row.sum() - 1.0).abs() <= 1e-12);
        let p = normal_cdf(0.8 / sigma);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        // The normal approximation behind a 3-SE band needs enough
        // expected counts on both sides.
        if (n as f64) * p.min(1.0 - p) < 5.0 {
            continue;
        }
        assert!((row[1] - p).abs() <= 3.0 * se + 1e-12, "sigma {sigma}: {} vs {p}", row[1]);
    }

    let constant = ConstantClassifier {
        dim: 2,
        num_classes: 3,
        class: 1,
    };
    let s = class_frequency_sweep(&constant, x.view(), 0.1, 1.6, 100, 100, 1).unwrap();
    assert!(s.frequencies.column(1).iter().all(|&v| v == 1.0));
    assert!(class_frequency_sweep(&net, x.view(), 1.0, 0.5, 10, 10, 1).is_err());
}

#[test]
fn path_between_identical_points_is_flat() {
    let net = linear_net(2);
    let x = point_at(2, 1.0);
    let path = persistence_along_path(&net, x.view(), x.view(), 5, &cfg(500, 0.02, 2)).unwrap();
    for p in &path {
        assert_eq!(p.class, path[0].class);
        assert_eq!(p.persistence, path[0].persistence);
    }
    assert_eq!(class_change_index(&path), None);
}

#[test]
fn linear_path_is_v_shaped() {
    let net = linear_net(3);
    let a = Array1::from(vec![-1.5, 0.3, 0.0]);
    let b = Array1::from(vec![2.5, -0.2, 1.0]);
    let c = cfg(20_000, 0.003, 21);
    let path = persistence_along_path(&net, a.view(), b.view(), 21, &c).unwrap();
    for p in &path {
        let d = (a[0] + p.t * (b[0] - a[0])).abs();
        if d < 0.05 {
            continue;
        }
        let truth = persistence_at_distance(d, 0.7);
        let rel = (p.persistence.sigma_star / truth - 1.0).abs();
        assert!(rel < 0.07, "t={} sigma={} truth={truth}", p.t, p.persistence.sigma_star);
    }
    // The boundary sits at t = 1.5/4 = 0.375, between points 7 and 8.
    assert_eq!(class_change_index(&path), Some(8));
    let m = min_persistence_index(&path).unwrap();
    assert!(m == 7 || m == 8);
}

#[test]
fn concentration_bounds() {
    let eps: Vec<f64> = (1..=10).map(|e| e as f64 * 2.0).collect();
    let r = concentration_check(784, 1.0, 7.0, 20_000, &eps, 5).unwrap();
    assert!(r.gaussian_bound_holds());
    assert!(r.ball_bound_holds());
    assert!(r.ball_within_radius());
    let within4 = r.gaussian_empirical[1];
    assert!(within4 > 0.99 && gaussian_bound(4.0) < 0.27);

    // One dimension: the norm is half-normal with mean σ√(2/π).
    let norms = sample_gaussian_norms(1, 2.0, 100_000, 1);
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let expected = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let sd = 2.0 * (1.0 - 2.0 / std::f64::consts::PI).sqrt();
    assert!((mean - expected).abs() < 4.0 * sd / (norms.len() as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_is_a_count_ratio(d in -3.0f64..3.0, sigma in 0.01f64..5.0, n in 1usize..400, seed in any::<u64>()) {
        let net = linear_net(2);
        let x = point_at(2, d);
        let e = estimate_stability(&net, x.view(), sigma, n, seed).unwrap();
        prop_assert_eq!(e.class_counts.iter().sum::<usize>(), n);
        prop_assert!((0.0..=1.0).contains(&e.gamma_hat));
        prop_assert_eq!(e.gamma_hat, e.class_counts[Classifier::predict(&net, x.view())] as f64 / n as f64);
    }

    #[test]
    fn ball_norms_never_exceed_radius(n in 1usize..50, r in 0.01f64..100.0, seed in any::<u64>()) {
        for v in sample_ball_norms(n, r, 50, seed) {
            prop_assert!(v <= r);
        }
    }
}
