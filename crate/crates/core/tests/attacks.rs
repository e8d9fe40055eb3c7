mod common;

use ndarray::{array, Array1, Array2};
use plab::attacks::*;
use plab::data::LinearOracle;
use plab::nn::MlpNetwork;
use plab::Classifier;
use proptest::prelude::*;

fn random_net(seed: u64) -> MlpNetwork {
    MlpNetwork::init(&[6, 8, 5, 3], vec![0.0; 3], seed).unwrap()
}

fn random_input(seed: u64, d: usize) -> Array1<f64> {
    let mut v = vec![0.0; d];
    plab::rng::fill_standard_normal(seed, 0, &mut v);
    Array1::from(v).mapv(|z| 0.5 + 0.2 * z).mapv(|z| z.clamp(0.0, 1.0))
}

#[test]
fn distortion_examples() {
    let x = Array1::from(vec![0.3; 784]);
    assert_eq!(distortion(x.view(), x.view()), 0.0);
    let y = x.mapv(|v| v + 0.1);
    assert!((distortion(x.view(), y.view()) - 0.1).abs() < 1e-12);
}

#[test]
fn fgsm_zero_epsilon_is_identity() {
    let net = random_net(1);
    let x = random_input(2, 6);
    let r = fgsm(&net, x.view(), 0, 0.0, PIXEL_BOX).unwrap();
    assert_eq!(r.x_adv, x);
    assert!(!r.success);
    assert_eq!(r.distortion, 0.0);
}

#[test]
fn fgsm_linear_flip_threshold() {
    let w = Array1::from(vec![3.0, -1.0, 0.5]);
    let lin = LinearOracle::new(w, -0.2).unwrap();
    let net = lin.classifier();
    let x = array![0.4, -0.3, 0.9];
    let m = lin.signed_distance(x.as_slice().unwrap());
    assert!(m > 0.0);
    let l1: f64 = lin.normal.iter().map(|v| v.abs()).sum();
    let threshold = m / l1;
    let below = fgsm(&net, x.view(), 1, 0.99 * threshold, None).unwrap();
    let above = fgsm(&net, x.view(), 1, 1.01 * threshold, None).unwrap();
    assert!(!below.success);
    assert!(above.success);
    assert_eq!(above.predicted, 0);
}

#[test]
fn igsm_target_already_predicted() {
    let net = random_net(3);
    let x = random_input(4, 6);
    let p = net.predict(x.view()).unwrap();
    let r = igsm_targeted(&net, x.view(), p, 0.01, 100, PIXEL_BOX).unwrap();
    assert!(r.success);
    assert_eq!(r.distortion, 0.0);
    assert_eq!(r.iterations_used, 0);
}

#[test]
fn igsm_on_linear_model_stops_at_boundary() {
    let net = common::linear_net(2);
    let d = 0.373;
    let x = array![d, 0.3];
    let step = 0.01;
    let r = igsm_targeted(&net, x.view(), 0, step, 1000, None).unwrap();
    assert!(r.success);
    // Only the first coordinate has a gradient, so every step moves it by
    // exactly `step` and the walk stops one step past the boundary.
    let l2 = r.distortion * 2f64.sqrt();
    assert!(l2 >= d && l2 <= d + step + 1e-12, "{l2}");
    assert_eq!(r.x_adv[1], 0.3);
    assert_eq!(r.iterations_used, (d / step).floor() as usize + 1);
}

#[test]
fn pgd_zero_epsilon_is_identity() {
    let net = random_net(5);
    let x = random_input(6, 6);
    for norm in [Norm::Linf, Norm::L2] {
        let r = pgd(&net, x.view(), 1, 0.0, 0.05, 10, norm, PIXEL_BOX, 9).unwrap();
        assert_eq!(r.x_adv, x);
    }
}

#[test]
fn mifgsm_without_momentum_matches_bim() {
    let net = random_net(7);
    let x = random_input(8, 6);
    let y = net.predict(x.view()).unwrap();
    let bim = run_attack(
        &net,
        x.view(),
        y,
        &AttackConfig {
            method: AttackMethod::Bim,
            epsilon: 0.3,
            step_size: 0.02,
            iterations: 40,
            early_stop: false,
            ..AttackConfig::default()
        },
    )
    .unwrap();
    let mi = mifgsm(&net, x.view(), y, 0.3, 0.02, 40, 0.0, PIXEL_BOX).unwrap();
    assert_eq!(bim.x_adv, mi.x_adv);
}

#[test]
fn mifgsm_constant_field_steps_in_fixed_direction() {
    let lin = LinearOracle::new(Array1::from(vec![1.0, -2.0, 0.5]), 0.0).unwrap();
    let net = lin.classifier();
    let x = array![5.0, -5.0, 1.0];
    let cfg = AttackConfig {
        method: AttackMethod::Mifgsm,
        epsilon: 100.0,
        step_size: 0.01,
        iterations: 7,
        momentum_decay: 1.0,
        clip: None,
        early_stop: false,
        ..AttackConfig::default()
    };
    let r = run_attack(&net, x.view(), 1, &cfg).unwrap();
    let expected = &x - &(lin.normal.mapv(f64::signum) * 0.07);
    for (a, b) in r.x_adv.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn penalty_target_already_predicted() {
    let net = random_net(11);
    let x = random_input(12, 6);
    let p = net.predict(x.view()).unwrap();
    let r = penalty_attack(&net, x.view(), p, &default_c_grid(), 50, 0.1, PIXEL_BOX).unwrap();
    assert!(r.success);
    assert_eq!(r.x_adv, x);
}

#[test]
fn penalty_on_linear_model_moves_along_normal() {
    // Each penalty weight settles at a fixed depth past the boundary; a
    // finer grid of weights brings the best crossing closer to distance d.
    let lin = LinearOracle::new(Array1::from(vec![2.0, 1.0, -2.0]), 0.1).unwrap();
    let net = lin.classifier();
    let x = array![0.5, 0.2, 0.1];
    let d = lin.signed_distance(x.as_slice().unwrap());
    let mut previous = f64::INFINITY;
    for n in [11, 41, 161] {
        let grid: Vec<f64> = (0..n)
            .map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / (n - 1) as f64))
            .collect();
        let r = penalty_attack(&net, x.view(), 0, &grid, 3000, 0.002, None).unwrap();
        assert!(r.success);
        let delta = &r.x_adv - &x;
        let norm = delta.dot(&delta).sqrt();
        let cos = delta.dot(&lin.normal).abs() / norm;
        assert!(cos > 1.0 - 1e-9, "{cos}");
        let l2 = r.distortion * 3f64.sqrt();
        assert!(l2 >= d);
        assert!(l2 - d <= previous);
        previous = l2 - d;
    }
    // Settling depth t(c) solves 2ct = σ(d − t), so near the crossing weight
    // c* = 1/(4d), |dt/dc| = 2d / (1/(2d) + 1/4). Adjacent grid weights
    // differ by a factor 10^(5/160), which bounds the overshoot.
    let slope = 2.0 * d / (1.0 / (2.0 * d) + 0.25);
    let bound = slope * (10f64.powf(5.0 / 160.0) - 1.0) / (4.0 * d);
    assert!(previous <= bound, "{previous} vs bound {bound}");
    assert!(previous < 0.07 * d);
}

#[test]
fn targeted_batch_rejects_true_label_target() {
    let net = random_net(13);
    let xs = Array2::from_shape_fn((2, 6), |(i, j)| 0.1 * (i + j) as f64);
    let cfg = AttackConfig::default();
    assert!(attack_batch(&net, xs.view(), &[0, 1], Some(&[1, 1]), &cfg).is_err());
    assert!(attack_batch(&net, xs.view(), &[0, 1], Some(&[2, 0]), &cfg).is_ok());
    let bad = AttackConfig {
        iterations: 0,
        ..AttackConfig::default()
    };
    assert!(attack_batch(&net, xs.view(), &[0, 1], None, &bad).is_err());
}

fn all_methods() -> Vec<AttackConfig> {
    [
        AttackMethod::Fgsm,
        AttackMethod::Rfgsm,
        AttackMethod::Bim,
        AttackMethod::Mifgsm,
        AttackMethod::Pgd,
        AttackMethod::Penalty,
    ]
    .into_iter()
    .map(|method| AttackConfig {
        method,
        epsilon: 0.2,
        step_size: 0.03,
        iterations: 20,
        seed: 77,
        ..AttackConfig::default()
    })
    .collect()
}

#[test]
fn attacks_are_reproducible_and_flags_consistent() {
    let net = random_net(17);
    let xs = Array2::from_shape_fn((8, 6), |(i, j)| ((i * 7 + j * 3) % 10) as f64 / 10.0);
    let labels: Vec<usize> = net.predict_batch(xs.view());
    for cfg in all_methods() {
        let a = attack_batch(&net, xs.view(), &labels, None, &cfg).unwrap();
        let b = attack_batch(&net, xs.view(), &labels, None, &cfg).unwrap();
        assert_eq!(a, b, "{:?}", cfg.method);
        for (i, r) in a.iter().enumerate() {
            let p = net.predict(r.x_adv.view()).unwrap();
            assert_eq!(p, r.predicted);
            assert_eq!(r.success, p != labels[i]);
            assert!(r.x_adv.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let again = distortion(xs.row(i), r.x_adv.view());
            assert_eq!(again, r.distortion);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projected_attacks_stay_in_budget(
        seed in any::<u64>(),
        eps in 0.0f64..0.5,
        step in 0.001f64..0.2,
        l2 in any::<bool>(),
        method in 0usize..3,
    ) {
        let net = random_net(seed % 1000);
        let x = random_input(seed, 6);
        let y = net.predict(x.view()).unwrap();
        let norm = if l2 { Norm::L2 } else { Norm::Linf };
        let cfg = AttackConfig {
            method: [AttackMethod::Pgd, AttackMethod::Bim, AttackMethod::Mifgsm][method],
            epsilon: eps,
            step_size: step,
            iterations: 15,
            norm,
            seed,
            early_stop: false,
            ..AttackConfig::default()
        };
        let r = run_attack(&net, x.view(), y, &cfg).unwrap();
        let delta = &r.x_adv - &x;
        let size = match (cfg.method, norm) {
            (AttackMethod::Pgd, Norm::L2) => delta.dot(&delta).sqrt(),
            _ => delta.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        };
        prop_assert!(size <= eps + 1e-12);
        prop_assert!(r.x_adv.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
