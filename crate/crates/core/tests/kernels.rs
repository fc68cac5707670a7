use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochastic_vortices::ensemble::VortexEnsemble;
use stochastic_vortices::kernels::{lattice_green, KernelConfig, TorusKernel};
use stochastic_vortices::torus::{TorusPoint, Vec2};
use stochastic_vortices::verify::{green_gradient_fd, kernel_sweep};

fn kernel(k_max: usize) -> TorusKernel {
    TorusKernel::new(KernelConfig::new(k_max, 1e-3, 6).unwrap()).unwrap()
}

fn random_pairs(n: usize, min_d: f64, seed: u64) -> Vec<(TorusPoint, TorusPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let (x, y) = (TorusPoint::random(&mut rng), TorusPoint::random(&mut rng));
        if x.distance(&y) >= min_d {
            out.push((x, y));
        }
    }
    out
}

#[test]
fn torus_distance_examples() {
    let x = TorusPoint::new(0.3, 0.7);
    assert_eq!(x.distance(&x), 0.0);
    let d = TorusPoint::new(0.9, 0.0).distance(&TorusPoint::new(0.1, 0.0));
    assert!((d - 0.2).abs() < 1e-15);
    let d = TorusPoint::origin().distance(&TorusPoint::new(0.5, 0.5));
    assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn green_is_symmetric() {
    let k = kernel(64);
    for (x, y) in random_pairs(100, 1e-3, 1) {
        assert_eq!(k.green_function(x, y).unwrap(), k.green_function(y, x).unwrap());
    }
}

#[test]
fn green_has_zero_mean_on_grid() {
    let k = kernel(64);
    let x = TorusPoint::new(0.123, 0.456);
    let mut s = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            s += k.green_function(x, TorusPoint::new(i as f64 / 64.0, j as f64 / 64.0)).unwrap();
        }
    }
    // only modes aliasing to zero on the grid (|k| = 64) survive: 4/(4π²·64²)
    assert!((s / 4096.0).abs() <= 4.0 / (4.0 * PI * PI * 4096.0) + 1e-12);
}

/// Size of the disc-truncated series error as a function of `k_max·d`.
fn truncation_envelope(kd: f64) -> f64 {
    if kd >= 1.0 {
        0.01 * kd.powf(-1.5)
    } else {
        (1.0 / kd).ln() / (2.0 * PI) + 0.01
    }
}

#[test]
fn near_field_log_behaviour() {
    let cfg = KernelConfig::default();
    let k = TorusKernel::new(cfg).unwrap();
    let y = TorusPoint::new(0.3, 0.6);
    let mut prev = f64::NAN;
    for j in 3..=10 {
        let d = 2f64.powi(-j);
        let x = y.shifted(d * Vec2::new(0.8, 0.6));
        let exact = lattice_green(x, y, &cfg).unwrap();
        let bounded = exact - d.ln() / (2.0 * PI);
        assert!(bounded.abs() < 1.0);
        if j > 3 {
            // converges to the regular part at the diagonal
            assert!((bounded - prev).abs() < 4.0 * d * d.max(1e-2));
        }
        prev = bounded;
        let spectral = k.green_function(x, y).unwrap();
        assert!(
            (spectral - exact).abs() <= truncation_envelope(cfg.k_max as f64 * d),
            "d = {d}: spectral {spectral}, lattice {exact}"
        );
    }
}

#[test]
fn kernel_antisymmetry_is_exact() {
    let k = kernel(64);
    for (x, y) in random_pairs(100, 1e-3, 2) {
        let s = k.biot_savart(x, y).unwrap() + k.biot_savart(y, x).unwrap();
        assert_eq!(s, Vec2::ZERO);
    }
}

#[test]
fn kernel_matches_finite_difference() {
    let k = kernel(64);
    for (x, y) in random_pairs(100, 0.05, 3) {
        let exact = k.biot_savart(x, y).unwrap();
        let (_, fd) = green_gradient_fd(&k, x, y, 1e-5);
        let rel = (exact - fd.perp()).norm() / exact.norm();
        assert!(rel <= 1e-6, "relative error {rel}");
    }
}

#[test]
fn kernel_bound_is_stable_near_diagonal() {
    let k = kernel(64);
    let sweep = kernel_sweep(&k, 200, 1e-5);
    let sup = sweep.iter().map(|r| r.d_k).fold(0.0, f64::max);
    assert!(sup.is_finite() && sup < 1.0);
    let near: f64 = sweep.iter().filter(|r| r.d < 1e-3).map(|r| r.d_k).fold(0.0, f64::max);
    assert!(near <= sup);
}

#[test]
fn smoothing_only_acts_inside_the_ball() {
    let k = kernel(64);
    let delta = k.config().reg_delta;
    let y = TorusPoint::new(0.4, 0.4);
    let x = y.shifted(Vec2::new(2.0 * delta, 0.0));
    assert_eq!(k.smoothed_green(x, y), k.green_function(x, y).unwrap());
    assert_eq!(k.smoothed_biot_savart(x, y), k.biot_savart(x, y).unwrap());
    assert_eq!(k.smoothed_biot_savart(y, y), Vec2::ZERO);
}

#[test]
fn smoothed_green_is_dominated_inside_the_ball() {
    let k = kernel(64);
    let delta = k.config().reg_delta;
    let y = TorusPoint::new(0.25, 0.75);
    for i in 0..50 {
        for a in 0..8 {
            let d = delta * i as f64 / 50.0;
            let phi = a as f64 * PI / 4.0;
            let dir = Vec2::new(phi.cos(), phi.sin());
            let x = y.shifted(d * dir);
            let m = k.blend_radius(d);
            let at_effective = k.green_function(y.shifted(m * dir), y).unwrap();
            assert!(k.smoothed_green(x, y).abs() <= at_effective.abs() * (1.0 + 1e-12) + 1e-15);
        }
    }
}

#[test]
fn velocity_field_examples() {
    let k = kernel(32);
    let x = TorusPoint::new(0.5, 0.5);
    let mut lone = VortexEnsemble::new();
    lone.push(1.0, x).unwrap();
    assert_eq!(k.velocity_field(&lone, x), Vec2::ZERO);

    let r = Vec2::new(0.1, 0.05);
    let mut pair = VortexEnsemble::new();
    pair.push(1.0, x.shifted(r)).unwrap();
    pair.push(1.0, x.shifted(-1.0 * r)).unwrap();
    assert!(k.velocity_field(&pair, x).norm() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = VortexEnsemble::new();
    for i in 0..5 {
        w.push(if i % 2 == 0 { 0.7 } else { -1.3 }, TorusPoint::random(&mut rng)).unwrap();
    }
    let probe = TorusPoint::new(0.01, 0.99);
    let direct = w
        .atoms()
        .iter()
        .fold(Vec2::ZERO, |acc, a| acc + a.intensity * k.biot_savart(probe, a.position).unwrap());
    assert!((k.velocity_field(&w, probe) - direct).norm() < 1e-12);
}
