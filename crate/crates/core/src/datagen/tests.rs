use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};

use super::*;

fn bump_spec(schedule: GammaSchedule, noise_var: f64, missing_frac: f64) -> ManifoldSpec {
    ManifoldSpec {
        manifold: Manifold::Bump { schedule },
        dim: 100,
        noise_var,
        missing_frac,
        seed: 7,
    }
}

#[test]
fn bump_peak_and_flat_limit() {
    let dim = 100;
    let n = 30;
    let z = -2.0 + 4.0 * n as f64 / dim as f64;
    let v = bump_point(z, 0.6, dim);
    assert_abs_diff_eq!(v[n - 1], 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(v[n - 1], 0.398_942_280_401_432_7, epsilon = 1e-12);
    let flat = bump_point(0.3, 100.0, dim);
    let spread = flat.iter().cloned().fold(f64::MIN, f64::max)
        - flat.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-3);
}

#[test]
fn bump_mirror_symmetry() {
    // Grid points z_n and z_{D−n} are mirror images about the origin.
    let dim = 100;
    let theta = 0.7;
    let v = bump_point(theta, 0.5, dim);
    let w = bump_point(-theta, 0.5, dim);
    for n in 1..dim {
        assert_abs_diff_eq!(v[n - 1], w[dim - n - 1], epsilon = 1e-15);
    }
}

#[test]
fn chirp_values() {
    let v = chirp_point(0.0, 0.25, 0.0, 50);
    assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    for f0 in [1.0, 37.5, 100.0] {
        let v = chirp_point(f0, 0.6, 55.0, 100);
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
    }
}

#[test]
fn schedules() {
    let slow = GammaSchedule::Slow { gamma0: 2e-4, s: 1000 };
    assert_eq!(slow.gamma(0), 0.6);
    assert_abs_diff_eq!(slow.gamma(1000), 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(slow.gamma(1500), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(slow.gamma(2000), 0.6, epsilon = 1e-12);
    assert_abs_diff_eq!(slow.gamma(2500), slow.gamma(500), epsilon = 1e-12);

    let jump = GammaSchedule::Jump { gamma0: 2e-4, delta: 0.05, t_change: 200 };
    assert_abs_diff_eq!(jump.gamma(199), 0.6 - 199.0 * 2e-4, epsilon = 1e-15);
    assert_abs_diff_eq!(jump.gamma(200), 0.6 - 199.0 * 2e-4 - 0.05 - 200.0 * 2e-4, epsilon = 1e-15);
    assert_eq!(jump.change_time(), Some(200));
    let calm = jump.without_change();
    assert_abs_diff_eq!(calm.gamma(300), 0.6 - 300.0 * 2e-4, epsilon = 1e-15);
    assert_eq!(calm.change_time(), Some(u64::MAX));

    let k = ChirpRate::default();
    assert_abs_diff_eq!(k.k(1), 0.1, epsilon = 1e-15);
    assert_abs_diff_eq!(k.k(1000), 100.0, epsilon = 1e-12);
    assert_abs_diff_eq!(k.k(1500), 200.0 - 0.1 * 1500.0, epsilon = 1e-12);
    assert_abs_diff_eq!(k.k(2000), 0.0, epsilon = 1e-12);
}

#[test]
fn spec_validation() {
    let ok = bump_spec(GammaSchedule::Static { gamma: 0.6 }, 4e-4, 0.4);
    assert!(ok.validate(10).is_ok());
    assert!(ManifoldSpec { dim: 1, ..ok }.validate(10).is_err());
    assert!(ManifoldSpec { missing_frac: 1.0, ..ok }.validate(10).is_err());
    assert!(ManifoldSpec { noise_var: -1.0, ..ok }.validate(10).is_err());
    let shrinking = bump_spec(GammaSchedule::Slow { gamma0: 1e-2, s: 1000 }, 0.0, 0.0);
    assert!(shrinking.validate(50).is_ok());
    assert!(shrinking.validate(100).is_err());
}

#[test]
fn complete_noise_free_stream_lies_on_manifold() {
    let spec = bump_spec(GammaSchedule::Static { gamma: 0.6 }, 0.0, 0.0);
    for s in sample_stream(spec, 50).unwrap() {
        assert_eq!(s.obs.len(), 100);
        let exact = bump_point(s.truth.theta[0], 0.6, 100);
        assert_eq!(s.obs.values(), exact.as_slice());
    }
}

#[test]
fn streams_are_deterministic() {
    let spec = bump_spec(GammaSchedule::Slow { gamma0: 2e-4, s: 1000 }, 4e-4, 0.4);
    let a: Vec<_> = sample_stream(spec, 200).unwrap().map(|s| s.obs).collect();
    let b: Vec<_> = sample_stream(spec, 200).unwrap().map(|s| s.obs).collect();
    assert_eq!(a, b);
    let c: Vec<_> = sample_stream(ManifoldSpec { seed: 8, ..spec }, 200)
        .unwrap()
        .map(|s| s.obs)
        .collect();
    assert_ne!(a, c);
    assert_eq!(spec.training_batch(20).unwrap(), spec.training_batch(20).unwrap());
}

#[test]
fn noise_variance_and_mask_frequency() {
    let noise_var = 4e-4;
    let rho = 0.4;
    let spec = bump_spec(GammaSchedule::Static { gamma: 0.6 }, noise_var, rho);
    let steps = 100_000;
    let mut observed = vec![0u64; 100];
    let mut sum_sq = 0.0;
    let mut count = 0u64;
    for s in sample_stream(spec, steps).unwrap() {
        assert_eq!(s.obs.len(), 60);
        for (&i, &x) in s.obs.omega().iter().zip(s.obs.values()) {
            observed[i] += 1;
            sum_sq += (x - s.truth.v[i]).powi(2);
            count += 1;
        }
    }
    let var = sum_sq / count as f64;
    assert!((var / noise_var - 1.0).abs() < 0.05, "variance {var}");
    for &o in &observed {
        let missing = 1.0 - o as f64 / steps as f64;
        assert!((missing - rho).abs() < 0.01, "missing frequency {missing}");
    }
}

#[test]
fn coherence_of_sparse_column() {
    let mut u = DMatrix::zeros(100, 1);
    u[(17, 0)] = 1.0;
    assert_abs_diff_eq!(coherence(&u), 100.0, epsilon = 1e-12);
}

#[test]
fn in_plane_point_leaves_only_noise_term() {
    let dim = 40;
    let mut u = DMatrix::zeros(dim, 2);
    u[(0, 0)] = 1.0;
    u[(1, 1)] = 1.0;
    let c = DVector::from_element(dim, 0.5);
    let v = &c + u.column(0) * 2.0 - u.column(1) * 0.5;
    let omega: Vec<usize> = (0..30).collect();
    let sigma2 = 1e-3;
    let ell = 0.5;
    let b = coefficient_error_bound(&v, &c, &u, &omega, sigma2, 0.05, ell);
    assert_eq!(b.q_norm2, 0.0);
    assert_eq!(b.residual_term, 0.0);
    let expected = sigma2 * (64.0 / 9.0) * (dim * dim) as f64 / ((1.0 - ell).powi(2) * 900.0);
    assert_abs_diff_eq!(b.bound, expected, epsilon = 1e-15);
}
