use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphere_epc::eigenfield::*;
use sphere_epc::eigenvalue;
use sphere_epc::specfun::legendre;

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn random_points(n: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.gen_range(-0.999..0.999);
            SpherePoint::new(z.acos(), rng.gen_range(0.0..2.0 * PI))
        })
        .collect()
}

#[test]
fn power_statistic_mean() {
    let ell = 20;
    let x: Vec<f64> = (0..1000)
        .map(|s| sample_coefficients(ell, s).unwrap().power() / 41.0)
        .collect();
    let (m, _) = mean_se(&x);
    assert!((m - 1.0).abs() <= 3.0 * (2.0f64 / (41.0 * 1000.0)).sqrt(), "{m}");
}

#[test]
fn covariance_function_is_legendre() {
    let ell = 10;
    let x = SpherePoint::new(0.7, 0.2);
    let y = SpherePoint::new(1.1, 0.9);
    let d = x.geodesic_distance(y);
    let prods: Vec<f64> = (0..2000)
        .map(|s| {
            let c = sample_coefficients(ell, s).unwrap();
            evaluate_field(&c, x).unwrap() * evaluate_field(&c, y).unwrap()
        })
        .collect();
    let (m, se) = mean_se(&prods);
    let want = legendre(ell, d.cos()).unwrap();
    assert!((m - want).abs() <= 3.0 * se, "m={m} want={want} se={se}");
    let sq: Vec<f64> = (0..2000)
        .map(|s| evaluate_field(&sample_coefficients(ell, s).unwrap(), x).unwrap().powi(2))
        .collect();
    let (m, se) = mean_se(&sq);
    assert!((m - 1.0).abs() <= 3.0 * se);
}

#[test]
fn laplacian_eigenrelation() {
    for ell in [5usize, 15] {
        let lam = eigenvalue(ell);
        for seed in 0..20 {
            let c = sample_coefficients(ell, seed).unwrap();
            for p in random_points(100, seed + 1000) {
                let j = evaluate_jet(&c, p).unwrap();
                let r = j.h11 + j.h22 + lam * j.f;
                assert!(r.abs() <= 1e-8 * lam * j.f.abs().max(1.0), "l={ell} r={r}");
            }
        }
    }
}

/// Gradient from central differences of f; Hessian from central differences
/// of the analytic gradient plus the Christoffel terms.
fn finite_difference_jet(c: &HarmonicCoefficients, p: SpherePoint, h: f64) -> JetVector {
    let f = |t: f64, ph: f64| evaluate_field_real(c, SpherePoint::new(t, ph));
    let jet = |t: f64, ph: f64| evaluate_jet(c, SpherePoint::new(t, ph)).unwrap();
    let (t, ph) = (p.theta, p.phi);
    let (s, z) = (t.sin(), t.cos());
    let ft = (f(t + h, ph) - f(t - h, ph)) / (2.0 * h);
    let fp = (f(t, ph + h) - f(t, ph - h)) / (2.0 * h);
    let (jtp, jtm, jpp, jpm) = (jet(t + h, ph), jet(t - h, ph), jet(t, ph + h), jet(t, ph - h));
    let ftt = (jtp.g1 - jtm.g1) / (2.0 * h);
    let ftp = (jpp.g1 - jpm.g1) / (2.0 * h);
    // f_φ = sin θ · g2
    let fpp = s * (jpp.g2 - jpm.g2) / (2.0 * h);
    JetVector {
        f: f(t, ph),
        g1: ft,
        g2: fp / s,
        h11: ftt,
        h12: (ftp - z / s * fp) / s,
        h22: (fpp + s * z * ft) / (s * s),
    }
}

#[test]
fn jet_matches_finite_differences() {
    for ell in [5usize, 15] {
        let cov = jet_covariance(ell).unwrap();
        let [l1, _, l3, _, _] = cov.lambda_factors;
        for seed in 0..20 {
            let c = sample_coefficients(ell, seed).unwrap();
            for p in random_points(25, seed + 77) {
                let a = evaluate_jet(&c, p).unwrap();
                let b = finite_difference_jet(&c, p, 1e-5);
                // Relative to the field's own scale: √Var of g is λ₁, of h11 is λ₃.
                for (x, y, sc) in [(a.g1, b.g1, l1), (a.g2, b.g2, l1)] {
                    assert!((x - y).abs() <= 1e-5 * x.abs().max(sc), "grad l={ell} {x} {y}");
                }
                for (x, y) in [(a.h11, b.h11), (a.h12, b.h12), (a.h22, b.h22)] {
                    assert!((x - y).abs() <= 1e-5 * x.abs().max(l3), "hess l={ell} {x} {y}");
                }
            }
        }
    }
}

fn empirical_cov(rows: &[[f64; 5]]) -> ([[f64; 5]; 5], [[f64; 5]; 5]) {
    let n = rows.len() as f64;
    let mut cov = [[0.0; 5]; 5];
    let mut se = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            let prods: Vec<f64> = rows.iter().map(|r| r[i] * r[j]).collect();
            let m = prods.iter().sum::<f64>() / n;
            let v = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n - 1.0);
            cov[i][j] = m;
            se[i][j] = (v / n).sqrt();
        }
    }
    (cov, se)
}

fn jets_at(ell: usize, p: SpherePoint, n: u64) -> Vec<JetVector> {
    (0..n).map(|s| evaluate_jet(&sample_coefficients(ell, s).unwrap(), p).unwrap()).collect()
}

#[test]
fn jet_covariance_matches_monte_carlo_on_equator() {
    let ell = 10;
    let cov = jet_covariance(ell).unwrap();
    let jets = jets_at(ell, SpherePoint::new(PI / 2.0, 0.4), 5000);
    let rows: Vec<[f64; 5]> = jets.iter().map(|j| j.derivatives()).collect();
    let (emp, se) = empirical_cov(&rows);
    for i in 0..5 {
        for j in 0..5 {
            let d = (emp[i][j] - cov.sigma[i][j]).abs();
            assert!(d <= 4.0 * se[i][j], "({i},{j}) emp={} want={}", emp[i][j], cov.sigma[i][j]);
        }
    }
    let g1: Vec<f64> = jets.iter().map(|j| j.g1 * j.g1).collect();
    let (m, s) = mean_se(&g1);
    assert!((m - eigenvalue(ell) / 2.0).abs() <= 3.0 * s);
}

#[test]
fn whitened_jet_is_standard_off_equator() {
    // Isotropy: the great-circle σ whitens the moving-frame jet at any latitude.
    let ell = 10;
    let cov = jet_covariance(ell).unwrap();
    for p in [SpherePoint::new(PI / 3.0, 1.0), SpherePoint::new(0.25, 5.0)] {
        let rows: Vec<[f64; 5]> =
            jets_at(ell, p, 5000).iter().map(|j| y_vector(j, &cov)).collect();
        let (emp, se) = empirical_cov(&rows);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((emp[i][j] - want).abs() <= 3.0 * se[i][j], "{p:?} ({i},{j}) {}", emp[i][j]);
            }
        }
    }
}

#[test]
fn isotropy_of_field_moments() {
    let ell = 10;
    for p in [SpherePoint::new(PI / 2.0, 0.0), SpherePoint::new(PI / 3.0, 1.0)] {
        let f: Vec<f64> = (0..3000)
            .map(|s| evaluate_field(&sample_coefficients(ell, s).unwrap(), p).unwrap())
            .collect();
        let (m, se) = mean_se(&f);
        assert!(m.abs() <= 3.0 * se);
        let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
        let (v, se) = mean_se(&sq);
        assert!((v - 1.0).abs() <= 3.0 * se);
    }
}

#[test]
fn cholesky_reproduces_sigma() {
    for ell in 2..=100 {
        let cov = jet_covariance(ell).unwrap();
        let ll = cov.lambda_lambda_t();
        for i in 0..5 {
            for j in 0..5 {
                let s = cov.sigma[i][j];
                assert!((ll[i][j] - s).abs() <= 1e-10 * s.abs().max(1e-300), "l={ell}");
            }
        }
        for i in 0..2 {
            for j in 2..5 {
                assert_eq!(cov.sigma[i][j], 0.0);
            }
        }
    }
}

proptest! {
    #[test]
    fn conjugation_and_power(ell in 1usize..60, seed in any::<u64>()) {
        let c = sample_coefficients(ell, seed).unwrap();
        prop_assert_eq!(c.im()[0], 0.0);
        let s: f64 = (-(ell as i64)..=ell as i64).map(|m| { let (r, i) = c.a(m); r * r + i * i }).sum();
        prop_assert!((s - c.power()).abs() <= 1e-12 * s.max(1.0));
        prop_assert!(c.power() >= 0.0);
        // odd moments of m against |a|² vanish
        let m1: f64 = (-(ell as i64)..=ell as i64).map(|m| { let (r, i) = c.a(m); m as f64 * (r * r + i * i) }).sum();
        prop_assert!(m1.abs() <= 1e-9 * s.max(1.0) * ell as f64);
    }

    #[test]
    fn complex_and_real_synthesis_agree(ell in 1usize..40, seed in any::<u64>(), t in 0.0f64..PI, ph in 0.0f64..(2.0 * PI)) {
        let c = sample_coefficients(ell, seed).unwrap();
        let p = SpherePoint::new(t, ph);
        let a = evaluate_field(&c, p).unwrap();
        prop_assert!((a - evaluate_field_real(&c, p)).abs() <= 1e-11 * a.abs().max(1.0));
    }
}
