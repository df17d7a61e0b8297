use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphere_epc::eigenfield::sample_coefficients;
use sphere_epc::excursion_geometry::*;
use sphere_epc::specfun::gaussian_minkowski_rho;

#[test]
fn morse_sum_is_two() {
    for seed in 0..20 {
        let c = sample_coefficients(10, seed).unwrap();
        let set = find_critical_points(&c, 40, NewtonParams::default()).unwrap();
        assert_eq!(set.diagnostics.morse_sum, 2, "seed {seed}: {:?}", set.diagnostics);
        assert!(set.is_morse());
        for p in &set.points {
            let [a, b] = p.hessian_eigs;
            match p.morse_index {
                0 => assert!(a < 0.0 && b < 0.0),
                1 => assert!(a < 0.0 && b > 0.0),
                _ => assert!(a > 0.0 && b > 0.0),
            }
            assert!(p.newton_residual <= 1e-9 * (110f64 / 2.0).sqrt());
        }
        let lo = set.points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
        let hi = set.points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(morse_epc(&set.points, lo - 1.0).unwrap(), 2);
        assert_eq!(morse_epc(&set.points, hi + 1.0).unwrap(), 0);
    }
}

#[test]
fn doubling_density_keeps_critical_set() {
    for seed in [3u64, 8] {
        let c = sample_coefficients(8, seed).unwrap();
        let a = find_critical_points(&c, 32, NewtonParams::default()).unwrap();
        let b = find_critical_points(&c, 64, NewtonParams::default()).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for p in &a.points {
            let d = b
                .points
                .iter()
                .map(|q| q.location.geodesic_distance(p.location))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-6, "{d}");
        }
    }
}

#[test]
fn density_precondition() {
    let c = sample_coefficients(10, 1).unwrap();
    assert!(find_critical_points(&c, 39, NewtonParams::default()).is_err());
}

#[test]
fn resolution_stable_discrete_epc() {
    let c = sample_coefficients(8, 12345).unwrap();
    let a = discrete_epc(&build_mesh(128, 256).unwrap(), &c, 0.5).unwrap();
    let b = discrete_epc(&build_mesh(256, 512).unwrap(), &c, 0.5).unwrap();
    assert_eq!(a, b);
    let set = find_critical_points(&c, 32, NewtonParams::default()).unwrap();
    assert_eq!(morse_epc(&set.points, 0.5).unwrap(), b);
}

#[test]
fn discrete_epc_is_a_step_function_of_vertex_values() {
    let mesh = build_mesh(32, 64).unwrap();
    let c = sample_coefficients(5, 2).unwrap();
    let vals = mesh_values(&mesh, &c).unwrap();
    let minima = SimplexMinima::new(&mesh, &vals).unwrap();
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] - w[0] < 1e-9 {
            continue;
        }
        // constant strictly between consecutive vertex values
        let a = minima.epc(w[0] + 1e-3 * (w[1] - w[0]));
        let b = minima.epc(w[1] - 1e-3 * (w[1] - w[0]));
        assert_eq!(a, b);
    }
}

#[test]
fn estimators_agree_at_generic_thresholds() {
    let mesh = build_mesh(256, 512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agreed = 0;
    for seed in 0..20u64 {
        let ell = 4 + (seed as usize % 9);
        let c = sample_coefficients(ell, 500 + seed).unwrap();
        let set = find_critical_points(&c, 4 * ell, NewtonParams::default()).unwrap();
        assert!(set.is_morse());
        let minima = SimplexMinima::new(&mesh, &mesh_values(&mesh, &c).unwrap()).unwrap();
        let margin = generic_margin(&mesh, ell);
        for _ in 0..3 {
            let u = loop {
                let u: f64 = rng.gen_range(-2.5..2.5);
                if set.points.iter().all(|p| (p.value - u).abs() > margin) {
                    break u;
                }
            };
            assert_eq!(morse_epc(&set.points, u).unwrap(), minima.epc(u), "l={ell} seed={seed} u={u}");
            agreed += 1;
        }
    }
    assert!(agreed >= 50);
}

#[test]
fn mean_matches_expected_epc() {
    let mesh = build_mesh(96, 192).unwrap();
    let ell = 8;
    let synth = MeshSynthesizer::new(&mesh, ell);
    for u in [-1.0, 0.5, 1.5] {
        let xs: Vec<f64> = (0..400)
            .map(|s| {
                let v = synth.values(&sample_coefficients(ell, s).unwrap()).unwrap();
                SimplexMinima::new(&mesh, &v).unwrap().epc(u) as f64
            })
            .collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m - expected_epc(ell, u)).abs() <= 3.0 * (var / n).sqrt(), "u={u} m={m}");
    }
}

#[test]
fn variance_forms_agree_to_leading_order() {
    let a = epc_variance_leading(50, 2.0);
    let b = epc_variance_leading_hermite(50, 2.0);
    // They differ by O(ℓ²) out of O(ℓ³).
    assert!(((a - b) / a).abs() < 3.0 / 50.0);
}

proptest! {
    #[test]
    fn gkf_assembly(ell in 1usize..200, u in -6.0f64..6.0) {
        let s: f64 = (0..=2).map(|k| lipschitz_killing(k, ell).unwrap() * gaussian_minkowski_rho(k, u).unwrap()).sum();
        let e = expected_epc(ell, u);
        prop_assert!((s - e).abs() <= 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn mesh_is_a_sphere(nt in 16usize..40, half in 16usize..40) {
        let m = build_mesh(nt, 2 * half).unwrap();
        prop_assert_eq!(m.euler_characteristic(), 2);
        prop_assert_eq!(m.triangles.len(), 2 * 2 * half + 2 * (nt - 2) * 2 * half);
    }

    #[test]
    fn triangles_have_positive_area(nt in 16usize..24) {
        let m = build_mesh(nt, 32).unwrap();
        let xyz: Vec<[f64; 3]> = m.vertices.iter().map(|p| p.to_cartesian()).collect();
        for t in &m.triangles {
            let a = spherical_triangle_area(xyz[t[0] as usize], xyz[t[1] as usize], xyz[t[2] as usize]);
            prop_assert!(a > 0.0 && a < PI);
        }
    }
}
