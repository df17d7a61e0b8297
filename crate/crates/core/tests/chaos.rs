use std::f64::consts::PI;

use proptest::prelude::*;
use sphere_epc::chaos_expansion::*;
use sphere_epc::eigenfield::{sample_coefficients, HarmonicCoefficients};
use sphere_epc::excursion_geometry::{epc_variance_leading, expected_epc};
use sphere_epc::specfun::{std_normal_pdf, std_normal_sf};

const US: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
const ELLS: [usize; 4] = [2, 5, 10, 50];

#[test]
fn coefficient_table_matches_oracle() {
    let table = coefficient_table(&US, &ELLS).unwrap();
    assert!(table.all_pass(), "worst {:?}", table.worst());
    assert_eq!(table.k3, Variant::Statement);
    assert_eq!(table.psi3355, Variant::Both);
    assert_eq!(table.rows.len(), US.len() * ELLS.len() * 28);
    assert!(table.rows.iter().all(|r| r.oracle.is_finite()));
}

#[test]
fn oracle_reproduces_gaussian_lemmas() {
    let rule = oracle_rule();
    for ell in [2, 7, 40] {
        let ab = AlphaBeta::new(ell).unwrap();
        let (a2, b2) = (ab.alpha.powi(2), ab.beta.powi(2));
        for u in US {
            let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
            let z2 = oracle_indicator_moment(2, 0, 0, u, ab, &rule).unwrap();
            assert!((z2 - pm).abs() < 1e-13);
            let y2 = oracle_indicator_moment(0, 0, 2, u, ab, &rule).unwrap();
            assert!((y2 - pm - a2 * upu).abs() < 1e-13);
            let y4 = oracle_indicator_moment(0, 0, 4, u, ab, &rule).unwrap();
            let five = 3.0 * pm
                + 3.0 * a2 * upu
                + 3.0 * a2 * a2 * b2 * upu
                + 3.0 * b2 * b2 * a2 * upu
                + a2 * a2 * u * u * upu;
            assert!((y4 - five).abs() < 1e-10, "{y4} {five}");
        }
    }
    let ab = AlphaBeta::new(5).unwrap();
    assert!(oracle_indicator_moment(4, 2, 1, 0.0, ab, &rule).is_err());
    // no indicator mass lost to the truncated window
    assert!((oracle_indicator_moment(0, 0, 0, -8.0, ab, &rule).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn theta_examples() {
    let rule = oracle_rule();
    assert_eq!(theta(ThetaPair::T44, 0.7, 9).unwrap(), std_normal_sf(0.7));
    assert_eq!(theta(ThetaPair::T35, 0.0, 9).unwrap(), 0.0);
    let t = theta(ThetaPair::T33, 1.0, 5).unwrap();
    assert!((t - oracle_theta(ThetaPair::T33, 1.0, 5, &rule).unwrap()).abs() < 1e-8);
    let p = psi(PsiPattern::P3355, 0.8, 4).unwrap();
    assert!((p - oracle_psi(PsiPattern::P3355, 0.8, 4, &rule).unwrap()).abs() < 1e-8);
    assert!((p - psi3355_proof_form(0.8, 4).unwrap()).abs() < 1e-13);
}

#[test]
fn rejected_k3_form_is_off() {
    let rule = oracle_rule();
    let o = hk_oracle(1.0, 10, &rule).unwrap();
    assert!((k3_proof_form(1.0, 10).unwrap() - o.k[2]).abs() > 1e-3);
}

#[test]
fn assembly_from_closed_forms_matches_proposition() {
    for ell in [2, 3, 17, 120] {
        for u in US {
            let a = hk_assembled(u, ell, |t| theta(t, u, ell), |p| psi(p, u, ell)).unwrap();
            let b = hk_coefficients(u, ell).unwrap();
            let scale = b.h35.abs().max(1.0);
            assert!((a.h35 - b.h35).abs() < 1e-12 * scale);
            for i in 0..5 {
                assert!((a.k[i] - b.k[i]).abs() < 1e-12 * b.k[i].abs().max(1.0), "k{} l={ell} u={u}", i + 1);
            }
        }
    }
}

#[test]
fn odd_patterns_vanish() {
    let rule = oracle_rule();
    for p in PsiPattern::ALL.into_iter().filter(|p| p.vanishes()) {
        assert_eq!(psi(p, 2.0, 7).unwrap(), 0.0);
        assert_eq!(oracle_psi(p, 2.0, 7, &rule).unwrap(), 0.0);
    }
}

#[test]
fn zonal_sphere_integral() {
    for ell in [3, 6] {
        let c = HarmonicCoefficients::zonal(ell, 1.0).unwrap();
        let v = oracle_sphere_integral(&c, SphereIntegrand::F2, (4 * ell, 8 * ell)).unwrap();
        assert!((v - 4.0 * PI / (2 * ell + 1) as f64).abs() < 1e-13);
    }
    let c = HarmonicCoefficients::zonal(6, 1.0).unwrap();
    assert!(oracle_sphere_integral(&c, SphereIntegrand::F2, (23, 48)).is_err());
}

#[test]
fn sphere_integral_is_resolution_stable() {
    let c = sample_coefficients(6, 9).unwrap();
    for k in [SphereIntegrand::E22Sq, SphereIntegrand::YY(3, 5), SphereIntegrand::H2Y(2)] {
        let a = oracle_sphere_integral(&c, k, (32, 64)).unwrap();
        let b = oracle_sphere_integral(&c, k, (64, 128)).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{k:?} {a} {b}");
    }
}

#[test]
fn functionals_match_sphere_quadrature() {
    let ell = 6;
    let forms = QuadraticForms::new(ell).unwrap();
    let res = (256, 512);
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / scale;
    for seed in 0..10 {
        let c = sample_coefficients(ell, 100 + seed).unwrap();
        let q = forms.evaluate(&c).unwrap();
        for k in IntegralKind::ALL {
            let o = oracle_sphere_integral(&c, SphereIntegrand::of(k), res).unwrap();
            assert!(rel(q.get(k), o, o.abs()) < 1e-6, "{k:?} {} {o}", q.get(k));
        }
        // A35 and B_i fluctuate around 0, so compare on the scale of ∫Y²
        let o = oracle_sphere_integral(&c, SphereIntegrand::YY(3, 5), res).unwrap();
        assert!(rel(q.a35, o, 4.0 * PI) < 1e-6);
        for i in 1..=5 {
            let o = oracle_sphere_integral(&c, SphereIntegrand::H2Y(i), res).unwrap();
            assert!(rel(q.b[i - 1], o, 4.0 * PI) < 1e-6, "B{i}");
        }
        assert_eq!(q.i22, forms.form(IntegralKind::I22).evaluate(&c));
        assert!(q.i00 >= 0.0 && q.i11 >= 0.0 && q.i22 >= 0.0 && q.i1212 >= 0.0 && q.i2222 >= 0.0);
    }
}

#[test]
fn normalization_constants() {
    for ell in [2, 6, 25] {
        let forms = QuadraticForms::new(ell).unwrap();
        let i00 = forms.form(IntegralKind::I00);
        // E∫f² = 4π, and ∫H₂(f) = ∫f² − 4π = 4π/(2ℓ+1) Σ(|a|²−1)
        assert!((i00.mean() - 4.0 * PI).abs() < 1e-12);
        let h2 = LinearForm::centered_power(ell).scaled(4.0 * PI / (2 * ell + 1) as f64);
        let diff = i00.shifted(-4.0 * PI).plus(&h2, -1.0);
        assert!(diff.coef.iter().all(|w| w.abs() < 1e-12) && diff.constant.abs() < 1e-11);
        for b in &forms.b {
            assert!(b.mean().abs() < 1e-10);
        }
        assert!(forms.a35.mean().abs() < 1e-10);
    }
}

#[test]
fn mean_of_whitened_h2_vanishes() {
    let ell = 5;
    let xs: Vec<f64> = (0..40)
        .map(|s| {
            let c = sample_coefficients(ell, 700 + s).unwrap();
            oracle_sphere_integral(&c, SphereIntegrand::H2Y(4), (20, 40)).unwrap()
        })
        .collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(m.abs() <= 3.0 * (v / n).sqrt());
}

#[test]
fn odd_moments_of_power_vanish() {
    for seed in 0..20 {
        let c = sample_coefficients(15, seed).unwrap();
        let (mut s1, mut s3) = (0.0, 0.0);
        for m in 1i64..=15 {
            let abs2 = |k: i64| {
                let (re, im) = c.a(k);
                re * re + im * im
            };
            let d = abs2(m) - abs2(-m);
            s1 += m as f64 * d;
            s3 += (m as f64).powi(3) * d;
        }
        assert_eq!(s1, 0.0);
        assert_eq!(s3, 0.0);
    }
}

#[test]
fn proj2_examples() {
    let c = sample_coefficients(12, 3).unwrap();
    assert_eq!(second_chaos_projection(&c, 0.0).unwrap(), 0.0);
    assert_eq!(second_chaos_projection(&c, 1.0).unwrap(), 0.0);
    assert_eq!(proj2_variance(12, 1.0).unwrap(), 0.0);
    let ell = 10;
    let lam = 110.0;
    let g = 2.0 * 3.0 * std_normal_pdf(2.0);
    let want = lam * lam / 4.0 * g * g / (21.0 * 21.0) * 42.0;
    assert!((proj2_variance(ell, 2.0).unwrap() - want).abs() < 1e-12 * want);
}

#[test]
fn proj2_monte_carlo_variance() {
    let (ell, u, n) = (20, 2.0, 5000);
    let xs: Vec<f64> = (0..n)
        .map(|s| second_chaos_projection(&sample_coefficients(ell, s).unwrap(), u).unwrap())
        .collect();
    let nf = n as f64;
    let m = xs.iter().sum::<f64>() / nf;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
    let se = ((m4 - v * v * (nf - 3.0) / (nf - 1.0)) / nf).sqrt();
    let want = proj2_variance(ell, u).unwrap();
    assert!((v - want).abs() <= 3.0 * se, "{v} {want} {se}");
}

#[test]
fn proj2_variance_is_asymptotically_leading() {
    let gaps: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&l| (proj2_variance(l, 2.0).unwrap() / epc_variance_leading(l, 2.0) - 1.0).abs())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 0.05);
}

#[test]
fn chaos_cancellation() {
    let u = 2.0;
    let mut ratios = Vec::new();
    for ell in [10, 20, 40] {
        let forms = QuadraticForms::new(ell).unwrap();
        let assembled = forms.proj2_form(&hk_coefficients(u, ell).unwrap());
        let lead = LinearForm::centered_power(ell).scaled(proj2_factor(ell, u));
        let residual = assembled.plus(&lead, -1.0);
        let r = (residual.variance() / lead.variance()).sqrt();
        assert!(r <= 1.0 / (ell as f64).sqrt(), "l={ell} r={r}");
        ratios.push(r);
        if ell == 40 {
            let phi = forms.phi_part_form().scaled(std_normal_sf(u));
            assert!(phi.variance().sqrt() < 0.1 * lead.variance().sqrt());
        }
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn chaos_cancellation_per_sample() {
    let (ell, u) = (20, 2.0);
    let forms = QuadraticForms::new(ell).unwrap();
    let hk = hk_coefficients(u, ell).unwrap();
    let n = 400;
    let (mut r2, mut p2) = (0.0, 0.0);
    for s in 0..n {
        let c = sample_coefficients(ell, s).unwrap();
        let q = forms.evaluate(&c).unwrap();
        let lead = second_chaos_projection(&c, u).unwrap();
        r2 += (q.proj2_assembled(&hk) - lead).powi(2);
        p2 += lead * lead;
    }
    assert!((r2 / p2).sqrt() < 0.05);
}

#[test]
fn reference_forms_track_exact_forms() {
    let mut prev = f64::INFINITY;
    for ell in [10, 20, 40, 80] {
        let forms = QuadraticForms::new(ell).unwrap();
        let refs = reference_forms(ell).unwrap();
        let exact = [&forms.a35, &forms.b[0], &forms.b[1], &forms.b[2], &forms.b[3], &forms.b[4]];
        let worst = refs
            .iter()
            .zip(exact)
            .map(|(r, e)| r.plus(e, -1.0).variance().sqrt())
            .fold(0.0, f64::max);
        // remainder sd is O(1/ℓ)
        assert!(worst * ell as f64 <= 10.0, "l={ell} {worst}");
        assert!(worst < prev);
        prev = worst;
    }
}

#[test]
fn lk_projection_examples() {
    let c = sample_coefficients(14, 4).unwrap();
    for u in US {
        let mean = lk_projection(0, 0, u, 14, None).unwrap();
        assert!((mean - expected_epc(14, u)).abs() < 1e-12 * mean.abs().max(1.0));
        let p0 = lk_projection(0, 2, u, 14, Some(&c)).unwrap();
        let s = second_chaos_projection(&c, u).unwrap();
        assert!((p0 - s).abs() < 1e-12 * s.abs().max(1e-12));
    }
    assert_eq!(lk_projection(2, 2, 0.0, 14, Some(&c)).unwrap(), 0.0);
    assert!(lk_projection(1, 2, 0.3, 14, None).is_err());
    assert!(lk_projection(3, 0, 0.3, 14, None).is_err());
    assert!((lk_projection(2, 0, 0.0, 14, None).unwrap() - 2.0 * PI).abs() < 1e-14);
}

proptest! {
    #[test]
    fn coefficients_are_finite(u in -6.0f64..6.0, ell in 2usize..500) {
        let c = hk_coefficients(u, ell).unwrap();
        prop_assert!(c.h35.is_finite() && c.k.iter().all(|k| k.is_finite()));
        prop_assert_eq!(c.k[0], c.k[1]);
        for p in PsiPattern::ALL {
            prop_assert!(psi(p, u, ell).unwrap().is_finite());
        }
    }

    #[test]
    fn alpha_beta_partition(ell in 2usize..10_000) {
        let ab = AlphaBeta::new(ell).unwrap();
        prop_assert!((ab.alpha * ab.alpha + ab.beta * ab.beta - 1.0).abs() < 1e-14);
    }
}
