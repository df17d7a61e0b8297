//! Integrals of products of associated Legendre functions and their
//! derivatives: the closed forms J_1..J_8, the Samaddar-type evaluations and
//! their quadrature oracles.
//!
//! All θ-integrals are computed through z = cos θ so that the singular-looking
//! 1/(1−z²) factors become powers of sin θ. With P_ℓ^m(cos θ) = sin^m θ ·
//! poly(cos θ) every in-domain integrand is analytic in θ and Gauss–Legendre
//! converges spectrally.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::specfun::{normalized_assoc_legendre_dtheta, QuadratureRule};
use crate::{eigenvalue, Error, Result};

/// Whether a closed form is defined at (ℓ, m).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityDomain {
    pub ell: usize,
    pub m: i64,
    pub valid: bool,
    pub reason: String,
}

impl IdentityDomain {
    fn ok(ell: usize, m: i64) -> Self {
        Self { ell, m, valid: true, reason: String::new() }
    }

    fn bad(ell: usize, m: i64, reason: &str) -> Self {
        Self { ell, m, valid: false, reason: reason.to_string() }
    }

    fn into_result(self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            Err(Error::IdentityDomain { ell: self.ell, m: self.m, reason: self.reason })
        }
    }
}

fn base_domain(ell: usize, m: i64) -> Option<IdentityDomain> {
    if ell == 0 {
        return Some(IdentityDomain::bad(ell, m, "l must be positive"));
    }
    if m < 0 || m as usize > ell {
        return Some(IdentityDomain::bad(ell, m, "m must lie in 0..=l"));
    }
    None
}

/// Domain of the closed form of J_k.
pub fn j_domain(k: usize, ell: usize, m: i64) -> IdentityDomain {
    if !(1..=8).contains(&k) {
        return IdentityDomain::bad(ell, m, "k must lie in 1..=8");
    }
    if let Some(d) = base_domain(ell, m) {
        return d;
    }
    match (k, m) {
        (1 | 3 | 8, 0) => IdentityDomain::ok(ell, m),
        (2 | 4..=7, 0) => IdentityDomain::bad(ell, m, "closed form divides by m"),
        (4..=8, 1) => IdentityDomain::bad(ell, m, "closed form divides by m^2 - 1"),
        _ => IdentityDomain::ok(ell, m),
    }
}

/// Closed form of J_k(ℓ, m) in exact rational arithmetic.
pub fn closed_form_j_exact(k: usize, ell: usize, m: usize) -> Result<Ratio<i128>> {
    j_domain(k, ell, m as i64).into_result()?;
    let r = |n: i128, d: i128| Ratio::new(n, d);
    let l = ell as i128;
    let mi = m as i128;
    let lam = l * (l + 1);
    let two_l1 = 2 * l + 1;
    if m == 0 {
        return Ok(match k {
            1 => r(2 * lam, two_l1),
            3 => r(-2 * l, two_l1),
            8 => r(l * l * two_l1 - l, two_l1),
            _ => unreachable!("rejected by domain"),
        });
    }
    let q = mi * mi - 1;
    Ok(match k {
        1 => r(2 * lam, two_l1) - mi,
        2 => r(1, mi),
        3 => r(1, two_l1),
        4 => r(mi * (lam + 1 - mi * mi), 2 * q),
        5 => r(lam, 2 * mi * q),
        6 => r(lam + 1 - mi * mi, 2 * mi * q),
        7 => r(lam - 1 + mi * mi, 2 * mi * q),
        8 => (r(lam * (4 + mi + 2 * l * mi - 4 * mi * mi), two_l1 * q) + mi) / 2,
        _ => unreachable!("rejected by domain"),
    })
}

fn ratio_to_f64(x: Ratio<i128>) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Closed form of J_k(ℓ, m).
pub fn closed_form_j(k: usize, ell: usize, m: i64) -> Result<f64> {
    j_domain(k, ell, m).into_result()?;
    closed_form_j_exact(k, ell, m as usize).map(ratio_to_f64)
}

fn check_rule(ell: usize, rule: &QuadratureRule) -> Result<()> {
    if rule.len() < 2 * ell + 8 {
        return Err(Error::domain(format!(
            "rule has {} nodes, need at least {} for l = {ell}",
            rule.len(),
            2 * ell + 8
        )));
    }
    Ok(())
}

fn check_lm(ell: usize, m: i64) -> Result<usize> {
    if let Some(d) = base_domain(ell, m) {
        d.into_result()?;
    }
    Ok(m as usize)
}

/// ∫_0^π g(θ, Q, dQ/dθ) dθ with Q the normalised Legendre function.
fn theta_integral(
    ell: usize,
    m: usize,
    rule: &QuadratureRule,
    g: impl Fn(f64, f64, f64, f64) -> f64,
) -> f64 {
    rule.integrate_on(0.0, PI, |theta| {
        let (q, dq) = normalized_assoc_legendre_dtheta(ell, m, theta);
        g(theta.cos(), theta.sin(), q, dq)
    })
}

/// Defining integral of J_k(ℓ, m), including the (ℓ−m)!/(ℓ+m)! weight.
///
/// Outside the closed-form domain the value is still returned; at m = 1 the
/// integrals J_4..J_8 are log-divergent at the poles and the number reflects
/// the rule, not a limit.
pub fn quadrature_j(k: usize, ell: usize, m: i64, rule: &QuadratureRule) -> Result<f64> {
    if !(1..=8).contains(&k) {
        return Err(Error::domain(format!("J index {k} outside 1..=8")));
    }
    let m = check_lm(ell, m)?;
    check_rule(ell, rule)?;
    Ok(theta_integral(ell, m, rule, |c, s, p, d| match k {
        1 => d * d * s,
        2 => p * p / s,
        3 => c * p * d,
        4 => d * d / s,
        5 => c / (s * s) * d * p,
        6 => c * c / (s * s * s) * p * p,
        7 => p * p / (s * s * s),
        _ => c * c / s * d * d,
    }))
}

/// The Appendix C evaluations, all un-normalised integrals over z in [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppendixC {
    /// ∫ (P_ℓ^m)² / (1−z²)
    Samaddar25,
    /// ∫ z P_ℓ^m (P_ℓ^m)′
    Samaddar37,
    /// ∫ (P_ℓ^m)² / (1−z²)²
    Eq111,
    /// ∫ z² (P_ℓ^m)² / (1−z²)²
    EqDiff,
    /// ∫ z P_ℓ^m (P_ℓ^m)′ / (1−z²)
    Eq555,
    /// ∫ ((P_ℓ^m)′)²
    Eq444,
    /// ∫ (1−z²) ((P_ℓ^m)′)²
    Eq333,
    /// ∫ z² ((P_ℓ^m)′)²
    EqJ8,
}

impl AppendixC {
    pub const ALL: [AppendixC; 8] = [
        AppendixC::Samaddar25,
        AppendixC::Samaddar37,
        AppendixC::Eq111,
        AppendixC::EqDiff,
        AppendixC::Eq555,
        AppendixC::Eq444,
        AppendixC::Eq333,
        AppendixC::EqJ8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AppendixC::Samaddar25 => "samaddar25",
            AppendixC::Samaddar37 => "samaddar37",
            AppendixC::Eq111 => "eq111",
            AppendixC::EqDiff => "eqdiff",
            AppendixC::Eq555 => "eq555",
            AppendixC::Eq444 => "eq444",
            AppendixC::Eq333 => "eq333",
            AppendixC::EqJ8 => "eqj8",
        }
    }
}

impl fmt::Display for AppendixC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AppendixC {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AppendixC::ALL
            .into_iter()
            .find(|w| w.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::domain(format!("unknown identity {s:?}")))
    }
}

pub fn appendix_c_domain(which: AppendixC, ell: usize, m: i64) -> IdentityDomain {
    if let Some(d) = base_domain(ell, m) {
        return d;
    }
    use AppendixC::*;
    match which {
        Samaddar37 => IdentityDomain::ok(ell, m),
        Samaddar25 | Eq333 if m == 0 => IdentityDomain::bad(ell, m, "closed form divides by m"),
        Eq111 | EqDiff | Eq555 | Eq444 | EqJ8 if m <= 1 => {
            IdentityDomain::bad(ell, m, "closed form divides by m (m^2 - 1)")
        }
        _ => IdentityDomain::ok(ell, m),
    }
}

/// a!/b! for integers a ≥ b, as a product of a − b factors. A negative b
/// yields 0 (reciprocal-Gamma convention 1/(−n)! = 0).
fn fact_quot(a: i64, b: i64) -> f64 {
    debug_assert!(a >= b);
    if b < 0 {
        return 0.0;
    }
    ((b + 1)..=a).fold(1.0, |acc, k| acc * k as f64)
}

pub fn closed_form_appendix_c(which: AppendixC, ell: usize, m: i64) -> Result<f64> {
    appendix_c_domain(which, ell, m).into_result()?;
    let l = ell as i64;
    let lf = l as f64;
    let mf = m as f64;
    // (ℓ+m)!/(ℓ−m)!
    let r0 = fact_quot(l + m, l - m);
    let t1 = || (lf + mf) * (lf + mf - 1.0) * r0 / (mf - 1.0);
    let t2 = || fact_quot(l + m, l - m - 2) / (mf + 1.0);
    let a = || {
        0.25 * ((lf + mf) * (lf - mf + 1.0) * r0 / (mf - 1.0)
            + fact_quot(l + m + 1, l - m - 1) / (mf + 1.0))
    };
    let b = || {
        let q = fact_quot(l + m, l - m - 1);
        ((lf + 1.0).powi(2) * (lf + mf) * q / mf - 2.0 * lf * (lf + 1.0) * (lf - mf + 1.0) * q / mf
            + lf * lf * (lf - mf + 1.0).powi(2) * fact_quot(l + m + 1, l - m + 1) / mf)
            / (2.0 * lf + 1.0).powi(2)
    };
    use AppendixC::*;
    Ok(match which {
        Samaddar25 => r0 / mf,
        Samaddar37 => (if m == 0 { 1.0 } else { 0.0 }) - r0 / (2.0 * lf + 1.0),
        Eq111 => (t1() + t2()) / (4.0 * mf * mf),
        EqDiff => (t1() + t2()) / (4.0 * mf * mf) - r0 / mf,
        Eq555 => {
            (fact_quot(l + m + 1, l - m - 1) / (mf + 1.0)
                - (lf + mf) * (lf - mf + 1.0) * r0 / (mf - 1.0))
                / (4.0 * mf)
        }
        Eq444 => a(),
        Eq333 => b(),
        EqJ8 => a() - b(),
    })
}

/// Quadrature of the defining integral of an Appendix C identity.
pub fn quadrature_appendix_c(
    which: AppendixC,
    ell: usize,
    m: i64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let mu = check_lm(ell, m)?;
    check_rule(ell, rule)?;
    // Q = √n P and dP/dz = −(dP/dθ)/s; dz = s dθ.
    let inv_n = fact_quot(ell as i64 + m, ell as i64 - m);
    use AppendixC::*;
    let v = theta_integral(ell, mu, rule, |c, s, p, d| {
        let pz = -d / s;
        match which {
            Samaddar25 => p * p / s,
            Samaddar37 => c * p * pz * s,
            Eq111 => p * p / (s * s * s),
            EqDiff => c * c * p * p / (s * s * s),
            Eq555 => c * p * pz / s,
            Eq444 => pz * pz * s,
            Eq333 => s * s * pz * pz * s,
            EqJ8 => c * c * pz * pz * s,
        }
    });
    Ok(v * inv_n)
}

/// The three combined identities (J_3 − m²J_2, J_4 − 2J_5 + J_6,
/// m⁴J_7 − 2m²J_5 + J_8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedIdentities {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

fn check_combined(ell: usize, m: i64) -> Result<()> {
    if let Some(d) = base_domain(ell, m) {
        return d.into_result();
    }
    if m < 2 {
        return IdentityDomain::bad(ell, m, "combined identities need m >= 2").into_result();
    }
    Ok(())
}

pub fn combined_identities(ell: usize, m: i64) -> Result<CombinedIdentities> {
    check_combined(ell, m)?;
    let lam = eigenvalue(ell);
    let mf = m as f64;
    let lf = ell as f64;
    Ok(CombinedIdentities {
        c1: 1.0 / (2.0 * lf + 1.0) - mf,
        c2: (lam - mf * mf - 1.0) / (2.0 * mf),
        c3: 0.5 * (-4.0 * lam / (2.0 * lf + 1.0) + mf + lam * mf + mf * mf * mf),
    })
}

/// Exact rationals (c1, c2, c3) from the closed forms of the right-hand sides.
pub fn combined_identities_exact(ell: usize, m: usize) -> Result<[Ratio<i128>; 3]> {
    check_combined(ell, m as i64)?;
    let l = ell as i128;
    let mi = m as i128;
    let lam = l * (l + 1);
    Ok([
        Ratio::new(1, 2 * l + 1) - mi,
        Ratio::new(lam - mi * mi - 1, 2 * mi),
        (Ratio::new(-4 * lam, 2 * l + 1) + mi + lam * mi + mi * mi * mi) / 2,
    ])
}

/// The same three combinations assembled from the individual closed forms
/// of J_2..J_8, in exact arithmetic.
pub fn combined_identities_assembled(ell: usize, m: usize) -> Result<[Ratio<i128>; 3]> {
    check_combined(ell, m as i64)?;
    let j = |k| closed_form_j_exact(k, ell, m);
    let m2 = Ratio::from_integer((m * m) as i128);
    Ok([
        j(3)? - m2 * j(2)?,
        j(4)? - j(5)? * 2 + j(6)?,
        m2 * m2 * j(7)? - m2 * j(5)? * 2 + j(8)?,
    ])
}

/// Which combined integrand to integrate numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combined {
    C1,
    C2,
    C3,
}

/// Quadrature of a combined identity from its single (pole-regular)
/// integrand. Unlike the individual J_4..J_8 this converges at m ∈ {0, 1}:
///
/// * c1 = n∫ (cos θ P P_θ − m² P²/sin θ) dθ
/// * c2 = n∫ (P_θ − cot θ P)² / sin θ dθ
/// * c3 = n∫ (m² P/sin θ − cos θ P_θ)² / sin θ dθ
pub fn quadrature_combined(which: Combined, ell: usize, m: i64, rule: &QuadratureRule) -> Result<f64> {
    let mu = check_lm(ell, m)?;
    check_rule(ell, rule)?;
    let m2 = (mu * mu) as f64;
    Ok(theta_integral(ell, mu, rule, |c, s, p, d| match which {
        Combined::C1 => c * p * d - m2 * p * p / s,
        Combined::C2 => {
            let t = d - c * p / s;
            t * t / s
        }
        Combined::C3 => {
            let t = m2 * p / s - c * d;
            t * t / s
        }
    }))
}

/// Relative tolerance for closed form vs quadrature agreement.
pub const IDENTITY_REL_TOL: f64 = 1e-9;

/// One closed-form/quadrature comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub name: String,
    pub ell: usize,
    pub m: usize,
    pub closed_form: Option<f64>,
    pub quadrature: f64,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub in_domain: bool,
}

impl IdentityRow {
    fn new(name: String, ell: usize, m: usize, closed: Result<f64>, quad: f64) -> Self {
        let closed = closed.ok();
        let abs_err = closed.map(|c| (c - quad).abs());
        let rel_err = closed.map(|c| (c - quad).abs() / c.abs().max(1.0));
        Self { name, ell, m, closed_form: closed, quadrature: quad, abs_err, rel_err, in_domain: closed.is_some() }
    }

    /// Out-of-domain rows pass vacuously.
    pub fn passes(&self) -> bool {
        self.rel_err.is_none_or(|e| e <= IDENTITY_REL_TOL)
    }
}

/// Every J_k, Appendix C identity and combined identity for 1 ≤ ℓ ≤ ℓ_max,
/// 0 ≤ m ≤ ℓ, in a fixed order.
pub fn identity_table(ell_max: usize, rule: &QuadratureRule) -> Result<Vec<IdentityRow>> {
    use rayon::prelude::*;
    check_rule(ell_max, rule)?;
    let per_ell: Vec<Result<Vec<IdentityRow>>> = (1..=ell_max)
        .into_par_iter()
        .map(|ell| {
            let mut rows = Vec::new();
            for m in 0..=ell {
                let mi = m as i64;
                for k in 1..=8 {
                    let q = quadrature_j(k, ell, mi, rule)?;
                    rows.push(IdentityRow::new(format!("J{k}"), ell, m, closed_form_j(k, ell, mi), q));
                }
                for w in AppendixC::ALL {
                    let q = quadrature_appendix_c(w, ell, mi, rule)?;
                    rows.push(IdentityRow::new(w.name().into(), ell, m, closed_form_appendix_c(w, ell, mi), q));
                }
                let closed = combined_identities(ell, mi);
                for (name, which) in [("c1", Combined::C1), ("c2", Combined::C2), ("c3", Combined::C3)] {
                    let q = quadrature_combined(which, ell, mi, rule)?;
                    let c = closed.as_ref().map_err(|e| Error::domain(e.to_string())).map(|c| match which {
                        Combined::C1 => c.c1,
                        Combined::C2 => c.c2,
                        Combined::C3 => c.c3,
                    });
                    rows.push(IdentityRow::new(name.into(), ell, m, c, q));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_ell {
        out.extend(rows?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gauss_legendre_rule;

    fn rule() -> QuadratureRule {
        gauss_legendre_rule(128).unwrap()
    }

    #[test]
    fn j_examples() {
        assert_eq!(closed_form_j(2, 5, 2).unwrap(), 0.5);
        assert!((closed_form_j(3, 7, 3).unwrap() - 1.0 / 15.0).abs() < 1e-16);
        assert!((closed_form_j(1, 3, 0).unwrap() - 24.0 / 7.0).abs() < 1e-15);
        assert!((closed_form_j(7, 4, 2).unwrap() - 23.0 / 12.0).abs() < 1e-15);
        assert!((quadrature_j(2, 5, 2, &rule()).unwrap() - 0.5).abs() < 1e-10);
        assert!((quadrature_j(7, 4, 2, &rule()).unwrap() - 23.0 / 12.0).abs() < 1e-10);
        assert!(quadrature_j(4, 3, 1, &rule()).unwrap().is_finite());
    }

    #[test]
    fn j_domain_errors() {
        assert!(matches!(closed_form_j(2, 4, 0), Err(Error::IdentityDomain { .. })));
        assert!(matches!(closed_form_j(5, 4, 1), Err(Error::IdentityDomain { .. })));
        assert!(closed_form_j(9, 4, 1).is_err());
        assert!(closed_form_j(1, 4, 5).is_err());
        assert!(j_domain(8, 4, 0).valid);
        assert!(!j_domain(8, 4, 1).valid);
    }

    #[test]
    fn appendix_c_examples() {
        let v = closed_form_appendix_c(AppendixC::Samaddar37, 2, 0).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
        assert_eq!(closed_form_appendix_c(AppendixC::Samaddar25, 1, 1).unwrap(), 2.0);
        let cf = closed_form_appendix_c(AppendixC::Eq333, 4, 2).unwrap();
        let q = quadrature_appendix_c(AppendixC::Eq333, 4, 2, &rule()).unwrap();
        assert!(((cf - q) / cf).abs() < 1e-9);
        assert!(closed_form_appendix_c(AppendixC::Eq444, 4, 1).is_err());
        assert_eq!("EQ555".parse::<AppendixC>().unwrap(), AppendixC::Eq555);
    }

    #[test]
    fn combined_examples() {
        let c = combined_identities(5, 2).unwrap();
        assert!((c.c1 - (1.0 / 11.0 - 2.0)).abs() < 1e-15);
        assert!((c.c2 - 25.0 / 4.0).abs() < 1e-15);
        let r = rule();
        let q3 = 16.0 * quadrature_j(7, 5, 2, &r).unwrap() - 8.0 * quadrature_j(5, 5, 2, &r).unwrap()
            + quadrature_j(8, 5, 2, &r).unwrap();
        assert!(((c.c3 - q3) / c.c3).abs() < 1e-9);
        assert!(combined_identities(5, 1).is_err());
    }

    #[test]
    fn combined_quadrature_at_low_m() {
        // The closed forms of the combinations also hold at m = 1, and c1/c3
        // reduce to J_3(ℓ,0) and J_8(ℓ,0) at m = 0.
        let r = rule();
        for ell in 2..=12usize {
            let lam = eigenvalue(ell);
            let lf = ell as f64;
            let c1 = quadrature_combined(Combined::C1, ell, 1, &r).unwrap();
            let c2 = quadrature_combined(Combined::C2, ell, 1, &r).unwrap();
            let c3 = quadrature_combined(Combined::C3, ell, 1, &r).unwrap();
            assert!((c1 - (1.0 / (2.0 * lf + 1.0) - 1.0)).abs() < 1e-10);
            assert!((c2 - (lam - 2.0) / 2.0).abs() < 1e-10);
            assert!((c3 - 0.5 * (-4.0 * lam / (2.0 * lf + 1.0) + 2.0 + lam)).abs() < 1e-10);
            let c1_0 = quadrature_combined(Combined::C1, ell, 0, &r).unwrap();
            let c3_0 = quadrature_combined(Combined::C3, ell, 0, &r).unwrap();
            assert!((c1_0 - closed_form_j(3, ell, 0).unwrap()).abs() < 1e-10);
            assert!((c3_0 - closed_form_j(8, ell, 0).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn short_rule_rejected() {
        let r = gauss_legendre_rule(10).unwrap();
        assert!(quadrature_j(1, 5, 1, &r).is_err());
    }
}
