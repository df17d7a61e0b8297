//! Hermite and Legendre families, the Gaussian density/CDF and Gauss–Legendre
//! quadrature.
//!
//! Conventions: probabilists' Hermite polynomials (`H_2(u) = u² − 1`) and
//! associated Legendre functions with the Condon–Shortley phase, so that
//! `P_1^1(z) = −√(1−z²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::{Error, Result};

pub const MAX_HERMITE_ORDER: usize = 30;
pub const MAX_LEGENDRE_DEGREE: usize = 200;
pub const MAX_QUADRATURE_NODES: usize = 1024;

/// Nodes and weights of an n-point rule on [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫_{−1}^{1} g(z) dz.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z))
            .sum()
    }

    /// ∫_a^b g(x) dx by the affine map of the rule onto [a, b].
    pub fn integrate_on(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        half * self.integrate(|z| g(mid + half * z))
    }
}

/// Probabilists' Hermite polynomial H_q(u).
pub fn hermite(q: usize, u: f64) -> Result<f64> {
    if q > MAX_HERMITE_ORDER {
        return Err(Error::domain(format!(
            "hermite order {q} exceeds {MAX_HERMITE_ORDER}"
        )));
    }
    let (mut prev, mut cur) = (1.0, u);
    if q == 0 {
        return Ok(prev);
    }
    for k in 1..q {
        let next = u * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

pub fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(u), computed without cancellation.
pub fn std_normal_sf(u: f64) -> f64 {
    0.5 * erfc(u / std::f64::consts::SQRT_2)
}

/// Φ^{-1}(p) for p in (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Gaussian Minkowski functional ρ_j(u), j ≤ 3, with ρ_0 = 1 − Φ(u).
pub fn gaussian_minkowski_rho(j: usize, u: f64) -> Result<f64> {
    match j {
        0 => Ok(std_normal_sf(u)),
        1..=3 => {
            let h = hermite(j - 1, u)?;
            Ok((2.0 * PI).powf(-(j as f64 + 1.0) / 2.0) * h * (-0.5 * u * u).exp())
        }
        _ => Err(Error::domain(format!("rho index {j} > 3"))),
    }
}

fn check_z_closed(z: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::domain(format!("|z| > 1: {z}")));
    }
    Ok(())
}

/// Legendre polynomial P_ℓ(z).
pub fn legendre(ell: usize, z: f64) -> Result<f64> {
    if ell > MAX_LEGENDRE_DEGREE {
        return Err(Error::domain(format!("degree {ell} > {MAX_LEGENDRE_DEGREE}")));
    }
    check_z_closed(z)?;
    if z == 1.0 {
        return Ok(1.0);
    }
    Ok(legendre_pair(ell, z).1)
}

/// (P_{ℓ−1}(z), P_ℓ(z)) with P_{−1} := 0.
fn legendre_pair(ell: usize, z: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 1..=ell {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * z * cur - (k - 1.0) * prev) / k;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// (ℓ−m)!/(ℓ+m)! as an iterated product (never a quotient of factorials).
pub fn factorial_ratio(ell: usize, m: usize) -> f64 {
    debug_assert!(m <= ell);
    ((ell - m + 1)..=(ell + m)).fold(1.0, |acc, k| acc / k as f64)
}

/// (P_{ℓ−1}^m(z), P_ℓ^m(z)) for 0 ≤ m ≤ ℓ by upward recurrence from P_m^m.
fn assoc_pair(ell: usize, m: usize, z: f64) -> (f64, f64) {
    let s = ((1.0 - z) * (1.0 + z)).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= -((2 * k - 1) as f64) * s;
    }
    if ell == m {
        return (0.0, pmm);
    }
    let (mut prev, mut cur) = (pmm, z * (2 * m + 1) as f64 * pmm);
    for l in (m + 2)..=ell {
        let next = ((2 * l - 1) as f64 * z * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

fn check_assoc(ell: usize, m: i64) -> Result<usize> {
    if ell > MAX_LEGENDRE_DEGREE {
        return Err(Error::domain(format!("degree {ell} > {MAX_LEGENDRE_DEGREE}")));
    }
    let am = m.unsigned_abs() as usize;
    if am > ell {
        return Err(Error::domain(format!("|m| = {am} > l = {ell}")));
    }
    Ok(am)
}

/// P_ℓ^{−m} = (−1)^m (ℓ−m)!/(ℓ+m)! P_ℓ^m.
fn negative_m_factor(ell: usize, am: usize) -> f64 {
    let sign = if am % 2 == 0 { 1.0 } else { -1.0 };
    sign * factorial_ratio(ell, am)
}

/// Associated Legendre function P_ℓ^m(z), Condon–Shortley phase included.
///
/// At |z| = 1 the value is the limit: 0 for m ≠ 0, P_ℓ(±1) for m = 0.
pub fn assoc_legendre(ell: usize, m: i64, z: f64) -> Result<f64> {
    let am = check_assoc(ell, m)?;
    check_z_closed(z)?;
    if z.abs() == 1.0 {
        return if am == 0 { legendre(ell, z) } else { Ok(0.0) };
    }
    let p = assoc_pair(ell, am, z).1;
    Ok(if m < 0 { negative_m_factor(ell, am) * p } else { p })
}

/// d/dz P_ℓ^m(z) from (1−z²) P' = (ℓ+m) P_{ℓ−1}^m − ℓ z P_ℓ^m.
pub fn assoc_legendre_dz(ell: usize, m: i64, z: f64) -> Result<f64> {
    let am = check_assoc(ell, m)?;
    if !(z > -1.0 && z < 1.0) {
        return Err(Error::domain(format!("derivative needs |z| < 1, got {z}")));
    }
    let (pm1, p) = assoc_pair(ell, am, z);
    let d = ((ell + am) as f64 * pm1 - ell as f64 * z * p) / ((1.0 - z) * (1.0 + z));
    Ok(if m < 0 { negative_m_factor(ell, am) * d } else { d })
}

/// Normalised pair (Q_{ℓ−1}^m, Q_ℓ^m) at (z, s) = (cos θ, sin θ), where
/// Q_ℓ^m = √((ℓ−m)!/(ℓ+m)!) P_ℓ^m and Q_{m−1}^m := 0.
///
/// The normalised recurrence stays O(1) for every m, whereas raw P_ℓ^ℓ
/// overflows near ℓ = 150.
pub fn normalized_assoc_legendre(ell: usize, m: usize, z: f64, s: f64) -> (f64, f64) {
    debug_assert!(m <= ell);
    let mut qmm = 1.0;
    for k in 1..=m {
        qmm *= -s * ((2 * k - 1) as f64 / (2 * k) as f64).sqrt();
    }
    if m == ell {
        return (0.0, qmm);
    }
    let mf = m as f64;
    let (mut prev, mut cur) = (qmm, z * (2.0 * mf + 1.0).sqrt() * qmm);
    for l in (m + 2)..=ell {
        let lf = l as f64;
        let a = ((lf - 1.0) * (lf - 1.0) - mf * mf).sqrt();
        let b = (lf * lf - mf * mf).sqrt();
        let next = ((2.0 * lf - 1.0) * z * cur - a * prev) / b;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// (Q_ℓ^m, dQ_ℓ^m/dθ) at colatitude θ in (0, π).
pub fn normalized_assoc_legendre_dtheta(ell: usize, m: usize, theta: f64) -> (f64, f64) {
    let (z, s) = (theta.cos(), theta.sin());
    let (qp, q) = normalized_assoc_legendre(ell, m, z, s);
    let mf = m as f64;
    let lf = ell as f64;
    let dq = -((lf * lf - mf * mf).sqrt() * qp - lf * z * q) / s;
    (q, dq)
}

/// Rows `(q, q_prev)` with `q[m] = Q_ℓ^m`, `q_prev[m] = Q_{ℓ−1}^m` for
/// m = 0..=ℓ.
pub fn normalized_legendre_row(ell: usize, z: f64, s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; ell + 1];
    let mut q_prev = vec![0.0; ell + 1];
    for m in 0..=ell {
        (q_prev[m], q[m]) = normalized_assoc_legendre(ell, m, z, s);
    }
    (q, q_prev)
}

/// n-point Gauss–Legendre rule by Newton iteration on P_n.
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_QUADRATURE_NODES {
        return Err(Error::domain(format!(
            "quadrature size {n} outside 1..={MAX_QUADRATURE_NODES}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's asymptotic guess for the i-th largest root.
        let k = i as f64 + 1.0;
        let t = PI * (k - 0.25) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * t.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (pm1, p) = legendre_pair(n, x);
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-14 * x.abs().max(1.0) {
                let (pm1, p) = legendre_pair(n, x);
                dp = nf * (x * p - pm1) / (x * x - 1.0);
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}
