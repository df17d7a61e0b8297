//! Second Wiener chaos of the excursion-set Euler characteristic: the
//! projection coefficients of the Kac–Rice integrand, the quadratic
//! functionals of the whitened jet, and independent numerical oracles for
//! both.
//!
//! Whitened jet: Y = Λ⁻¹(e₁f, e₂f, e₁e₁f, e₁e₂f, e₂e₂f). In these variables
//! f = −(αY₃ + βY₅), so the excursion indicator is 1{αY₃ + βY₅ ≤ −u}.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenfield::{evaluate_jet, jet_covariance, y_vector, HarmonicCoefficients, SpherePoint};
use crate::legendre_identities::{
    closed_form_j, combined_identities, j_domain, quadrature_combined, quadrature_j, Combined,
};
use crate::specfun::{
    gauss_legendre_rule, hermite, std_normal_cdf, std_normal_pdf, std_normal_sf, QuadratureRule,
};
use crate::{eigenvalue, Error, Result};

/// Absolute tolerance for closed form vs oracle agreement.
pub const COEFFICIENT_ABS_TOL: f64 = 1e-8;

/// Nodes of the default 1-d oracle rule on [−12, 12].
pub const ORACLE_NODES: usize = 400;

/// Half-width of the oracle's integration window.
pub const ORACLE_HALF_WIDTH: f64 = 12.0;

fn check_ell(ell: usize) -> Result<()> {
    if ell < 2 {
        return Err(Error::domain(format!("chaos coefficients need l >= 2, got {ell}")));
    }
    Ok(())
}

/// Mixing weights of f in (Y₃, Y₅).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaBeta {
    pub fn new(ell: usize) -> Result<Self> {
        check_ell(ell)?;
        let lam = eigenvalue(ell);
        Ok(Self {
            alpha: (2.0 * lam / (3.0 * lam - 2.0)).sqrt(),
            beta: ((lam - 2.0) / (3.0 * lam - 2.0)).sqrt(),
        })
    }
}

/// Projection coefficient of δ(Y₁)δ(Y₂) on H_a.
pub fn phi_coefficient(a: usize, ell: usize) -> Result<f64> {
    check_ell(ell)?;
    let phi0 = 1.0 / ((2.0 * PI).sqrt() * (eigenvalue(ell) / 2.0).sqrt());
    match a {
        0 => Ok(phi0),
        1 => Ok(0.0),
        2 => Ok(-phi0),
        _ => Err(Error::domain(format!("phi coefficient index {a} not in 0..=2"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaPair {
    T33,
    T35,
    T44,
    T55,
}

impl ThetaPair {
    pub const ALL: [ThetaPair; 4] = [Self::T33, Self::T35, Self::T44, Self::T55];

    pub fn name(self) -> &'static str {
        match self {
            Self::T33 => "theta33",
            Self::T35 => "theta35",
            Self::T44 => "theta44",
            Self::T55 => "theta55",
        }
    }

    /// Powers (p, q, r) of (Y₄, Y₅, Y₃) in the moment.
    pub fn powers(self) -> (usize, usize, usize) {
        match self {
            Self::T33 => (0, 0, 2),
            Self::T35 => (0, 1, 1),
            Self::T44 => (2, 0, 0),
            Self::T55 => (0, 2, 0),
        }
    }
}

/// E[Y_a Y_b 1{f ≥ u}].
pub fn theta(pair: ThetaPair, u: f64, ell: usize) -> Result<f64> {
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
    let d = 3.0 * lam - 2.0;
    Ok(match pair {
        ThetaPair::T33 => pm + 2.0 * lam / d * upu,
        ThetaPair::T35 => SQRT_2 * lam.sqrt() * (lam - 2.0).sqrt() / d * upu,
        ThetaPair::T44 => pm,
        ThetaPair::T55 => pm + (lam - 2.0) / d * upu,
    })
}

/// Index patterns of the fourth-order coefficients ψ_abcd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PsiPattern {
    P3333,
    P3355,
    P3555,
    P3335,
    P3344,
    P4455,
    P3445,
    P4444,
    P3334,
    P3345,
    P3444,
    P3455,
    P4445,
}

impl PsiPattern {
    pub const ALL: [PsiPattern; 13] = [
        Self::P3333,
        Self::P3355,
        Self::P3555,
        Self::P3335,
        Self::P3344,
        Self::P4455,
        Self::P3445,
        Self::P4444,
        Self::P3334,
        Self::P3345,
        Self::P3444,
        Self::P3455,
        Self::P4445,
    ];

    pub fn digits(self) -> &'static str {
        match self {
            Self::P3333 => "3333",
            Self::P3355 => "3355",
            Self::P3555 => "3555",
            Self::P3335 => "3335",
            Self::P3344 => "3344",
            Self::P4455 => "4455",
            Self::P3445 => "3445",
            Self::P4444 => "4444",
            Self::P3334 => "3334",
            Self::P3345 => "3345",
            Self::P3444 => "3444",
            Self::P3455 => "3455",
            Self::P4445 => "4445",
        }
    }

    /// Powers (p, q, r) of (Y₄, Y₅, Y₃).
    pub fn powers(self) -> (usize, usize, usize) {
        let d = self.digits();
        let count = |c| d.chars().filter(|&x| x == c).count();
        (count('4'), count('5'), count('3'))
    }

    /// Odd in Y₄, hence zero by symmetry.
    pub fn vanishes(self) -> bool {
        self.powers().0 % 2 == 1
    }
}

impl fmt::Display for PsiPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "psi{}", self.digits())
    }
}

impl FromStr for PsiPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let d = s.strip_prefix("psi").unwrap_or(s);
        Self::ALL
            .into_iter()
            .find(|p| p.digits() == d)
            .ok_or_else(|| Error::domain(format!("unknown psi index pattern {s:?}")))
    }
}

/// E[Y_a Y_b Y_c Y_d 1{f ≥ u}].
pub fn psi(pattern: PsiPattern, u: f64, ell: usize) -> Result<f64> {
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
    let d = 3.0 * lam - 2.0;
    let mix = SQRT_2 * lam.sqrt() * (lam - 2.0).sqrt();
    let u2 = u * u;
    Ok(match pattern {
        PsiPattern::P3333 => 3.0 * pm + 4.0 * lam * (lam * (u2 + 6.0) - 6.0) / (d * d) * upu,
        PsiPattern::P3355 => {
            pm + (4.0 + 2.0 * u2 * lam * (lam - 2.0) + 3.0 * lam * lam) / (d * d) * upu
        }
        PsiPattern::P3555 => mix * (lam * u2 - 2.0 * u2 + 6.0 * lam) / (d * d) * upu,
        PsiPattern::P3335 => mix * (2.0 * lam * u2 + 3.0 * lam - 6.0) / (d * d) * upu,
        PsiPattern::P3344 => pm + 2.0 * lam / d * upu,
        PsiPattern::P4455 => pm + (lam - 2.0) / d * upu,
        PsiPattern::P3445 => mix / d * upu,
        PsiPattern::P4444 => 3.0 * pm,
        _ => 0.0,
    })
}

/// ψ₃₃₅₅ in the polynomial form of the lemma's proof, in α and β.
pub fn psi3355_proof_form(u: f64, ell: usize) -> Result<f64> {
    let AlphaBeta { alpha, beta } = AlphaBeta::new(ell)?;
    let (a2, b2) = (alpha * alpha, beta * beta);
    let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
    Ok(pm + a2 * upu + b2 * (-2.0 * a2 * a2 + b2 * b2 - a2 * b2 + a2 * u * u) * upu)
}

/// The default 400-node oracle rule.
pub fn oracle_rule() -> QuadratureRule {
    gauss_legendre_rule(ORACLE_NODES).expect("oracle rule size is valid")
}

/// ∫_{−∞}^t x^q φ(x) dx.
fn truncated_moment(q: usize, t: f64) -> f64 {
    let pdf = std_normal_pdf(t);
    let (mut m0, mut m1) = (std_normal_cdf(t), -pdf);
    if q == 0 {
        return m0;
    }
    let mut tk = 1.0; // t^{k−1} for k = 2
    for k in 2..=q {
        tk *= t;
        let next = -tk * pdf + (k - 1) as f64 * m0;
        m0 = m1;
        m1 = next;
    }
    m1
}

fn gaussian_moment(p: usize) -> f64 {
    if p % 2 == 1 {
        0.0
    } else {
        (1..p).step_by(2).map(|k| k as f64).product()
    }
}

/// E[Z^p X^q Y^r 1{αY + βX ≤ −u}] for independent standard normals, reduced
/// to a 1-d integral over y with the inner x-integral in closed form.
pub fn oracle_indicator_moment(
    p: usize,
    q: usize,
    r: usize,
    u: f64,
    ab: AlphaBeta,
    rule: &QuadratureRule,
) -> Result<f64> {
    if p + q + r > 6 {
        return Err(Error::domain(format!("moment order {} exceeds 6", p + q + r)));
    }
    if !(ab.beta > 0.0) {
        return Err(Error::domain("oracle needs beta > 0"));
    }
    let zp = gaussian_moment(p);
    if zp == 0.0 {
        return Ok(0.0);
    }
    let inner = rule.integrate_on(-ORACLE_HALF_WIDTH, ORACLE_HALF_WIDTH, |y| {
        y.powi(r as i32) * std_normal_pdf(y) * truncated_moment(q, (-u - ab.alpha * y) / ab.beta)
    });
    Ok(zp * inner)
}

/// Oracle value of a θ coefficient.
pub fn oracle_theta(pair: ThetaPair, u: f64, ell: usize, rule: &QuadratureRule) -> Result<f64> {
    let (p, q, r) = pair.powers();
    oracle_indicator_moment(p, q, r, u, AlphaBeta::new(ell)?, rule)
}

/// Oracle value of a ψ coefficient.
pub fn oracle_psi(pattern: PsiPattern, u: f64, ell: usize, rule: &QuadratureRule) -> Result<f64> {
    let (p, q, r) = pattern.powers();
    oracle_indicator_moment(p, q, r, u, AlphaBeta::new(ell)?, rule)
}

/// Second-chaos coefficients of the Kac–Rice integrand: h₃₅ on H₁(Y₃)H₁(Y₅)
/// and k_i on H₂(Y_i). Every other h_ij vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosCoefficients {
    pub u: f64,
    pub ell: usize,
    pub h35: f64,
    pub k: [f64; 5],
}

impl ChaosCoefficients {
    /// h_ij for 1 ≤ i < j ≤ 5.
    pub fn h(&self, i: usize, j: usize) -> Result<f64> {
        if !(1..=5).contains(&i) || !(1..=5).contains(&j) || i == j {
            return Err(Error::domain(format!("h index ({i}, {j}) invalid")));
        }
        Ok(if (i.min(j), i.max(j)) == (3, 5) { self.h35 } else { 0.0 })
    }
}

/// k₃ as displayed at the end of the appendix derivation; it does not agree
/// with the oracle and is kept only for adjudication.
pub fn k3_proof_form(u: f64, ell: usize) -> Result<f64> {
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
    Ok(pm * (lam + 4.0) / (4.0 * PI)
        + lam * (lam * (2.0 * u * u + 5.0) + 2.0) / (4.0 * PI * (3.0 * lam - 2.0)) * upu)
}

/// Closed forms of h₃₅ and k₁..k₅.
pub fn hk_coefficients(u: f64, ell: usize) -> Result<ChaosCoefficients> {
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let (pm, upu) = (std_normal_sf(u), u * std_normal_pdf(u));
    let d = 3.0 * lam - 2.0;
    let poly = 2.0 + lam * (u * u + 1.0);
    let h35 = lam.sqrt() * (lam - 2.0).sqrt() * (pm * d + upu * poly) / (2.0 * SQRT_2 * PI * d);
    let k1 = -(2.0 * pm + lam * upu) / (4.0 * PI);
    let k3 = pm * (lam + 2.0) / (4.0 * PI) + lam * poly / (2.0 * PI * d) * upu;
    let k4 = -pm * (lam - 2.0) / (4.0 * PI);
    let k5 = (lam - 2.0) * poly / (4.0 * PI * d) * upu;
    Ok(ChaosCoefficients { u, ell, h35, k: [k1, k1, k3, k4, k5] })
}

/// h₃₅ and k_i assembled from θ/ψ values supplied by `theta_of` and
/// `psi_of` (closed forms or oracle), following the derivation of the
/// coefficients from the Kac–Rice integrand det(∇²f)·δ(∇f)·1{f ≥ u}.
pub fn hk_assembled(
    u: f64,
    ell: usize,
    theta_of: impl Fn(ThetaPair) -> Result<f64>,
    psi_of: impl Fn(PsiPattern) -> Result<f64>,
) -> Result<ChaosCoefficients> {
    let cov = jet_covariance(ell)?;
    let [_, l2, l3, l4, l5] = cov.lambda_factors;
    let phi0 = phi_coefficient(0, ell)?;
    let phi2 = phi_coefficient(2, ell)?;
    let (a, b, c) = (l3 * l5, l2 * l3, l4 * l4);
    let g0 = a * theta_of(ThetaPair::T35)? + b * theta_of(ThetaPair::T33)? - c * theta_of(ThetaPair::T44)?;
    let p = |x: PsiPattern| psi_of(x);
    use PsiPattern::*;
    let f2 = phi0 * phi0;
    let h35 = (a * p(P3355)? + b * p(P3335)? - c * p(P3445)?) * f2;
    let k1 = g0 * phi0 * phi2;
    let k3 = (a * p(P3335)? + b * p(P3333)? - c * p(P3344)?) * f2 - g0 * f2;
    let k4 = (a * p(P3445)? + b * p(P3344)? - c * p(P4444)?) * f2 - g0 * f2;
    let k5 = (a * p(P3555)? + b * p(P3355)? - c * p(P4455)?) * f2 - g0 * f2;
    Ok(ChaosCoefficients { u, ell, h35, k: [k1, k1, k3, k4, k5] })
}

/// Assembly from the 1-d oracle.
pub fn hk_oracle(u: f64, ell: usize, rule: &QuadratureRule) -> Result<ChaosCoefficients> {
    hk_assembled(u, ell, |t| oracle_theta(t, u, ell, rule), |p| oracle_psi(p, u, ell, rule))
}

/// Which of two displayed forms matches the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Statement,
    Proof,
    Both,
    Neither,
}

impl Variant {
    fn from_flags(statement: bool, proof: bool) -> Self {
        match (statement, proof) {
            (true, true) => Self::Both,
            (true, false) => Self::Statement,
            (false, true) => Self::Proof,
            (false, false) => Self::Neither,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Statement => "statement",
            Self::Proof => "proof",
            Self::Both => "both",
            Self::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub u: f64,
    pub ell: usize,
    pub closed_form: f64,
    pub oracle: f64,
    pub abs_err: f64,
}

impl CoefficientRow {
    fn new(name: impl Into<String>, u: f64, ell: usize, closed_form: f64, oracle: f64) -> Self {
        Self { name: name.into(), u, ell, closed_form, oracle, abs_err: (closed_form - oracle).abs() }
    }

    pub fn passes(&self) -> bool {
        self.abs_err <= COEFFICIENT_ABS_TOL
    }
}

/// Every coefficient on a (u, ℓ) grid against the oracle, with the two
/// contested forms adjudicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
    pub k3: Variant,
    pub psi3355: Variant,
}

impl CoefficientTable {
    /// Rows of the forms the library uses; the rejected variants are
    /// reported but do not count.
    pub fn all_pass(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| !r.name.ends_with("_proof"))
            .all(CoefficientRow::passes)
    }

    pub fn worst(&self) -> Option<&CoefficientRow> {
        self.rows
            .iter()
            .filter(|r| !r.name.ends_with("_proof"))
            .max_by(|a, b| a.abs_err.total_cmp(&b.abs_err))
    }
}

fn coefficient_rows(u: f64, ell: usize, rule: &QuadratureRule) -> Result<Vec<CoefficientRow>> {
    let mut rows = Vec::new();
    for t in ThetaPair::ALL {
        rows.push(CoefficientRow::new(t.name(), u, ell, theta(t, u, ell)?, oracle_theta(t, u, ell, rule)?));
    }
    for p in PsiPattern::ALL {
        rows.push(CoefficientRow::new(p.to_string(), u, ell, psi(p, u, ell)?, oracle_psi(p, u, ell, rule)?));
    }
    let o3355 = oracle_psi(PsiPattern::P3355, u, ell, rule)?;
    rows.push(CoefficientRow::new("psi3355_proof", u, ell, psi3355_proof_form(u, ell)?, o3355));
    let closed = hk_coefficients(u, ell)?;
    let oracle = hk_oracle(u, ell, rule)?;
    rows.push(CoefficientRow::new("h35", u, ell, closed.h35, oracle.h35));
    for i in 0..5 {
        rows.push(CoefficientRow::new(format!("k{}", i + 1), u, ell, closed.k[i], oracle.k[i]));
    }
    rows.push(CoefficientRow::new("k3_proof", u, ell, k3_proof_form(u, ell)?, oracle.k[2]));
    for a in 0..3 {
        rows.push(CoefficientRow::new(format!("phi{a}"), u, ell, phi_coefficient(a, ell)?, oracle_phi(a, ell)?));
    }
    Ok(rows)
}

/// φ_a = E[H_a(Y₁) δ(λ₁Y₁)] = H_a(0)φ(0)/λ₁, evaluated directly.
fn oracle_phi(a: usize, ell: usize) -> Result<f64> {
    let l1 = (eigenvalue(ell) / 2.0).sqrt();
    Ok(hermite(a, 0.0)? * std_normal_pdf(0.0) / l1)
}

pub fn coefficient_table(us: &[f64], ells: &[usize]) -> Result<CoefficientTable> {
    if us.is_empty() || ells.is_empty() {
        return Err(Error::domain("coefficient table needs nonempty u and l lists"));
    }
    let rule = oracle_rule();
    let grid: Vec<(f64, usize)> = ells.iter().flat_map(|&l| us.iter().map(move |&u| (u, l))).collect();
    let blocks: Vec<Vec<CoefficientRow>> = grid
        .par_iter()
        .map(|&(u, l)| coefficient_rows(u, l, &rule))
        .collect::<Result<_>>()?;
    let rows: Vec<CoefficientRow> = blocks.into_iter().flatten().collect();
    let all = |name: &str| rows.iter().filter(|r| r.name == name).all(CoefficientRow::passes);
    Ok(CoefficientTable {
        k3: Variant::from_flags(all("k3"), all("k3_proof")),
        psi3355: Variant::from_flags(all("psi3355"), all("psi3355_proof")),
        rows,
    })
}

/// Leading second-chaos projection of χ(A_u):
/// (λ/2) H₁(u)H₂(u)φ(u) (2ℓ+1)⁻¹ Σ_m (|a_ℓm|² − 1).
pub fn second_chaos_projection(c: &HarmonicCoefficients, u: f64) -> Result<f64> {
    check_ell(c.ell())?;
    Ok(proj2_factor(c.ell(), u) * c.centered_power())
}

/// The deterministic factor multiplying Σ(|a|² − 1).
pub fn proj2_factor(ell: usize, u: f64) -> f64 {
    let lam = eigenvalue(ell);
    lam / 2.0 * u * (u * u - 1.0) * std_normal_pdf(u) / (2 * ell + 1) as f64
}

/// Exact variance of [`second_chaos_projection`], from Var Σ(|a|²−1) = 2(2ℓ+1).
pub fn proj2_variance(ell: usize, u: f64) -> Result<f64> {
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let g = u * (u * u - 1.0) * std_normal_pdf(u);
    Ok(lam * lam / 4.0 * g * g * 2.0 / (2 * ell + 1) as f64)
}

/// An affine form constant + c₀a₀² + Σ_{m≥1} c_m|a_m|² in the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub coef: Vec<f64>,
    pub constant: f64,
}

impl LinearForm {
    pub fn zero(ell: usize) -> Self {
        Self { coef: vec![0.0; ell + 1], constant: 0.0 }
    }

    /// Σ_{m=−ℓ}^{ℓ} (|a_m|² − 1).
    pub fn centered_power(ell: usize) -> Self {
        let mut coef = vec![2.0; ell + 1];
        coef[0] = 1.0;
        Self { coef, constant: -((2 * ell + 1) as f64) }
    }

    pub fn evaluate(&self, c: &HarmonicCoefficients) -> f64 {
        self.constant + self.coef.iter().enumerate().map(|(m, w)| w * c.abs2(m)).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.constant + self.coef.iter().sum::<f64>()
    }

    /// Var a₀² = 2 and Var |a_m|² = 1 for m ≥ 1.
    pub fn variance(&self) -> f64 {
        2.0 * self.coef[0] * self.coef[0] + self.coef[1..].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coef: self.coef.iter().map(|w| w * s).collect(), constant: self.constant * s }
    }

    pub fn plus(&self, other: &Self, s: f64) -> Self {
        Self {
            coef: self.coef.iter().zip(&other.coef).map(|(a, b)| a + s * b).collect(),
            constant: self.constant + s * other.constant,
        }
    }

    pub fn shifted(&self, k: f64) -> Self {
        Self { coef: self.coef.clone(), constant: self.constant + k }
    }
}

/// The six integrals of products of f and its covariant derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegralKind {
    I00,
    I11,
    I22,
    I022,
    I1212,
    I2222,
}

impl IntegralKind {
    pub const ALL: [IntegralKind; 6] =
        [Self::I00, Self::I11, Self::I22, Self::I022, Self::I1212, Self::I2222];
}

/// I-integrals as linear forms, and A₃₅, B₁..B₅ reduced from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForms {
    pub ell: usize,
    pub i: [LinearForm; 6],
    pub a35: LinearForm,
    pub b: [LinearForm; 5],
}

/// θ-kernel of an I-integral for a single m, before the 4π and the ½ on m=0.
fn kernel(kind: IntegralKind, ell: usize, m: usize, rule: &QuadratureRule) -> Result<f64> {
    let mi = m as i64;
    let mf = m as f64;
    Ok(match kind {
        IntegralKind::I00 => 2.0 / (2 * ell + 1) as f64,
        IntegralKind::I11 => {
            if j_domain(1, ell, mi).valid {
                closed_form_j(1, ell, mi)?
            } else {
                quadrature_j(1, ell, mi, rule)?
            }
        }
        IntegralKind::I22 => mf,
        IntegralKind::I022 if m >= 2 => combined_identities(ell, mi)?.c1,
        IntegralKind::I022 => quadrature_combined(Combined::C1, ell, mi, rule)?,
        IntegralKind::I1212 if m >= 2 => mf * mf * combined_identities(ell, mi)?.c2,
        IntegralKind::I1212 => mf * mf * quadrature_combined(Combined::C2, ell, mi, rule)?,
        IntegralKind::I2222 if m >= 2 => combined_identities(ell, mi)?.c3,
        IntegralKind::I2222 => quadrature_combined(Combined::C3, ell, mi, rule)?,
    })
}

impl QuadraticForms {
    pub fn new(ell: usize) -> Result<Self> {
        check_ell(ell)?;
        let rule = gauss_legendre_rule(2 * ell + 64)?;
        let four_pi = 4.0 * PI;
        let mut i: [LinearForm; 6] = std::array::from_fn(|_| LinearForm::zero(ell));
        for (k, kind) in IntegralKind::ALL.into_iter().enumerate() {
            for m in 0..=ell {
                let w = if m == 0 { 0.5 } else { 1.0 };
                i[k].coef[m] = four_pi * w * kernel(kind, ell, m, &rule)?;
            }
        }
        let cov = jet_covariance(ell)?;
        let [l1, l2, l3, l4, l5] = cov.lambda_factors;
        let lam = eigenvalue(ell);
        let [i00, i11, i22, i022, i1212, i2222] = &i;
        let zero = LinearForm::zero(ell);
        let a35 = zero
            .plus(i022, -lam / (l3 * l5) * (1.0 + 2.0 * l2 / l3))
            .plus(i00, -lam * lam * l2 / (l3 * l3 * l5))
            .plus(i2222, -(1.0 + l2 / l3) / (l3 * l5));
        let r = 1.0 + l2 / l3;
        let b = [
            i11.scaled(1.0 / (l1 * l1)).shifted(-four_pi),
            i22.scaled(1.0 / (l1 * l1)).shifted(-four_pi),
            zero.plus(i00, lam * lam / (l3 * l3))
                .plus(i2222, 1.0 / (l3 * l3))
                .plus(i022, 2.0 * lam / (l3 * l3))
                .shifted(-four_pi),
            i1212.scaled(1.0 / (l4 * l4)).shifted(-four_pi),
            zero.plus(i2222, r * r / (l5 * l5))
                .plus(i00, (lam * l2 / (l3 * l5)).powi(2))
                .plus(i022, 2.0 * lam * l2 / (l3 * l5 * l5) * r)
                .shifted(-four_pi),
        ];
        Ok(Self { ell, i, a35, b })
    }

    pub fn form(&self, kind: IntegralKind) -> &LinearForm {
        &self.i[kind as usize]
    }

    pub fn evaluate(&self, c: &HarmonicCoefficients) -> Result<QuadraticFunctionals> {
        if c.ell() != self.ell {
            return Err(Error::domain(format!("forms for l = {} given l = {}", self.ell, c.ell())));
        }
        let iv = |k: usize| self.i[k].evaluate(c);
        Ok(QuadraticFunctionals {
            i00: iv(0),
            i11: iv(1),
            i22: iv(2),
            i022: iv(3),
            i1212: iv(4),
            i2222: iv(5),
            a35: self.a35.evaluate(c),
            b: std::array::from_fn(|k| self.b[k].evaluate(c)),
        })
    }

    /// h₃₅A₃₅ + ½Σ k_i B_i as a linear form.
    pub fn proj2_form(&self, coeffs: &ChaosCoefficients) -> LinearForm {
        (0..5).fold(self.a35.scaled(coeffs.h35), |acc, k| acc.plus(&self.b[k], 0.5 * coeffs.k[k]))
    }

    /// The Φ(−u)-weighted part of [`Self::proj2_form`] (per unit Φ(−u)),
    /// which cancels to leading order.
    pub fn phi_part_form(&self) -> LinearForm {
        let lam = eigenvalue(self.ell);
        let h = lam.sqrt() * (lam - 2.0).sqrt() / (2.0 * SQRT_2 * PI);
        let k1 = -2.0 / (4.0 * PI);
        let k3 = (lam + 2.0) / (4.0 * PI);
        let k4 = -(lam - 2.0) / (4.0 * PI);
        self.a35
            .scaled(h)
            .plus(&self.b[0], 0.5 * k1)
            .plus(&self.b[1], 0.5 * k1)
            .plus(&self.b[2], 0.5 * k3)
            .plus(&self.b[3], 0.5 * k4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFunctionals {
    pub i00: f64,
    pub i11: f64,
    pub i22: f64,
    pub i022: f64,
    pub i1212: f64,
    pub i2222: f64,
    pub a35: f64,
    pub b: [f64; 5],
}

impl QuadraticFunctionals {
    pub fn get(&self, kind: IntegralKind) -> f64 {
        match kind {
            IntegralKind::I00 => self.i00,
            IntegralKind::I11 => self.i11,
            IntegralKind::I22 => self.i22,
            IntegralKind::I022 => self.i022,
            IntegralKind::I1212 => self.i1212,
            IntegralKind::I2222 => self.i2222,
        }
    }

    /// h₃₅A₃₅ + ½Σ k_i B_i.
    pub fn proj2_assembled(&self, coeffs: &ChaosCoefficients) -> f64 {
        coeffs.h35 * self.a35 + 0.5 * (0..5).map(|k| coeffs.k[k] * self.b[k]).sum::<f64>()
    }
}

pub fn quadratic_functionals(c: &HarmonicCoefficients) -> Result<QuadraticFunctionals> {
    QuadraticForms::new(c.ell())?.evaluate(c)
}

/// Large-ℓ reference forms of (A₃₅, B₁..B₅), each a sum over m = −ℓ..ℓ
/// of (|a_m|² − 1) times a weight in |m|. Reference only: the exact values
/// come from [`QuadraticForms`].
pub fn reference_forms(ell: usize) -> Result<[LinearForm; 6]> {
    check_ell(ell)?;
    let l = ell as f64;
    let weights: [Box<dyn Fn(f64) -> f64>; 6] = [
        Box::new(|m| SQRT_2 / 3.0 * (-1.0 / l + 3.0 * m / (l * l) - 2.0 * m.powi(3) / l.powi(4))),
        Box::new(|m| 1.0 / l - m / (l * l)),
        Box::new(|m| m / (l * l)),
        Box::new(|m| 4.0 / (3.0 * l) - 2.0 * m / (l * l) + 2.0 * m.powi(3) / (3.0 * l.powi(4))),
        Box::new(|m| 2.0 * (m / (l * l) - m.powi(3) / l.powi(4))),
        Box::new(|m| (1.0 / l + 8.0 * m.powi(3) / l.powi(4)) / 6.0),
    ];
    Ok(weights.map(|w| {
        let mut f = LinearForm::zero(ell);
        for m in 0..=ell {
            let mult = if m == 0 { 1.0 } else { 2.0 };
            f.coef[m] = 4.0 * PI * mult * w(m as f64);
            f.constant -= 4.0 * PI * mult * w(m as f64);
        }
        f
    }))
}

/// Integrands for [`oracle_sphere_integral`]; Y indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereIntegrand {
    F2,
    E1F2,
    E2F2,
    FE22,
    E12Sq,
    E22Sq,
    YY(usize, usize),
    H2Y(usize),
}

impl SphereIntegrand {
    pub fn of(kind: IntegralKind) -> Self {
        match kind {
            IntegralKind::I00 => Self::F2,
            IntegralKind::I11 => Self::E1F2,
            IntegralKind::I22 => Self::E2F2,
            IntegralKind::I022 => Self::FE22,
            IntegralKind::I1212 => Self::E12Sq,
            IntegralKind::I2222 => Self::E22Sq,
        }
    }
}

/// Gauss–Legendre in cos θ × trapezoid in φ of an integrand built from the
/// jet. Gauss nodes are interior, so no node sits on a pole.
pub fn oracle_sphere_integral(
    c: &HarmonicCoefficients,
    integrand: SphereIntegrand,
    resolution: (usize, usize),
) -> Result<f64> {
    let ell = c.ell();
    let (nt, np) = resolution;
    if nt < 4 * ell || np < 8 * ell {
        return Err(Error::domain(format!(
            "resolution ({nt}, {np}) below (4l, 8l) for l = {ell}"
        )));
    }
    if let SphereIntegrand::YY(i, j) = integrand {
        if !(1..=5).contains(&i) || !(1..=5).contains(&j) {
            return Err(Error::domain(format!("Y index ({i}, {j}) outside 1..=5")));
        }
    }
    if let SphereIntegrand::H2Y(i) = integrand {
        if !(1..=5).contains(&i) {
            return Err(Error::domain(format!("Y index {i} outside 1..=5")));
        }
    }
    let cov = jet_covariance(ell)?;
    let rule = gauss_legendre_rule(nt)?;
    let dphi = 2.0 * PI / np as f64;
    let rows: Vec<f64> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| -> Result<f64> {
            let theta = z.acos();
            let mut acc = 0.0;
            for k in 0..np {
                let jet = evaluate_jet(c, SpherePoint::new(theta, k as f64 * dphi))?;
                acc += match integrand {
                    SphereIntegrand::F2 => jet.f * jet.f,
                    SphereIntegrand::E1F2 => jet.g1 * jet.g1,
                    SphereIntegrand::E2F2 => jet.g2 * jet.g2,
                    SphereIntegrand::FE22 => jet.f * jet.h22,
                    SphereIntegrand::E12Sq => jet.h12 * jet.h12,
                    SphereIntegrand::E22Sq => jet.h22 * jet.h22,
                    SphereIntegrand::YY(i, j) => {
                        let y = y_vector(&jet, &cov);
                        y[i - 1] * y[j - 1]
                    }
                    SphereIntegrand::H2Y(i) => {
                        let y = y_vector(&jet, &cov)[i - 1];
                        y * y - 1.0
                    }
                };
            }
            Ok(w * acc * dphi)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

/// Flag coefficient [2 k].
fn flag(k: usize) -> f64 {
    if k == 1 {
        PI / 2.0
    } else {
        1.0
    }
}

/// Wiener-chaos projections of the Lipschitz–Killing curvatures of the
/// excursion set: k = 0 the EPC, k = 1 half the boundary length, k = 2 the
/// area. Order 0 is the mean; order 2 the leading second-chaos term.
pub fn lk_projection(
    k: usize,
    order: usize,
    u: f64,
    ell: usize,
    coeffs: Option<&HarmonicCoefficients>,
) -> Result<f64> {
    if k > 2 {
        return Err(Error::domain(format!("curvature index {k} not in 0..=2")));
    }
    check_ell(ell)?;
    let lam = eigenvalue(ell);
    let (pdf, sf) = (std_normal_pdf(u), std_normal_sf(u));
    match order {
        0 => Ok(match k {
            0 => lam * u * pdf + 2.0 * sf,
            1 => 4.0 * PI * (lam / 2.0).sqrt() * (PI / 8.0).sqrt() * pdf,
            _ => 4.0 * PI * sf,
        }),
        2 => {
            let c = coeffs.ok_or_else(|| Error::domain("order-2 projection needs coefficients"))?;
            if c.ell() != ell {
                return Err(Error::domain(format!("coefficients have l = {}, expected {ell}", c.ell())));
            }
            let int_h2 = 4.0 * PI / (2 * ell + 1) as f64 * c.centered_power();
            let e = (2 - k) as f64;
            Ok(0.5
                * flag(k)
                * (lam / 2.0).powf(e / 2.0)
                * hermite(1, u)?
                * hermite(2 - k, u)?
                * pdf
                * (2.0 * PI).powf(-e / 2.0)
                * int_h2)
        }
        _ => Err(Error::domain(format!("projection order {order} not in {{0, 2}}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_beta_unit() {
        for ell in [2, 5, 50, 200] {
            let ab = AlphaBeta::new(ell).unwrap();
            assert!((ab.alpha.powi(2) + ab.beta.powi(2) - 1.0).abs() < 1e-14);
        }
        assert!(AlphaBeta::new(1).is_err());
    }

    #[test]
    fn phi_values() {
        let p0 = phi_coefficient(0, 2).unwrap();
        assert!((p0 - 1.0 / ((2.0 * PI).sqrt() * 3f64.sqrt())).abs() < 1e-15);
        assert_eq!(phi_coefficient(1, 9).unwrap(), 0.0);
        assert_eq!(phi_coefficient(2, 9).unwrap(), -phi_coefficient(0, 9).unwrap());
    }

    #[test]
    fn psi_parse() {
        assert_eq!("psi3355".parse::<PsiPattern>().unwrap(), PsiPattern::P3355);
        assert_eq!("4444".parse::<PsiPattern>().unwrap(), PsiPattern::P4444);
        assert!("psi3356".parse::<PsiPattern>().is_err());
        assert_eq!(psi(PsiPattern::P3455, 2.0, 7).unwrap(), 0.0);
    }

    #[test]
    fn k4_at_zero() {
        let c = hk_coefficients(0.0, 2).unwrap();
        assert!((c.k[3] + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(c.k[4], 0.0);
        assert_eq!(c.k[0], c.k[1]);
        assert_eq!(c.h(3, 4).unwrap(), 0.0);
        assert_eq!(c.h(5, 3).unwrap(), c.h35);
    }
}
