//! Random spherical eigenfunctions of degree ℓ: coefficient sampling, field
//! and covariant 2-jet evaluation, and the jet covariance with its Cholesky
//! factor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::specfun::normalized_legendre_row;
use crate::{eigenvalue, Error, Result};

/// Minimum distance from either pole for jet evaluation (radians).
pub const POLE_GUARD: f64 = 1e-6;

/// Relative tolerance for the imaginary residue of the complex synthesis.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Coefficients a_{ℓm}, m = 0..=ℓ; negative m follow from
/// (−1)^m a_{ℓ,−m} = conj(a_{ℓm}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficients")]
pub struct HarmonicCoefficients {
    ell: usize,
    seed: u64,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    ell: usize,
    seed: u64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<RawCoefficients> for HarmonicCoefficients {
    type Error = Error;
    fn try_from(r: RawCoefficients) -> Result<Self> {
        HarmonicCoefficients::new(r.ell, r.seed, r.re, r.im)
    }
}

impl HarmonicCoefficients {
    pub fn new(ell: usize, seed: u64, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if ell == 0 {
            return Err(Error::domain("degree must be positive"));
        }
        if re.len() != ell + 1 || im.len() != ell + 1 {
            return Err(Error::domain(format!(
                "expected {} coefficients, got re={} im={}",
                ell + 1,
                re.len(),
                im.len()
            )));
        }
        if im[0] != 0.0 {
            return Err(Error::domain("a_{l0} must be real"));
        }
        if re.iter().chain(&im).any(|x| !x.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(Self { ell, seed, re, im })
    }

    /// Only a_{ℓ0} = value, everything else zero.
    pub fn zonal(ell: usize, value: f64) -> Result<Self> {
        let mut re = vec![0.0; ell + 1];
        re[0] = value;
        Self::new(ell, 0, re, vec![0.0; ell + 1])
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn lambda(&self) -> f64 {
        eigenvalue(self.ell)
    }

    /// a_{ℓm} for −ℓ ≤ m ≤ ℓ as (re, im).
    pub fn a(&self, m: i64) -> (f64, f64) {
        let k = m.unsigned_abs() as usize;
        assert!(k <= self.ell, "|m| > l");
        let (re, im) = (self.re[k], self.im[k]);
        if m >= 0 {
            (re, im)
        } else if k % 2 == 0 {
            (re, -im)
        } else {
            (-re, im)
        }
    }

    /// |a_{ℓm}|² for m ≥ 0.
    pub fn abs2(&self, m: usize) -> f64 {
        self.re[m] * self.re[m] + self.im[m] * self.im[m]
    }

    /// S = Σ_{m=−ℓ}^{ℓ} |a_{ℓm}|², a sum of 2ℓ+1 independent χ²₁ variables.
    pub fn power(&self) -> f64 {
        self.abs2(0) + 2.0 * (1..=self.ell).map(|m| self.abs2(m)).sum::<f64>()
    }

    /// Σ_{m=−ℓ}^{ℓ} (|a_{ℓm}|² − 1).
    pub fn centered_power(&self) -> f64 {
        self.power() - (2 * self.ell + 1) as f64
    }
}

/// Draws a_{ℓ0} ~ N(0,1) and Re, Im a_{ℓm} ~ N(0, 1/2) for m ≥ 1.
///
/// Each (ℓ, m) has its own ChaCha stream under `seed`, so draws do not depend
/// on evaluation order and the same seed gives unrelated fields at different ℓ.
pub fn sample_coefficients(ell: usize, seed: u64) -> Result<HarmonicCoefficients> {
    if ell == 0 {
        return Err(Error::domain("degree must be positive"));
    }
    let mut re = vec![0.0; ell + 1];
    let mut im = vec![0.0; ell + 1];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for m in 0..=ell {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((ell as u64) << 32) | m as u64);
        let x: f64 = rng.sample(StandardNormal);
        if m == 0 {
            re[0] = x;
        } else {
            let y: f64 = rng.sample(StandardNormal);
            re[m] = h * x;
            im[m] = h * y;
        }
    }
    HarmonicCoefficients::new(ell, seed, re, im)
}

/// Colatitude θ and longitude φ in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub theta: f64,
    pub phi: f64,
}

impl SpherePoint {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn to_cartesian(self) -> [f64; 3] {
        let s = self.theta.sin();
        [s * self.phi.cos(), s * self.phi.sin(), self.theta.cos()]
    }

    pub fn from_cartesian(x: [f64; 3]) -> Self {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let theta = (x[2] / r).clamp(-1.0, 1.0).acos();
        let phi = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        Self { theta, phi }
    }

    pub fn geodesic_distance(self, other: SpherePoint) -> f64 {
        let a = self.to_cartesian();
        let b = other.to_cartesian();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let cx = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let cross = (cx[0] * cx[0] + cx[1] * cx[1] + cx[2] * cx[2]).sqrt();
        cross.atan2(dot)
    }
}

/// Field value and covariant derivatives in the orthonormal frame
/// e₁ = ∂_θ, e₂ = (1/sin θ) ∂_φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetVector {
    pub f: f64,
    pub g1: f64,
    pub g2: f64,
    pub h11: f64,
    pub h12: f64,
    pub h22: f64,
}

impl JetVector {
    /// (g1, g2, h11, h12, h22), the vector whitened by Λ.
    pub fn derivatives(&self) -> [f64; 5] {
        [self.g1, self.g2, self.h11, self.h12, self.h22]
    }

    pub fn hessian_det(&self) -> f64 {
        self.h11 * self.h22 - self.h12 * self.h12
    }

    /// Eigenvalues of the covariant Hessian, ascending.
    pub fn hessian_eigs(&self) -> [f64; 2] {
        let mean = 0.5 * (self.h11 + self.h22);
        let r = (0.25 * (self.h11 - self.h22).powi(2) + self.h12 * self.h12).sqrt();
        [mean - r, mean + r]
    }
}

fn check_point(p: SpherePoint) -> Result<()> {
    if !(p.theta.is_finite() && p.phi.is_finite()) {
        return Err(Error::domain("non-finite sphere point"));
    }
    if !(0.0..=PI).contains(&p.theta) {
        return Err(Error::domain(format!("colatitude {} outside [0, pi]", p.theta)));
    }
    Ok(())
}

/// f_ℓ(p) by the complex synthesis over m = −ℓ..ℓ, asserting that the
/// imaginary part cancels.
pub fn evaluate_field(c: &HarmonicCoefficients, p: SpherePoint) -> Result<f64> {
    check_point(p)?;
    let (q, _) = normalized_legendre_row(c.ell, p.theta.cos(), p.theta.sin());
    let ell = c.ell as i64;
    let (mut re, mut im, mut scale) = (0.0, 0.0, 0.0);
    for m in -ell..=ell {
        let k = m.unsigned_abs() as usize;
        let sign = if m < 0 && k % 2 == 1 { -1.0 } else { 1.0 };
        let (br, bi) = {
            let (sn, cs) = (m as f64 * p.phi).sin_cos();
            (sign * q[k] * cs, sign * q[k] * sn)
        };
        let (ar, ai) = c.a(m);
        let tr = ar * br - ai * bi;
        let ti = ar * bi + ai * br;
        re += tr;
        im += ti;
        scale += tr.hypot(ti);
    }
    if im.abs() > IMAG_RESIDUE_TOL * scale.max(1.0) {
        return Err(Error::Consistency(format!(
            "imaginary residue {im:e} at theta={}, phi={}",
            p.theta, p.phi
        )));
    }
    Ok(re)
}

/// f_ℓ(p) by the real form a₀Q₀ + 2Σ_{m>0} Q_m (Re a_m cos mφ − Im a_m sin mφ).
pub fn evaluate_field_real(c: &HarmonicCoefficients, p: SpherePoint) -> f64 {
    let (q, _) = normalized_legendre_row(c.ell, p.theta.cos(), p.theta.sin());
    let mut f = c.re[0] * q[0];
    for m in 1..=c.ell {
        let (sn, cs) = (m as f64 * p.phi).sin_cos();
        f += 2.0 * q[m] * (c.re[m] * cs - c.im[m] * sn);
    }
    f
}

/// Covariant 2-jet at p, θ at least [`POLE_GUARD`] away from the poles.
pub fn evaluate_jet(c: &HarmonicCoefficients, p: SpherePoint) -> Result<JetVector> {
    check_point(p)?;
    if p.theta < POLE_GUARD || PI - p.theta < POLE_GUARD {
        return Err(Error::domain(format!("colatitude {} too close to a pole", p.theta)));
    }
    let (z, s) = (p.theta.cos(), p.theta.sin());
    let (q, qp) = normalized_legendre_row(c.ell, z, s);
    let lam = c.lambda();
    let lf = c.ell as f64;
    let (mut f, mut ft, mut fp, mut ftt, mut ftp, mut fpp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for m in 0..=c.ell {
        let mf = m as f64;
        let qt = -((lf * lf - mf * mf).sqrt() * qp[m] - lf * z * q[m]) / s;
        let qtt = -(z / s) * qt - (lam - mf * mf / (s * s)) * q[m];
        let (e, ep) = if m == 0 {
            (c.re[0], 0.0)
        } else {
            let (sn, cs) = (mf * p.phi).sin_cos();
            (
                2.0 * (c.re[m] * cs - c.im[m] * sn),
                -2.0 * mf * (c.re[m] * sn + c.im[m] * cs),
            )
        };
        f += q[m] * e;
        ft += qt * e;
        ftt += qtt * e;
        fp += q[m] * ep;
        ftp += qt * ep;
        fpp -= mf * mf * q[m] * e;
    }
    Ok(JetVector {
        f,
        g1: ft,
        g2: fp / s,
        h11: ftt,
        h12: (ftp - z / s * fp) / s,
        h22: (fpp + s * z * ft) / (s * s),
    })
}

/// Covariance of (g1, g2, h11, h12, h22) and its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetCovariance {
    pub ell: usize,
    pub sigma: [[f64; 5]; 5],
    /// λ₁..λ₅.
    pub lambda_factors: [f64; 5],
}

impl JetCovariance {
    /// Lower-triangular Λ with Λ Λᵗ = σ.
    pub fn lambda_matrix(&self) -> [[f64; 5]; 5] {
        let [l1, l2, l3, l4, l5] = self.lambda_factors;
        [
            [l1, 0.0, 0.0, 0.0, 0.0],
            [0.0, l1, 0.0, 0.0, 0.0],
            [0.0, 0.0, l3, 0.0, 0.0],
            [0.0, 0.0, 0.0, l4, 0.0],
            [0.0, 0.0, l2, 0.0, l5],
        ]
    }

    pub fn lambda_lambda_t(&self) -> [[f64; 5]; 5] {
        let l = self.lambda_matrix();
        let mut out = [[0.0; 5]; 5];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..5).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        out
    }
}

pub fn jet_covariance(ell: usize) -> Result<JetCovariance> {
    if ell < 2 {
        return Err(Error::domain("jet covariance needs l >= 2"));
    }
    let lam = eigenvalue(ell);
    let r2 = std::f64::consts::SQRT_2;
    let l1 = (lam / 2.0).sqrt();
    let l3 = lam.sqrt() * (3.0 * lam - 2.0).sqrt() / (2.0 * r2);
    let l4 = lam.sqrt() * (lam - 2.0).sqrt() / (2.0 * r2);
    let l2 = lam.sqrt() * (lam + 2.0) / (2.0 * r2 * (3.0 * lam - 2.0).sqrt());
    let l5 = lam * (lam - 2.0).sqrt() / (3.0 * lam - 2.0).sqrt();
    let k = lam * lam / 8.0;
    let c11 = k * (3.0 - 2.0 / lam);
    let c13 = k * (1.0 + 2.0 / lam);
    let c22 = k * (1.0 - 2.0 / lam);
    let a = lam / 2.0;
    let sigma = [
        [a, 0.0, 0.0, 0.0, 0.0],
        [0.0, a, 0.0, 0.0, 0.0],
        [0.0, 0.0, c11, 0.0, c13],
        [0.0, 0.0, 0.0, c22, 0.0],
        [0.0, 0.0, c13, 0.0, c11],
    ];
    Ok(JetCovariance { ell, sigma, lambda_factors: [l1, l2, l3, l4, l5] })
}

/// Y = Λ^{-1} (g1, g2, h11, h12, h22), a standard Gaussian 5-vector.
pub fn y_vector(jet: &JetVector, cov: &JetCovariance) -> [f64; 5] {
    let [l1, l2, l3, l4, l5] = cov.lambda_factors;
    let y3 = jet.h11 / l3;
    [jet.g1 / l1, jet.g2 / l1, y3, jet.h12 / l4, (jet.h22 - l2 * y3) / l5]
}
