//! Excursion sets A_u = {f ≥ u} and their Euler–Poincaré characteristic.
//!
//! Two independent estimators are provided: a combinatorial one on a
//! latitude–longitude triangulation and a Morse one that locates and
//! classifies every critical point. The closed-form mean, leading variance
//! and Lipschitz–Killing curvatures live here as well.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenfield::{evaluate_jet, HarmonicCoefficients, JetVector, SpherePoint, POLE_GUARD};
use crate::specfun::{gaussian_minkowski_rho, normalized_legendre_row, std_normal_pdf, std_normal_sf};
use crate::{eigenvalue, Error, Result};

/// A closed triangulated sphere: two pole vertices plus n_θ−1 rings of n_φ
/// vertices, each quad split along one diagonal, pole fans closing the caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMesh {
    pub n_theta: usize,
    pub n_phi: usize,
    pub vertices: Vec<SpherePoint>,
    pub edges: Vec<[u32; 2]>,
    pub triangles: Vec<[u32; 3]>,
}

impl SphereMesh {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Sum of the spherical excesses of all triangles.
    pub fn total_area(&self) -> f64 {
        let xyz: Vec<[f64; 3]> = self.vertices.iter().map(|p| p.to_cartesian()).collect();
        self.triangles
            .iter()
            .map(|t| spherical_triangle_area(xyz[t[0] as usize], xyz[t[1] as usize], xyz[t[2] as usize]))
            .sum()
    }

    pub fn north(&self) -> usize {
        0
    }

    pub fn south(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Largest angular spacing of the grid, used to size interpolation margins.
    pub fn spacing(&self) -> f64 {
        (PI / self.n_theta as f64).max(2.0 * PI / self.n_phi as f64)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Van Oosterom–Strackee formula.
pub fn spherical_triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let num = dot(a, cross(b, c)).abs();
    let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * num.atan2(den)
}

pub fn build_mesh(n_theta: usize, n_phi: usize) -> Result<SphereMesh> {
    if n_theta < 16 || n_phi < 32 || n_phi % 2 != 0 {
        return Err(Error::domain(format!(
            "mesh resolution ({n_theta}, {n_phi}) needs n_theta >= 16 and even n_phi >= 32"
        )));
    }
    let rings = n_theta - 1;
    let nv = 2 + rings * n_phi;
    if nv > u32::MAX as usize / 4 {
        return Err(Error::domain("mesh too large"));
    }
    let mut vertices = Vec::with_capacity(nv);
    vertices.push(SpherePoint::new(0.0, 0.0));
    for i in 1..n_theta {
        let theta = i as f64 * PI / n_theta as f64;
        for j in 0..n_phi {
            vertices.push(SpherePoint::new(theta, j as f64 * 2.0 * PI / n_phi as f64));
        }
    }
    vertices.push(SpherePoint::new(PI, 0.0));
    let south = (nv - 1) as u32;
    let v = |i: usize, j: usize| (1 + (i - 1) * n_phi + j % n_phi) as u32;

    let mut edges = Vec::with_capacity(3 * nv);
    let mut triangles = Vec::with_capacity(2 * nv);
    for j in 0..n_phi {
        edges.push([0, v(1, j)]);
        edges.push([v(rings, j), south]);
        triangles.push([0, v(1, j), v(1, j + 1)]);
        triangles.push([v(rings, j), south, v(rings, j + 1)]);
    }
    for i in 1..=rings {
        for j in 0..n_phi {
            edges.push([v(i, j), v(i, j + 1)]);
            if i < rings {
                let (a, b, c, d) = (v(i, j), v(i, j + 1), v(i + 1, j), v(i + 1, j + 1));
                edges.push([a, c]);
                edges.push([a, d]);
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
    }
    Ok(SphereMesh { n_theta, n_phi, vertices, edges, triangles })
}

/// Evaluates degree-ℓ fields on every vertex of a mesh, reusing the
/// Legendre and trigonometric tables across samples.
#[derive(Debug, Clone)]
pub struct MeshSynthesizer {
    ell: usize,
    n_theta: usize,
    n_phi: usize,
    /// ring-major Q_ℓ^m(cos θ_i)
    legendre: Vec<f64>,
    /// φ-major cos(mφ_j), sin(mφ_j)
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl MeshSynthesizer {
    pub fn new(mesh: &SphereMesh, ell: usize) -> Self {
        let w = ell + 1;
        let mut legendre = Vec::with_capacity((mesh.n_theta - 1) * w);
        for i in 1..mesh.n_theta {
            let theta = i as f64 * PI / mesh.n_theta as f64;
            legendre.extend(normalized_legendre_row(ell, theta.cos(), theta.sin()).0);
        }
        let mut cos = Vec::with_capacity(mesh.n_phi * w);
        let mut sin = Vec::with_capacity(mesh.n_phi * w);
        for j in 0..mesh.n_phi {
            let phi = j as f64 * 2.0 * PI / mesh.n_phi as f64;
            for m in 0..w {
                let (s, c) = (m as f64 * phi).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self { ell, n_theta: mesh.n_theta, n_phi: mesh.n_phi, legendre, cos, sin }
    }

    pub fn values(&self, c: &HarmonicCoefficients) -> Result<Vec<f64>> {
        if c.ell() != self.ell {
            return Err(Error::domain(format!("synthesizer built for l={}, got {}", self.ell, c.ell())));
        }
        let w = self.ell + 1;
        let (re, im) = (c.re(), c.im());
        let mut out = Vec::with_capacity(2 + (self.n_theta - 1) * self.n_phi);
        out.push(re[0]);
        let mut alpha = vec![0.0; w];
        let mut beta = vec![0.0; w];
        for ring in self.legendre.chunks_exact(w) {
            for m in 0..w {
                let k = if m == 0 { 1.0 } else { 2.0 };
                alpha[m] = k * ring[m] * re[m];
                beta[m] = k * ring[m] * im[m];
            }
            for j in 0..self.n_phi {
                let cs = &self.cos[j * w..(j + 1) * w];
                let sn = &self.sin[j * w..(j + 1) * w];
                let mut f = 0.0;
                for m in 0..w {
                    f += alpha[m] * cs[m] - beta[m] * sn[m];
                }
                out.push(f);
            }
        }
        // Only the m = 0 harmonic survives at the poles; P_ℓ(−1) = (−1)^ℓ.
        out.push(if self.ell % 2 == 0 { re[0] } else { -re[0] });
        Ok(out)
    }
}

/// Per-simplex minima, so that χ at any threshold is a signed count.
#[derive(Debug, Clone)]
pub struct SimplexMinima {
    vertex: Vec<f64>,
    edge: Vec<f64>,
    triangle: Vec<f64>,
}

impl SimplexMinima {
    pub fn new(mesh: &SphereMesh, values: &[f64]) -> Result<Self> {
        if values.len() != mesh.vertices.len() {
            return Err(Error::domain("value count does not match the mesh"));
        }
        let v = |i: u32| values[i as usize];
        Ok(Self {
            vertex: values.to_vec(),
            edge: mesh.edges.iter().map(|e| v(e[0]).min(v(e[1]))).collect(),
            triangle: mesh.triangles.iter().map(|t| v(t[0]).min(v(t[1])).min(v(t[2]))).collect(),
        })
    }

    /// V_u − E_u + F_u of the subcomplex spanned by vertices with f ≥ u.
    pub fn epc(&self, u: f64) -> i64 {
        let count = |xs: &[f64]| xs.iter().filter(|&&x| x >= u).count() as i64;
        count(&self.vertex) - count(&self.edge) + count(&self.triangle)
    }
}

pub fn mesh_values(mesh: &SphereMesh, c: &HarmonicCoefficients) -> Result<Vec<f64>> {
    MeshSynthesizer::new(mesh, c.ell()).values(c)
}

pub fn discrete_epc(mesh: &SphereMesh, c: &HarmonicCoefficients, u: f64) -> Result<i64> {
    Ok(SimplexMinima::new(mesh, &mesh_values(mesh, c)?)?.epc(u))
}

/// Newton and classification tolerances for the critical-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    pub max_iter: usize,
    /// Stop when |∇f| ≤ grad_tol_rel · √(λ/2).
    pub grad_tol_rel: f64,
    /// Flag |det ∇²f| < degeneracy_rel · λ²/8.
    pub degeneracy_rel: f64,
    /// |value − u| below this is a threshold collision.
    pub tie_tol: f64,
    /// Extra density doublings allowed when the Morse sum is not 2.
    pub max_refinements: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { max_iter: 40, grad_tol_rel: 1e-11, degeneracy_rel: 1e-8, tie_tol: 1e-10, max_refinements: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: SpherePoint,
    pub value: f64,
    /// Number of negative eigenvalues of −∇²f: 0 max, 1 saddle, 2 min.
    pub morse_index: u8,
    pub hessian_eigs: [f64; 2],
    pub newton_residual: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalDiagnostics {
    pub grid_density: usize,
    pub seeds: usize,
    pub skipped_seeds: usize,
    pub degenerate: usize,
    pub morse_sum: i64,
    pub refinements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub diagnostics: CriticalDiagnostics,
}

impl CriticalSet {
    /// Non-degenerate points whose alternating count is χ(𝕊²) = 2.
    pub fn is_morse(&self) -> bool {
        self.diagnostics.degenerate == 0 && self.diagnostics.morse_sum == 2
    }

    /// (maxima, saddles, minima) with value ≥ u.
    pub fn counts_above(&self, u: f64) -> [usize; 3] {
        let mut c = [0; 3];
        for p in self.points.iter().filter(|p| p.value >= u) {
            c[p.morse_index as usize] += 1;
        }
        c
    }
}

/// Unit tangent frame (e₁ = ∂_θ, e₂ = ∂_φ / sin θ) at p.
fn frame(p: SpherePoint) -> ([f64; 3], [f64; 3]) {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    ([ct * cp, ct * sp, -st], [-sp, cp, 0.0])
}

/// Moves from p along the geodesic with initial tangent v₁e₁ + v₂e₂.
fn exp_map(p: SpherePoint, v: [f64; 2]) -> SpherePoint {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n == 0.0 {
        return p;
    }
    let x = p.to_cartesian();
    let (e1, e2) = frame(p);
    let (s, c) = n.sin_cos();
    let mut y = [0.0; 3];
    for k in 0..3 {
        y[k] = c * x[k] + s * (v[0] * e1[k] + v[1] * e2[k]) / n;
    }
    SpherePoint::from_cartesian(y)
}

enum NewtonOutcome {
    Converged(SpherePoint, JetVector, f64),
    Failed,
}

/// Riemannian Newton: solve ∇²f v = −∇f in the orthonormal frame and follow
/// the geodesic. The covariant Hessian is the Jacobian of the frame gradient
/// at a critical point, so convergence is quadratic without chart terms.
fn newton(c: &HarmonicCoefficients, seed: SpherePoint, params: &NewtonParams) -> NewtonOutcome {
    let lam = c.lambda();
    let tol = params.grad_tol_rel * (lam / 2.0).sqrt();
    let max_step = PI / (2.0 * c.ell() as f64);
    let mut p = seed;
    for _ in 0..=params.max_iter {
        let Ok(j) = evaluate_jet(c, p) else {
            return NewtonOutcome::Failed;
        };
        let g = (j.g1 * j.g1 + j.g2 * j.g2).sqrt();
        if g <= tol {
            return NewtonOutcome::Converged(p, j, g);
        }
        let det = j.hessian_det();
        if det == 0.0 || !det.is_finite() {
            return NewtonOutcome::Failed;
        }
        let mut v = [-(j.h22 * j.g1 - j.h12 * j.g2) / det, -(-j.h12 * j.g1 + j.h11 * j.g2) / det];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if n > max_step {
            v = [v[0] * max_step / n, v[1] * max_step / n];
        }
        p = exp_map(p, v);
    }
    NewtonOutcome::Failed
}

/// Grid nodes used to seed Newton: cell-centred rings θ_i = (i+½)π/d and
/// 2d longitudes.
fn seed_nodes(c: &HarmonicCoefficients, density: usize) -> Vec<SpherePoint> {
    let nt = density;
    let np = 2 * density;
    let grid: Vec<SpherePoint> = (0..nt)
        .flat_map(|i| {
            let theta = (i as f64 + 0.5) * PI / nt as f64;
            (0..np).map(move |j| SpherePoint::new(theta, j as f64 * 2.0 * PI / np as f64))
        })
        .collect();
    // Coordinate gradient (f_θ, f_φ); a zero inside a 3×3 node block needs
    // both components to take both signs there.
    let grads: Vec<[f64; 2]> = grid
        .par_iter()
        .map(|&p| {
            let j = evaluate_jet(c, p).expect("grid nodes avoid the poles");
            [j.g1, j.g2 * p.theta.sin()]
        })
        .collect();
    let at = |i: usize, j: usize| grads[i * np + j % np];
    let mut seeds = Vec::new();
    for i in 0..nt {
        for j in 0..np {
            if i == 0 || i + 1 == nt {
                seeds.push(grid[i * np + j]);
                continue;
            }
            let mut sign = [[false; 2]; 2];
            for di in 0..3 {
                for dj in 0..3 {
                    let g = at(i + di - 1, j + np + dj - 1);
                    for k in 0..2 {
                        sign[k][0] |= g[k] <= 0.0;
                        sign[k][1] |= g[k] >= 0.0;
                    }
                }
            }
            if sign.iter().all(|s| s[0] && s[1]) {
                seeds.push(grid[i * np + j]);
            }
        }
    }
    seeds
}

fn search_at_density(
    c: &HarmonicCoefficients,
    density: usize,
    params: &NewtonParams,
) -> (Vec<CriticalPoint>, CriticalDiagnostics) {
    let lam = c.lambda();
    let seeds = seed_nodes(c, density);
    let outcomes: Vec<NewtonOutcome> = seeds.par_iter().map(|&s| newton(c, s, params)).collect();
    let dedupe = PI / (8.0 * density as f64);
    let mut points: Vec<CriticalPoint> = Vec::new();
    // Accepted points bucketed in 3-d cells of side `dedupe`; a duplicate
    // lies in one of the 27 cells around the candidate.
    let cell = |x: [f64; 3]| x.map(|v| (v / dedupe).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut skipped = 0;
    for o in outcomes {
        let NewtonOutcome::Converged(p, j, res) = o else {
            skipped += 1;
            continue;
        };
        let k = cell(p.to_cartesian());
        let dup = (-1..=1).any(|a| {
            (-1..=1).any(|b| {
                (-1..=1).any(|c| {
                    buckets.get(&[k[0] + a, k[1] + b, k[2] + c]).is_some_and(|ids| {
                        ids.iter().any(|&i| points[i].location.geodesic_distance(p) <= dedupe)
                    })
                })
            })
        });
        if dup {
            continue;
        }
        buckets.entry(k).or_default().push(points.len());
        let eigs = j.hessian_eigs();
        let morse_index = eigs.iter().filter(|&&e| e > 0.0).count() as u8;
        points.push(CriticalPoint {
            location: p,
            value: j.f,
            morse_index,
            hessian_eigs: eigs,
            newton_residual: res,
            degenerate: j.hessian_det().abs() < params.degeneracy_rel * lam * lam / 8.0,
        });
    }
    points.sort_by(|a, b| {
        (a.location.theta, a.location.phi)
            .partial_cmp(&(b.location.theta, b.location.phi))
            .expect("finite locations")
    });
    let morse_sum = points.iter().map(|p| if p.morse_index == 1 { -1 } else { 1 }).sum();
    let degenerate = points.iter().filter(|p| p.degenerate).count();
    let diag = CriticalDiagnostics {
        grid_density: density,
        seeds: seeds.len(),
        skipped_seeds: skipped,
        degenerate,
        morse_sum,
        refinements: 0,
    };
    (points, diag)
}

/// Locates all critical points of f_ℓ by seeded Riemannian Newton.
///
/// Requires `grid_density ≥ 4ℓ`. When the alternating count differs from 2
/// the density is doubled up to `params.max_refinements` times; the returned
/// set then reports `is_morse() == false` if it never reached 2.
pub fn find_critical_points(
    c: &HarmonicCoefficients,
    grid_density: usize,
    params: NewtonParams,
) -> Result<CriticalSet> {
    if grid_density < 4 * c.ell() {
        return Err(Error::domain(format!(
            "grid density {grid_density} below 4l = {}",
            4 * c.ell()
        )));
    }
    let mut density = grid_density;
    let mut refinements = 0;
    loop {
        let (points, mut diag) = search_at_density(c, density, &params);
        diag.refinements = refinements;
        if diag.morse_sum == 2 || refinements >= params.max_refinements {
            return Ok(CriticalSet { points, diagnostics: diag });
        }
        density *= 2;
        refinements += 1;
    }
}

/// Σ_{value ≥ u} (−1)^{index}.
pub fn morse_epc(points: &[CriticalPoint], u: f64) -> Result<i64> {
    morse_epc_with_tol(points, u, NewtonParams::default().tie_tol)
}

pub fn morse_epc_with_tol(points: &[CriticalPoint], u: f64, tie_tol: f64) -> Result<i64> {
    if let Some(p) = points.iter().find(|p| (p.value - u).abs() < tie_tol) {
        return Err(Error::ThresholdCollision { u, value: p.value });
    }
    Ok(points
        .iter()
        .filter(|p| p.value >= u)
        .map(|p| if p.morse_index == 1 { -1 } else { 1 })
        .sum())
}

/// √(2/π)·e^{−u²/2}·u·λ/2 + 2(1 − Φ(u)).
pub fn expected_epc(ell: usize, u: f64) -> f64 {
    (2.0 / PI).sqrt() * (-0.5 * u * u).exp() * u * eigenvalue(ell) / 2.0 + 2.0 * std_normal_sf(u)
}

/// (ℓ³/(8π))·(u³ − u)²·e^{−u²}.
pub fn epc_variance_leading(ell: usize, u: f64) -> f64 {
    let l = ell as f64;
    l.powi(3) / (8.0 * PI) * (u * u * u - u).powi(2) * (-u * u).exp()
}

/// The same leading order written as ℓ·(λ/4)·(H₁(u)H₂(u)φ(u))², which
/// differs from [`epc_variance_leading`] by O(ℓ²).
pub fn epc_variance_leading_hermite(ell: usize, u: f64) -> f64 {
    let h = u * (u * u - 1.0) * std_normal_pdf(u);
    ell as f64 * eigenvalue(ell) / 4.0 * h * h
}

/// L₀ = 2, L₁ = 0, L₂ = (λ/2)·4π.
pub fn lipschitz_killing(k: usize, ell: usize) -> Result<f64> {
    match k {
        0 => Ok(2.0),
        1 => Ok(0.0),
        2 => Ok(eigenvalue(ell) / 2.0 * 4.0 * PI),
        _ => Err(Error::domain(format!("Lipschitz-Killing index {k} > 2"))),
    }
}

/// Σ_k L_k ρ_k(u), the Gaussian kinematic formula.
pub fn gkf_expected_epc(ell: usize, u: f64) -> f64 {
    (0..=2)
        .map(|k| lipschitz_killing(k, ell).unwrap() * gaussian_minkowski_rho(k, u).unwrap())
        .sum()
}

/// Distance from every critical value within which the mesh estimator may
/// disagree with the Morse one: the piecewise-linear interpolant misses an
/// extremum by at most ~ ½ λ h² for grid spacing h, doubled for safety.
pub fn generic_margin(mesh: &SphereMesh, ell: usize) -> f64 {
    let h = mesh.spacing();
    eigenvalue(ell) * h * h
}

/// Whether θ sits within the Newton pole guard (such points cannot be jets).
pub fn near_pole(p: SpherePoint) -> bool {
    p.theta < POLE_GUARD || PI - p.theta < POLE_GUARD
}
