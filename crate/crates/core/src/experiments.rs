//! Monte Carlo harness: sample fields, estimate χ(A_u) per threshold, and
//! summarise against the mean formula and the second-chaos projection.
//!
//! Every number in the report is a deterministic function of the stored
//! records, so `records.csv` alone reproduces `report.json`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chaos_expansion::{proj2_factor, proj2_variance};
use crate::eigenfield::sample_coefficients;
use crate::excursion_geometry::{
    build_mesh, epc_variance_leading, expected_epc, find_critical_points, morse_epc,
    MeshSynthesizer, NewtonParams, SimplexMinima,
};
use crate::specfun::{std_normal_pdf, std_normal_quantile};
use crate::{Error, Result, VERSION};

/// Fewest samples for which a statistic is reported.
pub const MIN_SAMPLES: usize = 100;

/// Multiple of the standard error allowed for mean/variance agreement.
pub const SE_FACTOR: f64 = 3.0;

/// Largest non-Morse fraction before a run is marked degraded.
pub const DEGRADED_FRACTION: f64 = 0.05;

/// Ceiling on the residual ratio at the top of the ℓ-ladder.
pub const RESIDUAL_RATIO_CEILING: f64 = 0.5;

/// Ceiling on the Wasserstein distance at the top of the ℓ-ladder.
pub const WASSERSTEIN_CEILING: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Morse,
    Discrete,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub degrees: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub n_samples: usize,
    pub base_seed: u64,
    pub mesh_resolution: (usize, usize),
    pub estimator: Estimator,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.degrees.is_empty() || self.thresholds.is_empty() {
            return bad("degrees and thresholds must be nonempty".into());
        }
        if self.degrees.iter().any(|&l| l < 2) {
            return bad("every degree must be at least 2".into());
        }
        if !self.degrees.windows(2).all(|w| w[0] < w[1]) {
            return bad("degrees must be strictly increasing".into());
        }
        if self.thresholds.iter().any(|u| !u.is_finite()) {
            return bad("thresholds must be finite".into());
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return bad("thresholds must be strictly increasing".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.base_seed.checked_add(self.n_samples as u64).is_none() {
            return bad("base_seed + n_samples overflows".into());
        }
        let (nt, np) = self.mesh_resolution;
        if self.estimator != Estimator::Morse && (nt < 16 || np < 32 || np % 2 == 1) {
            return bad(format!("mesh resolution ({nt}, {np}) needs n_theta >= 16 and even n_phi >= 32"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Compact JSON, the canonical form that is hashed.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// One (sample, threshold) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub ell: usize,
    pub seed: u64,
    pub u: f64,
    /// The χ used for statistics: the mesh estimate unless only Morse ran.
    pub chi: Option<i64>,
    pub chi_discrete: Option<i64>,
    pub chi_morse: Option<i64>,
    pub proj2: f64,
    /// S = Σ_m (|a_ℓm|² − 1).
    pub power: f64,
    pub morse_valid: Option<bool>,
}

impl SampleRecord {
    /// Whether both estimators ran and agree; None when not comparable.
    pub fn agree(&self) -> Option<bool> {
        match (self.chi_discrete, self.chi_morse) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        }
    }
}

fn sample_rows(
    config: &ExperimentConfig,
    ell: usize,
    seed: u64,
    synth: Option<&(crate::excursion_geometry::SphereMesh, MeshSynthesizer)>,
) -> Result<Vec<SampleRecord>> {
    let c = sample_coefficients(ell, seed)?;
    let power = c.centered_power();
    let minima = match synth {
        Some((mesh, s)) => Some(SimplexMinima::new(mesh, &s.values(&c)?)?),
        None => None,
    };
    let critical = if config.estimator == Estimator::Discrete {
        None
    } else {
        Some(find_critical_points(&c, 4 * ell, NewtonParams::default())?)
    };
    let morse_valid = critical.as_ref().map(|s| s.is_morse());
    Ok(config
        .thresholds
        .iter()
        .map(|&u| {
            let chi_discrete = minima.as_ref().map(|m| m.epc(u));
            let chi_morse = match &critical {
                Some(s) if s.is_morse() => morse_epc(&s.points, u).ok(),
                _ => None,
            };
            let chi = if config.estimator == Estimator::Morse { chi_morse } else { chi_discrete };
            SampleRecord {
                ell,
                seed,
                u,
                chi,
                chi_discrete,
                chi_morse,
                proj2: proj2_factor(ell, u) * power,
                power,
                morse_valid,
            }
        })
        .collect())
}

/// Samples every (ℓ, seed) in parallel; rows come back in (ℓ, seed, u) order
/// whatever the schedule.
pub fn run_samples(config: &ExperimentConfig) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let (nt, np) = config.mesh_resolution;
    let mut out = Vec::new();
    for &ell in &config.degrees {
        let synth = if config.estimator == Estimator::Morse {
            None
        } else {
            let mesh = build_mesh(nt, np)?;
            let s = MeshSynthesizer::new(&mesh, ell);
            Some((mesh, s))
        };
        let rows: Vec<Vec<SampleRecord>> = (0..config.n_samples as u64)
            .into_par_iter()
            .map(|i| sample_rows(config, ell, config.base_seed + i, synth.as_ref()))
            .collect::<Result<_>>()?;
        out.extend(rows.into_iter().flatten());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub records: Vec<SampleRecord>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let records = run_samples(config)?;
    let report = build_report(config, &records)?;
    Ok(ExperimentRun { report, records })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample variance.
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let s2 = variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

fn need(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { n, min: MIN_SAMPLES });
    }
    Ok(())
}

/// (x − mean)/sd with the unbiased sd; None if the samples are constant.
pub fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let sd = variance(xs).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

/// W₁ between the empirical law of `samples` (used as given) and N(0, 1).
pub fn wasserstein_to_standard_normal(samples: &[f64]) -> Result<f64> {
    need(samples.len())?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x - std_normal_quantile((i as f64 + 0.5) / n)).abs())
        .sum::<f64>()
        / n)
}

/// m₄ − 3m₂² of the standardized samples (population moments).
pub fn fourth_cumulant(samples: &[f64]) -> Result<f64> {
    need(samples.len())?;
    let n = samples.len() as f64;
    let m = mean(samples);
    let m2 = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(Error::domain("fourth cumulant of constant samples"));
    }
    let m4 = samples.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    Ok(m4 / (m2 * m2) - 3.0)
}

fn degenerate_level(u: f64) -> bool {
    u == 0.0 || u.abs() == 1.0
}

/// χ values at (ℓ, u) over the samples where χ is defined.
fn chi_column(records: &[SampleRecord], ell: usize, u: f64) -> Vec<(u64, f64)> {
    records
        .iter()
        .filter(|r| r.ell == ell && r.u == u)
        .filter_map(|r| r.chi.map(|c| (r.seed, c as f64)))
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Pearson correlation of χ(u₁) and χ(u₂) at degree ℓ over samples where
/// both are defined.
pub fn threshold_correlation(records: &[SampleRecord], ell: usize, u1: f64, u2: f64) -> Result<f64> {
    if degenerate_level(u1) || degenerate_level(u2) {
        return Err(Error::domain(format!("thresholds {u1}, {u2} include a degenerate level")));
    }
    let a = chi_column(records, ell, u1);
    let b = chi_column(records, ell, u2);
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain(format!("thresholds {u1}, {u2} not both present at l = {ell}")));
    }
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for (s, x) in &a {
        if let Some((_, y)) = b.iter().find(|(t, _)| t == s) {
            xa.push(*x);
            xb.push(*y);
        }
    }
    need(xa.len())?;
    pearson(&xa, &xb)
}

/// Var χ(0) / Var χ(u_ref).
pub fn berry_ratio(records: &[SampleRecord], ell: usize, u_ref: f64) -> Result<f64> {
    if degenerate_level(u_ref) {
        return Err(Error::domain(format!("reference level {u_ref} is degenerate")));
    }
    let zero: Vec<f64> = chi_column(records, ell, 0.0).into_iter().map(|x| x.1).collect();
    let other: Vec<f64> = chi_column(records, ell, u_ref).into_iter().map(|x| x.1).collect();
    if zero.is_empty() || other.is_empty() {
        return Err(Error::domain(format!("records at l = {ell} lack u = 0 or u = {u_ref}")));
    }
    need(zero.len().min(other.len()))?;
    let v = variance(&other);
    if !(v > 0.0) {
        return Err(Error::UndefinedCorrelation(format!("zero variance at u = {u_ref}")));
    }
    Ok(variance(&zero) / v)
}

/// Sign of H₁H₂φ at u; the rank-one chaos term predicts corr → this sign
/// product.
fn chaos_sign(u: f64) -> f64 {
    (u * (u * u - 1.0) * std_normal_pdf(u)).signum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub ell: usize,
    pub u: f64,
    pub n: usize,
    pub chi_mean: f64,
    pub chi_var: Option<f64>,
    pub theory_mean: f64,
    /// (mean − theory)/se.
    pub mean_z: Option<f64>,
    pub mean_pass: Option<bool>,
    pub theory_var_leading: f64,
    pub proj2_var_exact: f64,
    pub proj2_var_emp: Option<f64>,
    pub proj2_var_se: Option<f64>,
    pub proj2_var_pass: Option<bool>,
    /// E[(χ − mean − proj2)²]/Var χ.
    pub residual_ratio: Option<f64>,
    pub wasserstein: Option<f64>,
    pub chi_fourth_cumulant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub u1: f64,
    pub u2: f64,
    pub corr: Option<f64>,
    /// corr times the predicted sign, → 1 under full degeneracy.
    pub aligned: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub ell: usize,
    pub n_samples: usize,
    pub non_morse_rate: Option<f64>,
    pub degraded: bool,
    /// (agreeing, compared) over Morse-valid samples.
    pub estimator_agreement: Option<(usize, usize)>,
    pub correlations: Vec<CorrelationEntry>,
    pub berry_ratio: Option<f64>,
    pub berry_u_ref: Option<f64>,
    pub proj2_fourth_cumulant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub name: String,
    pub u: Option<f64>,
    pub degrees: Vec<usize>,
    pub values: Vec<Option<f64>>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub degraded: bool,
    pub levels: Vec<LevelStats>,
    pub degrees: Vec<DegreeStats>,
    pub trends: Vec<TrendVerdict>,
}

impl ExperimentReport {
    pub fn level(&self, ell: usize, u: f64) -> Option<&LevelStats> {
        self.levels.iter().find(|l| l.ell == ell && l.u == u)
    }

    pub fn degree(&self, ell: usize) -> Option<&DegreeStats> {
        self.degrees.iter().find(|d| d.ell == ell)
    }

    pub fn trend(&self, name: &str, u: Option<f64>) -> Option<&TrendVerdict> {
        self.trends.iter().find(|t| t.name == name && t.u == u)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn level_stats(records: &[SampleRecord], ell: usize, u: f64) -> Result<LevelStats> {
    let rows: Vec<&SampleRecord> =
        records.iter().filter(|r| r.ell == ell && r.u == u && r.chi.is_some()).collect();
    let n = rows.len();
    let chi: Vec<f64> = rows.iter().map(|r| r.chi.unwrap() as f64).collect();
    let proj: Vec<f64> = rows.iter().map(|r| r.proj2).collect();
    let enough = n >= MIN_SAMPLES;
    let chi_mean = if n > 0 { mean(&chi) } else { f64::NAN };
    let chi_var = (n >= 2).then(|| variance(&chi));
    let theory_mean = expected_epc(ell, u);
    let se = chi_var.map(|v| (v / n as f64).sqrt());
    let mean_z = se.filter(|s| *s > 0.0).map(|s| (chi_mean - theory_mean) / s);
    let proj2_var_exact = proj2_variance(ell, u)?;
    let proj2_var_emp = (n >= 2).then(|| variance(&proj));
    let proj2_var_se = (n >= 2).then(|| variance_se(&proj));
    let residual_ratio = chi_var.filter(|v| *v > 0.0).map(|v| {
        chi.iter().zip(&proj).map(|(c, p)| (c - chi_mean - p).powi(2)).sum::<f64>() / n as f64 / v
    });
    let std_chi = standardize(&chi);
    Ok(LevelStats {
        ell,
        u,
        n,
        chi_mean,
        chi_var,
        theory_mean,
        mean_z,
        mean_pass: if enough { mean_z.map(|z| z.abs() <= SE_FACTOR) } else { None },
        theory_var_leading: epc_variance_leading(ell, u),
        proj2_var_exact,
        proj2_var_emp,
        proj2_var_se,
        proj2_var_pass: match (enough, proj2_var_emp, proj2_var_se) {
            (true, Some(v), Some(s)) => Some((v - proj2_var_exact).abs() <= SE_FACTOR * s),
            _ => None,
        },
        residual_ratio,
        wasserstein: match (&std_chi, enough) {
            (Some(z), true) => Some(wasserstein_to_standard_normal(z)?),
            _ => None,
        },
        chi_fourth_cumulant: match (&std_chi, enough) {
            (Some(z), true) => Some(fourth_cumulant(z)?),
            _ => None,
        },
    })
}

fn degree_stats(config: &ExperimentConfig, records: &[SampleRecord], ell: usize) -> Result<DegreeStats> {
    let first_u = config.thresholds[0];
    let per_sample: Vec<&SampleRecord> =
        records.iter().filter(|r| r.ell == ell && r.u == first_u).collect();
    let n_samples = per_sample.len();
    let non_morse_rate = if config.estimator == Estimator::Discrete || n_samples == 0 {
        None
    } else {
        let bad = per_sample.iter().filter(|r| r.morse_valid == Some(false)).count();
        Some(bad as f64 / n_samples as f64)
    };
    let degraded = non_morse_rate.is_some_and(|r| r > DEGRADED_FRACTION);
    let estimator_agreement = (config.estimator == Estimator::Both).then(|| {
        let cmp: Vec<bool> = records.iter().filter(|r| r.ell == ell).filter_map(|r| r.agree()).collect();
        (cmp.iter().filter(|&&a| a).count(), cmp.len())
    });
    let usable: Vec<f64> = config.thresholds.iter().copied().filter(|u| !degenerate_level(*u)).collect();
    let mut correlations = Vec::new();
    for (i, &u1) in usable.iter().enumerate() {
        for &u2 in &usable[i + 1..] {
            let corr = threshold_correlation(records, ell, u1, u2).ok();
            correlations.push(CorrelationEntry {
                u1,
                u2,
                corr,
                aligned: corr.map(|c| c * chaos_sign(u1) * chaos_sign(u2)),
            });
        }
    }
    let berry_u_ref = usable.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs()));
    let berry = match berry_u_ref {
        Some(u) if config.thresholds.contains(&0.0) => berry_ratio(records, ell, u).ok(),
        _ => None,
    };
    let proj2_fourth_cumulant = match usable.first() {
        Some(&u) => {
            let p: Vec<f64> = records.iter().filter(|r| r.ell == ell && r.u == u).map(|r| r.proj2).collect();
            if p.len() >= MIN_SAMPLES {
                fourth_cumulant(&p).ok()
            } else {
                None
            }
        }
        None => None,
    };
    Ok(DegreeStats {
        ell,
        n_samples,
        non_morse_rate,
        degraded,
        estimator_agreement,
        correlations,
        berry_ratio: berry,
        berry_u_ref,
        proj2_fourth_cumulant,
    })
}

fn strictly(values: &[Option<f64>], decreasing: bool) -> Option<bool> {
    if values.len() < 2 {
        return None;
    }
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    let v = v?;
    Some(v.windows(2).all(|w| if decreasing { w[1] < w[0] } else { w[1] > w[0] }))
}

fn trends(config: &ExperimentConfig, levels: &[LevelStats], degrees: &[DegreeStats]) -> Vec<TrendVerdict> {
    let ells = config.degrees.clone();
    let mut out = Vec::new();
    let at = |ell: usize, u: f64| levels.iter().find(|l| l.ell == ell && l.u == u);
    for &u in config.thresholds.iter().filter(|u| !degenerate_level(**u)) {
        let rr: Vec<Option<f64>> = ells.iter().map(|&l| at(l, u).and_then(|s| s.residual_ratio)).collect();
        let pass = strictly(&rr, true)
            .map(|d| d && rr.last().copied().flatten().is_some_and(|x| x <= RESIDUAL_RATIO_CEILING));
        out.push(TrendVerdict { name: "residual_ratio".into(), u: Some(u), degrees: ells.clone(), values: rr, pass });
        let w: Vec<Option<f64>> = ells.iter().map(|&l| at(l, u).and_then(|s| s.wasserstein)).collect();
        let pass = match (w.first().copied().flatten(), w.last().copied().flatten()) {
            (Some(a), Some(b)) if w.len() >= 2 => Some(b < a && b <= WASSERSTEIN_CEILING),
            _ => None,
        };
        out.push(TrendVerdict { name: "wasserstein".into(), u: Some(u), degrees: ells.clone(), values: w, pass });
    }
    let k4: Vec<Option<f64>> = degrees.iter().map(|d| d.proj2_fourth_cumulant).collect();
    out.push(TrendVerdict {
        name: "proj2_fourth_cumulant".into(),
        u: None,
        degrees: ells.clone(),
        pass: strictly(&k4, true),
        values: k4,
    });
    if let Some(first) = degrees.first() {
        for (i, e) in first.correlations.iter().enumerate() {
            let vals: Vec<Option<f64>> =
                degrees.iter().map(|d| d.correlations.get(i).and_then(|c| c.aligned)).collect();
            out.push(TrendVerdict {
                name: format!("aligned_correlation_{}_{}", e.u1, e.u2),
                u: None,
                degrees: ells.clone(),
                pass: strictly(&vals, false),
                values: vals,
            });
        }
    }
    let berry: Vec<Option<f64>> = degrees.iter().map(|d| d.berry_ratio).collect();
    out.push(TrendVerdict {
        name: "berry_ratio".into(),
        u: None,
        degrees: ells,
        pass: strictly(&berry, true),
        values: berry,
    });
    out
}

/// Rebuilds the report from records alone.
pub fn build_report(config: &ExperimentConfig, records: &[SampleRecord]) -> Result<ExperimentReport> {
    config.validate()?;
    for r in records {
        let want = proj2_factor(r.ell, r.u) * r.power;
        if (r.proj2 - want).abs() > 1e-12 * want.abs().max(1e-300) && r.proj2 != want {
            return Err(Error::Consistency(format!(
                "proj2 {} at l={}, seed={}, u={} does not match power {}",
                r.proj2, r.ell, r.seed, r.u, r.power
            )));
        }
    }
    let mut levels = Vec::new();
    for &ell in &config.degrees {
        for &u in &config.thresholds {
            levels.push(level_stats(records, ell, u)?);
        }
    }
    let degrees: Vec<DegreeStats> =
        config.degrees.iter().map(|&l| degree_stats(config, records, l)).collect::<Result<_>>()?;
    let trends = trends(config, &levels, &degrees);
    Ok(ExperimentReport {
        version: VERSION.to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        degraded: degrees.iter().any(|d| d.degraded),
        levels,
        degrees,
        trends,
    })
}

/// Header lines shared by every CSV output.
pub fn header_block(config_hash: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!("# sphere-epc {VERSION}\n# config_hash: {config_hash}\n");
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

const RECORD_COLUMNS: &str = "ell,seed,u,chi,chi_discrete,chi_morse,proj2,power,morse_valid";

pub fn records_to_csv(config: &ExperimentConfig, records: &[SampleRecord]) -> String {
    let mut s = header_block(&config.hash(), &[("config", config.canonical_json())]);
    s.push_str(RECORD_COLUMNS);
    s.push('\n');
    let opt = |x: Option<i64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.ell,
            r.seed,
            fmt_f64(r.u),
            opt(r.chi),
            opt(r.chi_discrete),
            opt(r.chi_morse),
            fmt_f64(r.proj2),
            fmt_f64(r.power),
            r.morse_valid.map(|b| b.to_string()).unwrap_or_default(),
        );
    }
    s
}

/// Parses a records file written by [`records_to_csv`], recovering the
/// config from its header and checking the header hash.
pub fn records_from_csv(text: &str) -> Result<(ExperimentConfig, Vec<SampleRecord>)> {
    let schema = |m: String| Error::Config(format!("records: {m}"));
    let mut config = None;
    let mut hash = None;
    let mut lines = text.lines().enumerate();
    let mut saw_columns = false;
    let mut records = Vec::new();
    for (no, line) in &mut lines {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix("config_hash: ") {
                hash = Some(v.to_string());
            } else if let Some(v) = rest.strip_prefix("config: ") {
                config = Some(ExperimentConfig::from_json(v)?);
            }
            continue;
        }
        if !saw_columns {
            if line != RECORD_COLUMNS {
                return Err(schema(format!("line {}: expected column header {RECORD_COLUMNS}", no + 1)));
            }
            saw_columns = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(schema(format!("line {}: expected 9 fields, got {}", no + 1, f.len())));
        }
        let bad = |what: &str| schema(format!("line {}: bad {what}", no + 1));
        let int = |s: &str, what: &str| -> Result<Option<i64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        records.push(SampleRecord {
            ell: f[0].parse().map_err(|_| bad("ell"))?,
            seed: f[1].parse().map_err(|_| bad("seed"))?,
            u: f[2].parse().map_err(|_| bad("u"))?,
            chi: int(f[3], "chi")?,
            chi_discrete: int(f[4], "chi_discrete")?,
            chi_morse: int(f[5], "chi_morse")?,
            proj2: f[6].parse().map_err(|_| bad("proj2"))?,
            power: f[7].parse().map_err(|_| bad("power"))?,
            morse_valid: match f[8] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad("morse_valid")),
            },
        });
    }
    let config = config.ok_or_else(|| schema("missing config header".into()))?;
    if hash.as_deref() != Some(config.hash().as_str()) {
        return Err(schema("config hash does not match the embedded config".into()));
    }
    if !saw_columns {
        return Err(schema("missing column header".into()));
    }
    Ok((config, records))
}
