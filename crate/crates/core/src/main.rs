//! `sphere-epc` command-line interface.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage or schema error,
//! 3 I/O error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use sphere_epc::chaos_expansion::{
    coefficient_table, hk_coefficients, second_chaos_projection, QuadraticForms,
};
use sphere_epc::eigenfield::{evaluate_jet, jet_covariance, sample_coefficients, SpherePoint};
use sphere_epc::excursion_geometry::{
    build_mesh, expected_epc, find_critical_points, generic_margin, gkf_expected_epc, mesh_values,
    morse_epc, NewtonParams, SimplexMinima,
};
use sphere_epc::experiments::{
    build_report, fmt_f64, header_block, records_from_csv, records_to_csv, run_experiment,
    Estimator, ExperimentConfig, ExperimentReport,
};
use sphere_epc::legendre_identities::identity_table;
use sphere_epc::specfun::gauss_legendre_rule;
use sphere_epc::{eigenvalue, Error, VERSION};

const DEFAULT_US: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
const DEFAULT_ELLS: [usize; 4] = [2, 5, 10, 50];
const IDENTITY_RULE_NODES: usize = 256;

#[derive(Parser)]
#[command(name = "sphere-epc", version, about = "Euler characteristic of excursion sets of random spherical harmonics")]
struct Cli {
    /// Size of the worker pool (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed forms of the Legendre integrals against quadrature.
    Identities {
        /// Largest degree, at most 30.
        #[arg(long, default_value_t = 30)]
        ell: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Chaos coefficients against the 1-d quadrature oracle.
    Coefficients {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        ell: Option<Vec<usize>>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// χ(A_u) of one sample by both estimators, printed as JSON.
    Epc {
        #[arg(long)]
        ell: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        u: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mesh as n_theta,n_phi.
        #[arg(long, value_delimiter = ',', default_values_t = [256, 512])]
        mesh: Vec<usize>,
    },
    /// Second-chaos projection, direct and assembled, one JSON line per sample.
    Chaos {
        #[arg(long)]
        ell: usize,
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Run a Monte Carlo experiment; writes report.json and records.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides base_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild report.json from a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reduced-scale run of the invariant suite.
    Selftest {
        #[arg(long, value_enum, default_value_t = Scale::Quick)]
        scale: Scale,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Quick,
}

enum Failure {
    Verification(String),
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Io(e.to_string()),
            Error::Domain(_) | Error::Config(_) | Error::Json(_) | Error::IdentityDomain { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Verification(other.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, text: &str) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn args_hash(value: &impl Serialize) -> String {
    let json = serde_json::to_string(value).expect("arguments serialize");
    Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn cmd_identities(ell_max: usize, out: &Path) -> CliResult {
    if ell_max == 0 || ell_max > 30 {
        return Err(Failure::Usage(format!("--ell must be in 1..=30, got {ell_max}")));
    }
    let rule = gauss_legendre_rule(IDENTITY_RULE_NODES)?;
    let rows = identity_table(ell_max, &rule)?;
    let hash = args_hash(&serde_json::json!({ "identities": { "ell_max": ell_max, "nodes": IDENTITY_RULE_NODES } }));
    let mut s = header_block(&hash, &[]);
    s.push_str("name,ell,m,closed_form,quadrature,abs_err,rel_err,in_domain\n");
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.name,
            r.ell,
            r.m,
            opt(r.closed_form),
            fmt_f64(r.quadrature),
            opt(r.abs_err),
            opt(r.rel_err),
            r.in_domain
        );
    }
    write_file(out, "identities.csv", &s)?;
    let worst = rows
        .iter()
        .filter(|r| r.rel_err.is_some())
        .max_by(|a, b| a.rel_err.partial_cmp(&b.rel_err).expect("finite errors"));
    let in_domain = rows.iter().filter(|r| r.in_domain).count();
    if let Some(w) = worst.filter(|w| !w.passes()) {
        return Err(Failure::Verification(format!(
            "identity {} at l={}, m={} has relative error {:e}",
            w.name,
            w.ell,
            w.m,
            w.rel_err.unwrap_or(f64::NAN)
        )));
    }
    println!("{} identities checked ({in_domain} in domain), all pass", rows.len());
    Ok(())
}

fn cmd_coefficients(us: Vec<f64>, ells: Vec<usize>, out: &Path) -> CliResult {
    if us.is_empty() || ells.is_empty() {
        return Err(Failure::Usage("--u and --ell must be nonempty".into()));
    }
    if let Some(l) = ells.iter().find(|&&l| l < 2) {
        return Err(Failure::Usage(format!("degree {l} below 2")));
    }
    let table = coefficient_table(&us, &ells)?;
    let hash = args_hash(&serde_json::json!({ "coefficients": { "u": us, "ell": ells } }));
    let mut s = header_block(
        &hash,
        &[("k3_variant", table.k3.name().to_string()), ("psi3355_variant", table.psi3355.name().to_string())],
    );
    s.push_str("name,u,ell,closed_form,oracle,abs_err\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.name,
            fmt_f64(r.u),
            r.ell,
            fmt_f64(r.closed_form),
            fmt_f64(r.oracle),
            fmt_f64(r.abs_err)
        );
    }
    s.push_str("# flags\n");
    let _ = writeln!(s, "# k3 matches: {}", table.k3.name());
    let _ = writeln!(s, "# psi3355 matches: {}", table.psi3355.name());
    write_file(out, "coefficients.csv", &s)?;
    println!("k3 variant matching the oracle: {}", table.k3.name());
    println!("psi3355 variant matching the oracle: {}", table.psi3355.name());
    if !table.all_pass() {
        let w = table.worst().expect("nonempty table");
        return Err(Failure::Verification(format!(
            "{} at u={}, l={} differs from the oracle by {:e}",
            w.name, w.u, w.ell, w.abs_err
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EpcOutput {
    version: &'static str,
    config_hash: String,
    ell: usize,
    seed: u64,
    morse_valid: bool,
    critical_points: usize,
    margin: f64,
    levels: Vec<EpcLevel>,
}

#[derive(Serialize)]
struct EpcLevel {
    u: f64,
    expected: f64,
    discrete: i64,
    morse: Option<i64>,
    /// Whether u is farther than the mesh margin from every critical value.
    generic: bool,
}

fn cmd_epc(ell: usize, us: Vec<f64>, seed: u64, mesh: Vec<usize>) -> CliResult {
    if ell < 1 {
        return Err(Failure::Usage("--ell must be positive".into()));
    }
    let [nt, np] = mesh[..] else {
        return Err(Failure::Usage("--mesh takes n_theta,n_phi".into()));
    };
    let c = sample_coefficients(ell, seed)?;
    let mesh = build_mesh(nt, np)?;
    let minima = SimplexMinima::new(&mesh, &mesh_values(&mesh, &c)?)?;
    let set = find_critical_points(&c, 4 * ell, NewtonParams::default())?;
    let margin = generic_margin(&mesh, ell);
    let levels = us
        .iter()
        .map(|&u| EpcLevel {
            u,
            expected: expected_epc(ell, u),
            discrete: minima.epc(u),
            morse: if set.is_morse() { morse_epc(&set.points, u).ok() } else { None },
            generic: set.points.iter().all(|p| (p.value - u).abs() > margin),
        })
        .collect();
    let out = EpcOutput {
        version: VERSION,
        config_hash: args_hash(&serde_json::json!({ "epc": { "ell": ell, "u": us, "seed": seed, "mesh": [nt, np] } })),
        ell,
        seed,
        morse_valid: set.is_morse(),
        critical_points: set.points.len(),
        margin,
        levels,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    Ok(())
}

#[derive(Serialize)]
struct ChaosLine {
    seed: u64,
    u: f64,
    proj2: f64,
    proj2_assembled: f64,
    #[serde(rename = "A35")]
    a35: f64,
    #[serde(rename = "B")]
    b: [f64; 5],
}

fn cmd_chaos(ell: usize, u: f64, seed: u64, n: u64) -> CliResult {
    if ell < 2 {
        return Err(Failure::Usage("--ell must be at least 2".into()));
    }
    let forms = QuadraticForms::new(ell)?;
    let hk = hk_coefficients(u, ell)?;
    let hash = args_hash(&serde_json::json!({ "chaos": { "ell": ell, "u": u, "seed": seed, "n": n } }));
    println!("{}", serde_json::json!({ "version": VERSION, "config_hash": hash }));
    for s in seed..seed.saturating_add(n) {
        let c = sample_coefficients(ell, s)?;
        let q = forms.evaluate(&c)?;
        let line = ChaosLine {
            seed: s,
            u,
            proj2: second_chaos_projection(&c, u)?,
            proj2_assembled: q.proj2_assembled(&hk),
            a35: q.a35,
            b: q.b,
        };
        println!("{}", serde_json::to_string(&line).expect("serializes"));
    }
    Ok(())
}

fn verdict_failures(report: &ExperimentReport) -> Vec<String> {
    let mut bad = Vec::new();
    for l in &report.levels {
        if l.mean_pass == Some(false) {
            bad.push(format!("mean at l={}, u={} (z = {:.2})", l.ell, l.u, l.mean_z.unwrap_or(f64::NAN)));
        }
        if l.proj2_var_pass == Some(false) {
            bad.push(format!("proj2 variance at l={}, u={}", l.ell, l.u));
        }
    }
    for t in &report.trends {
        if t.pass == Some(false) {
            bad.push(format!("trend {} (u = {:?})", t.name, t.u));
        }
    }
    if report.degraded {
        bad.push("more than 5% non-Morse samples".into());
    }
    bad
}

fn finish_report(report: &ExperimentReport, out: &Path) -> CliResult {
    write_file(out, "report.json", &report.to_json())?;
    let bad = verdict_failures(report);
    if bad.is_empty() {
        println!("all verdicts pass");
        Ok(())
    } else {
        Err(Failure::Verification(format!("failed verdicts: {}", bad.join("; "))))
    }
}

fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let text = fs::read_to_string(config).map_err(|e| io_err(config, e))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.base_seed = s;
        config.validate()?;
    }
    let run = run_experiment(&config)?;
    write_file(out, "records.csv", &records_to_csv(&config, &run.records))?;
    finish_report(&run.report, out)
}

fn cmd_report(records: &Path, out: &Path) -> CliResult {
    let text = fs::read_to_string(records).map_err(|e| io_err(records, e))?;
    let (config, recs) = records_from_csv(&text)?;
    finish_report(&build_report(&config, &recs)?, out)
}

fn check(name: &str, ok: bool, failed: &mut Vec<String>) {
    println!("[{}] {name}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        failed.push(name.to_string());
    }
}

fn cmd_selftest() -> CliResult {
    let mut failed = Vec::new();
    let rule = gauss_legendre_rule(64)?;
    check("identities l <= 12", identity_table(12, &rule)?.iter().all(|r| r.passes()), &mut failed);

    let chol = (2..=30).all(|l| {
        let cov = jet_covariance(l).expect("l >= 2");
        let ll = cov.lambda_lambda_t();
        (0..5).all(|i| (0..5).all(|j| (ll[i][j] - cov.sigma[i][j]).abs() <= 1e-10 * cov.sigma[i][j].abs().max(1.0)))
    });
    check("cholesky l <= 30", chol, &mut failed);

    let table = coefficient_table(&[-1.0, 0.0, 2.0], &[2, 10])?;
    check("coefficients vs oracle", table.all_pass(), &mut failed);

    let mut eig_ok = true;
    for ell in [5usize, 12] {
        let lam = eigenvalue(ell);
        for seed in 0..5 {
            let c = sample_coefficients(ell, seed)?;
            for k in 0..20 {
                let p = SpherePoint::new(0.05 + 3.0 * k as f64 / 20.0, 0.7 * k as f64);
                let j = evaluate_jet(&c, p)?;
                eig_ok &= (j.h11 + j.h22 + lam * j.f).abs() <= 1e-8 * lam * j.f.abs().max(1.0);
            }
        }
    }
    check("jet eigenrelation", eig_ok, &mut failed);

    let gkf = (2..=12).all(|l| {
        [-1.5, 0.3, 2.0].iter().all(|&u| (gkf_expected_epc(l, u) - expected_epc(l, u)).abs() <= 1e-12 * expected_epc(l, u).abs().max(1.0))
    });
    check("gkf assembly", gkf, &mut failed);

    let config = ExperimentConfig {
        degrees: vec![6, 12],
        thresholds: vec![0.0, 0.5, 2.0],
        n_samples: 100,
        base_seed: 1,
        mesh_resolution: (128, 256),
        estimator: Estimator::Both,
    };
    let run = run_experiment(&config)?;
    let morse_ok = run.report.degrees.iter().all(|d| !d.degraded);
    check("morse sum = 2 on >= 95% of samples", morse_ok, &mut failed);
    let agreement: Vec<(usize, usize)> =
        run.report.degrees.iter().filter_map(|d| d.estimator_agreement).collect();
    println!("       estimator agreement (agree, compared): {agreement:?}");
    let means = run.report.levels.iter().all(|l| l.mean_pass != Some(false));
    check("empirical means within 3 s.e.", means, &mut failed);
    let (cfg2, recs2) = records_from_csv(&records_to_csv(&config, &run.records))?;
    let rebuilt = build_report(&cfg2, &recs2)?;
    check("report rebuilt from records", rebuilt.to_json() == run.report.to_json(), &mut failed);

    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("selftest failures: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Identities { ell, out } => cmd_identities(ell, &out),
        Command::Coefficients { u, ell, out } => cmd_coefficients(
            u.unwrap_or_else(|| DEFAULT_US.to_vec()),
            ell.unwrap_or_else(|| DEFAULT_ELLS.to_vec()),
            &out,
        ),
        Command::Epc { ell, u, seed, mesh } => cmd_epc(ell, u, seed, mesh),
        Command::Chaos { ell, u, seed, n } => cmd_chaos(ell, u, seed, n),
        Command::Simulate { config, out, seed } => cmd_simulate(&config, &out, seed),
        Command::Report { records, out } => cmd_report(&records, &out),
        Command::Selftest { scale: Scale::Quick } => cmd_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(m)) => {
            eprintln!("verification failure: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("I/O error: {m}");
            ExitCode::from(3)
        }
    }
}
