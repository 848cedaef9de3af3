//! Command-line interface: `validate`, `analyze`, `simulate-risk`,
//! `simulate-queue` and `verify`.
//!
//! Exit status 0 means success, 1 a failed verification or numeric failure,
//! 2 an invalid configuration or unstable model.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use crate::error::{Error, Result};
use crate::inversion::{invert_cdf_grid, InversionConfig};
use crate::model::{validate_queue, validate_risk};
use crate::queue_sim::estimate_v_transform;
use crate::risk_sim::sample_u;
use crate::verify::{parse_suite, run_suite};
use crate::wiener_hopf::{AxisData, QuadratureConfig, QueueTransform, RiskTransform, WhFactor};

pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "coupled-risk", version, about = "Coupled risk and queueing models with mutual assistance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    #[value(name = "F1")]
    F1,
    #[value(name = "G1")]
    G1,
    #[value(name = "invert-U")]
    InvertU,
    #[value(name = "factorize")]
    Factorize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the configuration and print the stability class.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate transforms, invert the law of U or tabulate Wiener-Hopf factors.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        what: Analysis,
    },
    /// Sample the minimal initial capital U.
    SimulateRisk {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the transform of V from the simulated queue.
    SimulateQueue {
        #[command(flatten)]
        common: Common,
    },
    /// Run verification kinds and write a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated kinds, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidModel(_)
        | Error::Unstable(_)
        | Error::InfiniteRateWithNonpositiveDrift(_)
        | Error::DegenerateModel(_) => EXIT_INVALID,
        _ => EXIT_FAILURE,
    }
}

struct Loaded {
    config: ExperimentConfig,
    out_dir: PathBuf,
}

fn load(common: &Common) -> Result<Loaded> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    validate_risk(&config.risk_model())?;
    if let Some(q) = config.queue_model()? {
        validate_queue(&q)?;
    }
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        // A second call fails once the pool exists; the first setting stays in force.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&config.output_dir));
    Ok(Loaded { config, out_dir })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sidecar(csv_path: &Path, command: &str, config: &ExperimentConfig, details: serde_json::Value) -> Result<PathBuf> {
    let path = csv_path.with_extension("json");
    let body = json!({
        "command": command,
        "seed": config.seed,
        "config": config,
        "data": csv_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "details": details,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(&path, serde_json::to_string_pretty(&body).map_err(|e| Error::Io(e.to_string()))? + "\n")?;
    Ok(path)
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Runs a parsed command and returns its exit status.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Validate { config } => validate(&config),
        Command::Analyze { common, what } => analyze(&common, what),
        Command::SimulateRisk { common } => simulate_risk(&common),
        Command::SimulateQueue { common } => simulate_queue(&common),
        Command::Verify { common, suite } => verify(&common, &suite),
    }
}

fn validate(path: &Path) -> Result<i32> {
    let config = ExperimentConfig::load(path)?;
    let risk = validate_risk(&config.risk_model())?;
    println!("risk model (r1 = {}, r2 = {}): {risk}", config.r1, config.r2);
    if let Some(q) = config.queue_model()? {
        let class = validate_queue(&q)?;
        println!("queue model (rho1 = {}, rho2 = {}): {class}", q.rho1, q.rho2);
    }
    Ok(EXIT_OK)
}

fn analyze(common: &Common, what: Analysis) -> Result<i32> {
    let Loaded { config, out_dir } = load(common)?;
    let model = config.risk_model();
    let (name, header, rows, details): (&str, Vec<&str>, Vec<Vec<String>>, serde_json::Value) = match what {
        Analysis::F1 => {
            let t = RiskTransform::new(&model)?;
            let mut rows = Vec::new();
            for &s in &config.grids.s {
                let z = Complex64::new(s, 0.0);
                rows.push(vec![num(s), num(t.f1_hat(z)?.re), num(t.f1(z)?.re)]);
            }
            ("F1", vec!["s", "f1_hat", "f1"], rows, json!({ "abscissa": t.abscissa()? }))
        }
        Analysis::G1 => {
            let q = config.queue_model()?.ok_or_else(|| Error::Config("G1 needs rho1 and rho2".into()))?;
            let t = QueueTransform::new(&q)?;
            let mut rows = Vec::new();
            for &s in &config.grids.s {
                let z = Complex64::new(s, 0.0);
                rows.push(vec![num(s), num(t.g1(z)?.re), num(t.g1_hat(z)?.re)]);
            }
            ("G1", vec!["s", "g1", "g1_hat"], rows, json!({ "g1_at_zero": t.g1_at_zero()? }))
        }
        Analysis::InvertU => {
            let t = RiskTransform::new(&model)?;
            let cfg = InversionConfig { abscissa: t.abscissa()?, ..Default::default() };
            let f = |s: f64| Ok(t.f1_hat(Complex64::new(s, 0.0))?.re);
            let grid = invert_cdf_grid(&f, &config.grids.u, &cfg)?;
            let rows = grid.points.iter().map(|p| vec![num(p.u), num(p.cdf), num(p.error_estimate)]).collect();
            let details = json!({ "atom": grid.atom, "monotone_correction": grid.correction, "terms": cfg.terms });
            ("invert-U", vec!["u", "cdf", "error_estimate"], rows, details)
        }
        Analysis::Factorize => {
            let axis = std::sync::Arc::new(AxisData::build(&model.spec1, &model.spec2, QuadratureConfig::default())?);
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for &r in &config.grids.factor_rates {
                let f = WhFactor::new(axis.clone(), r)?;
                for &v in &config.grids.theta {
                    let z = Complex64::new(0.0, v);
                    let (p, m) = (f.plus(z)?, f.minus(z)?);
                    let res = f.identity_residual(v)?;
                    worst = worst.max(res);
                    rows.push(vec![num(r), num(v), num(p.re), num(p.im), num(m.re), num(m.im), num(res)]);
                }
            }
            let header = vec!["r", "theta_im", "psi_plus_re", "psi_plus_im", "psi_minus_re", "psi_minus_im", "residual"];
            ("factorize", header, rows, json!({ "max_residual": worst, "nodes": axis.node_count() }))
        }
    };
    let path = out_dir.join(format!("analyze-{name}.csv"));
    write_csv(&path, &header, &rows)?;
    write_sidecar(&path, &format!("analyze --what {name}"), &config, details)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(EXIT_OK)
}

fn simulate_risk(common: &Common) -> Result<i32> {
    let Loaded { config, out_dir } = load(common)?;
    let budget = config.simulation_budget();
    let sample = sample_u(&config.risk_model(), &budget)?;
    let rows: Vec<Vec<String>> = sample.by_replica.iter().map(|&(i, u)| vec![i.to_string(), num(u)]).collect();
    let path = out_dir.join("simulate-risk.csv");
    write_csv(&path, &["replica", "u"], &rows)?;
    let details = json!({
        "budget": budget,
        "r1": sample.r1,
        "r2": sample.r2,
        "anomalies": sample.anomalies,
        "bracket_failures": sample.bracket_failures,
        "bracket_growths": sample.bracket_growths,
        "mean": sample.sample.mean(),
        "atom_at_zero": sample.sample.ecdf(0.0),
    });
    write_sidecar(&path, "simulate-risk", &config, details)?;
    println!(
        "{} samples of U (r1 = {}, r2 = {}, T = {}): mean {:.6}, P(U = 0) {:.4}, {} anomalies -> {}",
        rows.len(),
        sample.r1,
        sample.r2,
        budget.horizon,
        sample.sample.mean(),
        sample.sample.ecdf(0.0),
        sample.anomalies,
        path.display()
    );
    Ok(EXIT_OK)
}

fn simulate_queue(common: &Common) -> Result<i32> {
    let Loaded { config, out_dir } = load(common)?;
    let q = config.queue_model()?.ok_or_else(|| Error::Config("simulate-queue needs rho1 and rho2".into()))?;
    let budget = config.queue_budget(&q);
    let est = estimate_v_transform(&q, &config.grids.s, &budget)?;
    let rows: Vec<Vec<String>> = est.points.iter().map(|p| vec![num(p.s), num(p.estimate), num(p.std_error)]).collect();
    let path = out_dir.join("simulate-queue.csv");
    write_csv(&path, &["s", "estimate", "stderr"], &rows)?;
    let details = json!({
        "budget": budget,
        "normalization": est.normalization,
        "stationarity_warning": est.stationarity_warning,
    });
    write_sidecar(&path, "simulate-queue", &config, details)?;
    println!(
        "V transform at {} points, normalization {:.5} +- {:.5} -> {}",
        rows.len(),
        est.normalization.estimate,
        est.normalization.std_error,
        path.display()
    );
    Ok(EXIT_OK)
}

fn verify(common: &Common, suite: &str) -> Result<i32> {
    let Loaded { config, out_dir } = load(common)?;
    let kinds = parse_suite(suite)?;
    let input = config.verify_input()?;
    let (reports, pass) = run_suite(&input, &kinds)?;
    for r in &reports {
        println!("{}", r.summary());
    }
    fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("verify-report.json");
    let body = json!({
        "seed": config.seed,
        "config": config,
        "suite": kinds,
        "pass": pass,
        "reports": reports,
    });
    fs::write(&path, serde_json::to_string_pretty(&body).map_err(|e| Error::Io(e.to_string()))? + "\n")?;
    println!("{} -> {}", if pass { "all passed" } else { "FAILED" }, path.display());
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}
