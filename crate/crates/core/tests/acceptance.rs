//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use coupled_risk::analytic::phi_inverse;
use coupled_risk::model::presets::{cfg_a_queue, cfg_a_risk, cfg_b_queue, cfg_b_risk};
use coupled_risk::model::{QueueModel, RiskModel};
use coupled_risk::risk_sim::{sample_u, SimulationBudget};
use coupled_risk::verify::{Verifier, VerifyInput, VerifyKind, VerifySettings};
use coupled_risk::wiener_hopf::{AxisData, QuadratureConfig, WhFactor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_coupled-risk")
}

fn verifier(risk: RiskModel, queue: QueueModel) -> Verifier {
    Verifier::new(VerifyInput { risk, queue: Some(queue), settings: VerifySettings::default(), master_seed: 7 }).unwrap()
}

/// Runs kinds and summarizes; a skipped kind counts as a failure here.
fn run_kinds(v: &mut Verifier, kinds: &[VerifyKind], label: &str) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for &k in kinds {
        let r = v.verify(k);
        let ok = r.pass && r.skipped.is_none();
        pass &= ok;
        let mut part = format!("{label}/{k} worst {:.3}", r.worst_ratio());
        if let Some(e) = &r.error {
            part.push_str(&format!(" error: {e}"));
        }
        if let Some(s) = &r.skipped {
            part.push_str(&format!(" skipped: {s}"));
        }
        for s in r.statistics.iter().filter(|s| !s.pass) {
            part.push_str(&format!(" [{}: {:.3e} > {:.3e}]", s.name, s.value, s.threshold));
        }
        parts.push(part);
    }
    (pass, parts.join("; "))
}

fn criterion_1() -> Outcome {
    let out = tempfile::tempdir().unwrap();
    let config = workspace_root().join("configs/ruin_oracle.json");
    let start = Instant::now();
    let status = Command::new(binary())
        .args(["analyze", "--what", "invert-U", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    if !status.status.success() {
        return outcome(false, format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let mut reader = csv::Reader::from_path(out.path().join("analyze-invert-U.csv")).unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let u: f64 = rec[0].parse().unwrap();
        let cdf: f64 = rec[1].parse().unwrap();
        if (0.1..=10.0 + 1e-12).contains(&u) {
            worst = worst.max((cdf - (1.0 - 0.5 * (-0.5 * u).exp())).abs());
            count += 1;
        }
    }
    let pass = count >= 100 && worst <= 1e-4 && elapsed < Duration::from_secs(5);
    outcome(pass, format!("max |CDF - (1 - 0.5 e^(-u/2))| = {worst:.2e} over {count} points, {elapsed:.2?}"))
}

fn imaginary_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let m = cfg_a_risk();
    let axis = Arc::new(AxisData::build(&m.spec1, &m.spec2, QuadratureConfig::default()).unwrap());
    let mut worst = 0.0f64;
    for r in [0.1, 1.0, 10.0] {
        let f = WhFactor::new(axis.clone(), r).unwrap();
        for v in imaginary_grid(0.05, 50.0, 40) {
            worst = worst.max(f.identity_residual(v).unwrap());
        }
    }
    let elapsed = start.elapsed();
    outcome(worst < 1e-6 && elapsed < Duration::from_secs(30), format!("max residual {worst:.2e} on 120 points, {elapsed:.2?}"))
}

fn criterion_3() -> Outcome {
    let c = |x: f64| Complex64::new(x, 0.0);
    let a = cfg_a_risk();
    let axis = Arc::new(AxisData::build(&a.spec1, &a.spec2, QuadratureConfig::default()).unwrap());
    let big = WhFactor::new(axis.clone(), 1e4).unwrap();
    let small = WhFactor::new(axis, 1e-4).unwrap();
    let mu1 = a.spec1.mean_drift();
    let (mut high, mut low) = (0.0f64, 0.0f64);
    for s in [0.5, 1.0, 2.0] {
        high = high.max((big.plus(c(s)).unwrap() - 1.0).norm());
        let lim = mu1 * phi_inverse(&a.spec1, c(s)).unwrap() / s;
        low = low.max((small.plus(c(s)).unwrap() - lim).norm());
    }
    let b = cfg_b_risk();
    let axis = Arc::new(AxisData::build(&b.spec1, &b.spec2, QuadratureConfig::default()).unwrap());
    let small = WhFactor::new(axis, 1e-4).unwrap();
    let mu2 = b.spec2.mean_drift();
    let mut scaled = 0.0f64;
    for s in [0.5, 1.0, 2.0] {
        let lim = mu2 * phi_inverse(&b.spec1, c(s)).unwrap() / s;
        scaled = scaled.max((small.plus(c(s)).unwrap() / 1e-4 - lim).norm());
    }
    let pass = high < 1e-3 && low < 1e-3 && scaled < 1e-2;
    outcome(pass, format!("CFG-A |Psi+_1e4 - 1| {high:.2e}, |Psi+_1e-4 - limit| {low:.2e}; CFG-B scaled {scaled:.2e}"))
}

fn criterion_4(a: &mut Verifier) -> Outcome {
    let (pass, detail) = run_kinds(a, &[VerifyKind::KernelCurve], "CFG-A");
    outcome(pass, detail)
}

fn criterion_5(a: &mut Verifier, b: &mut Verifier) -> Outcome {
    let start = Instant::now();
    let (pa, da) = run_kinds(a, &[VerifyKind::Thm1Main], "CFG-A");
    let (pb, db) = run_kinds(b, &[VerifyKind::Thm1Main], "CFG-B");
    let elapsed = start.elapsed();
    outcome(pa && pb && elapsed < Duration::from_secs(300), format!("{da}; {db}; {elapsed:.2?}"))
}

fn criterion_6(a: &mut Verifier) -> Outcome {
    let kinds = [VerifyKind::Thm1Supp1, VerifyKind::Thm1Supp2, VerifyKind::Thm1SuppCombined, VerifyKind::DecAlt, VerifyKind::LawInv];
    let (pass, detail) = run_kinds(a, &kinds, "CFG-A");
    outcome(pass, detail)
}

fn criterion_7(a: &mut Verifier) -> Outcome {
    let (pass, detail) = run_kinds(a, &[VerifyKind::AnalyticVsSim], "CFG-A");
    outcome(pass, detail)
}

fn criterion_8(a: &mut Verifier) -> Outcome {
    let (pass, detail) = run_kinds(a, &[VerifyKind::Thm2Queue], "CFG-A");
    outcome(pass, detail)
}

fn criterion_9(a: &mut Verifier) -> Outcome {
    let (pass, detail) = run_kinds(a, &[VerifyKind::RescaleInvariance, VerifyKind::MonotoneRates], "CFG-A");
    let m = cfg_a_risk();
    let budget = SimulationBudget::defaults_for(&m, 2000, 7);
    let in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sample_u(&m, &budget).unwrap())
    };
    let (one, four) = (in_pool(1), in_pool(4));
    let identical = one.by_replica.len() == four.by_replica.len()
        && one.by_replica.iter().zip(&four.by_replica).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
    outcome(pass && identical, format!("{detail}; 1 vs 4 workers bitwise identical: {identical}"))
}

fn criterion_10() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["cfg_a", "cfg_b"] {
        let out = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let result = Command::new(binary())
            .args(["verify", "--suite", "all", "--jobs", "8", "--config"])
            .arg(workspace_root().join(format!("configs/{name}.json")))
            .arg("--out")
            .arg(out.path())
            .output()
            .unwrap();
        let elapsed = start.elapsed();
        let ok = result.status.success() && elapsed < Duration::from_secs(600) && out.path().join("verify-report.json").exists();
        pass &= ok;
        parts.push(format!("{name}: exit {:?} in {elapsed:.2?}", result.status.code()));
        if !ok {
            parts.push(String::from_utf8_lossy(&result.stdout).into_owned());
        }
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let mut a = verifier(cfg_a_risk(), cfg_a_queue());
    let mut b = verifier(cfg_b_risk(), cfg_b_queue());
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "closed-form ruin oracle via analyze --what invert-U", criterion_1()));
    results.push((2, "Wiener-Hopf factorization identity", criterion_2()));
    results.push((3, "Wiener-Hopf limits in the rate", criterion_3()));
    results.push((4, "kernel-curve annihilation and transform product", criterion_4(&mut a)));
    results.push((5, "main decomposition on CFG-A and CFG-B", criterion_5(&mut a, &mut b)));
    results.push((6, "supplementary decompositions", criterion_6(&mut a)));
    results.push((7, "analytic transform vs simulation", criterion_7(&mut a)));
    results.push((8, "queue decomposition", criterion_8(&mut a)));
    results.push((9, "rescaling, monotone rates, worker-count determinism", criterion_9(&mut a)));
    results.push((10, "full verify suite via the CLI", criterion_10()));
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
