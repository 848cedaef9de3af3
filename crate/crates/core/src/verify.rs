//! End-to-end checks of the decomposition identities, the Wiener-Hopf
//! numerics and the structural properties of the simulators.
//!
//! Every sample is drawn with `derive_seed(master, label)` where the label
//! names the quantity (for example `risk|2|0.25|-`), so two kinds asking for
//! the same quantity share one cached sample and different quantities are
//! independent.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytic::{kernel_coeff_risk, kernel_curve};
use crate::error::{Error, Result};
use crate::inversion::{invert_cdf_grid, stieltjes_convolution, InversionConfig};
use crate::model::{rescale_queue, rescale_risk, validate_risk, ExtendedRate, QueueModel, RiskModel};
use crate::queue_sim::{estimate_v_transform, replay_queue, QueueBudget};
use crate::risk_sim::{default_horizon, replica_u, sample_paths, sample_u, sample_u_conditional, Condition, SimulationBudget, USample};
use crate::stats::{convolve_samples, empirical_lt, ks_two_sample, EmpiricalSample, TransformEstimate};
use crate::wiener_hopf::{wh_limit, AxisData, QuadratureConfig, QueueTransform, RiskTransform, WhFactor, WhLimit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyKind {
    Thm1Main,
    Thm1Supp1,
    Thm1Supp2,
    Thm1SuppCombined,
    DecAlt,
    LawInv,
    Thm2Queue,
    AnalyticVsSim,
    KernelCurve,
    WhLimits,
    WhIdentity,
    RescaleInvariance,
    MonotoneRates,
    ConvolutionCdf,
}

impl VerifyKind {
    pub const ALL: [VerifyKind; 14] = [
        VerifyKind::Thm1Main,
        VerifyKind::Thm1Supp1,
        VerifyKind::Thm1Supp2,
        VerifyKind::Thm1SuppCombined,
        VerifyKind::DecAlt,
        VerifyKind::LawInv,
        VerifyKind::Thm2Queue,
        VerifyKind::AnalyticVsSim,
        VerifyKind::KernelCurve,
        VerifyKind::WhLimits,
        VerifyKind::WhIdentity,
        VerifyKind::RescaleInvariance,
        VerifyKind::MonotoneRates,
        VerifyKind::ConvolutionCdf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VerifyKind::Thm1Main => "thm1_main",
            VerifyKind::Thm1Supp1 => "thm1_supp1",
            VerifyKind::Thm1Supp2 => "thm1_supp2",
            VerifyKind::Thm1SuppCombined => "thm1_supp_combined",
            VerifyKind::DecAlt => "dec_alt",
            VerifyKind::LawInv => "law_inv",
            VerifyKind::Thm2Queue => "thm2_queue",
            VerifyKind::AnalyticVsSim => "analytic_vs_sim",
            VerifyKind::KernelCurve => "kernel_curve",
            VerifyKind::WhLimits => "wh_limits",
            VerifyKind::WhIdentity => "wh_identity",
            VerifyKind::RescaleInvariance => "rescale_invariance",
            VerifyKind::MonotoneRates => "monotone_rates",
            VerifyKind::ConvolutionCdf => "convolution_cdf",
        }
    }
}

impl fmt::Display for VerifyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VerifyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VerifyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown verification kind '{s}'")))
    }
}

/// Parses a comma-separated suite; `all` or `default` selects every kind.
pub fn parse_suite(spec: &str) -> Result<Vec<VerifyKind>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    if spec == "all" || spec == "default" {
        return Ok(VerifyKind::ALL.to_vec());
    }
    spec.split(',').map(|s| s.trim().parse()).collect()
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(master XOR fnv1a64(label))`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Sample sizes, grids and tolerances of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub replicas: usize,
    /// Defaults to `200 / min(positive drift cushions)`.
    pub horizon: Option<f64>,
    /// Defaults to `1e-4 E[J1]`.
    pub epsilon_x: Option<f64>,
    /// Defaults to `50 E[J1]`.
    pub x_max: Option<f64>,
    pub transform_grid: Vec<f64>,
    pub sigma_multiplier: f64,
    pub ks_slack: f64,
    pub transform_slack: f64,
    pub law_inv_rates: Vec<ExtendedRate>,
    pub identity_rates: Vec<f64>,
    pub identity_points: usize,
    pub identity_range: (f64, f64),
    pub identity_tolerance: f64,
    pub kernel_points: usize,
    pub kernel_range: (f64, f64),
    pub kernel_tolerance: f64,
    pub limit_points: Vec<f64>,
    pub limit_tolerance: f64,
    pub scaled_limit_tolerance: f64,
    pub monotone_replicas: usize,
    pub rescale_factor: f64,
    pub rescale_replicas: usize,
    /// Defaults to total time `1e6 / min(c1, c2)` over 8 replicas.
    pub queue_budget: Option<QueueBudget>,
    pub queue_grid: Vec<f64>,
    pub cdf_grid: Vec<f64>,
    pub cdf_step: f64,
    pub cdf_tolerance: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            replicas: 20_000,
            horizon: None,
            epsilon_x: None,
            x_max: None,
            transform_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            sigma_multiplier: 3.0,
            ks_slack: 0.005,
            transform_slack: 0.01,
            law_inv_rates: vec![ExtendedRate::ZERO, ExtendedRate::Finite(0.25), ExtendedRate::Finite(1.0), ExtendedRate::Infinite],
            identity_rates: vec![0.1, 1.0, 10.0],
            identity_points: 40,
            identity_range: (0.05, 50.0),
            identity_tolerance: 1e-6,
            kernel_points: 20,
            kernel_range: (0.1, 10.0),
            kernel_tolerance: 1e-6,
            limit_points: vec![0.5, 1.0, 2.0],
            limit_tolerance: 1e-3,
            scaled_limit_tolerance: 1e-2,
            monotone_replicas: 100,
            rescale_factor: 2.0,
            rescale_replicas: 2000,
            queue_budget: None,
            queue_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            cdf_grid: (1..=100).map(|k| 0.1 * k as f64).collect(),
            cdf_step: 0.02,
            cdf_tolerance: 1e-3,
        }
    }
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: VerifyKind,
    pub params: serde_json::Value,
    pub statistics: Vec<Statistic>,
    pub pass: bool,
    /// Hypotheses of the identity fail for this model; counts as a pass.
    pub skipped: Option<String>,
    /// Simulation or quadrature failure; counts as a failure.
    pub error: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub anomalies: Vec<String>,
}

impl VerificationReport {
    fn new(identity: VerifyKind) -> Self {
        VerificationReport {
            identity,
            params: json!({}),
            statistics: Vec::new(),
            pass: true,
            skipped: None,
            error: None,
            seeds: BTreeMap::new(),
            anomalies: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        let pass = value <= threshold;
        self.statistics.push(Statistic { name: name.into(), value, threshold, pass });
    }

    fn finish(mut self) -> Self {
        self.pass = self.error.is_none() && self.statistics.iter().all(|s| s.pass);
        self
    }

    /// Largest `value / threshold` over the statistics.
    pub fn worst_ratio(&self) -> f64 {
        self.statistics.iter().map(|s| s.value / s.threshold).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let status = match (&self.skipped, &self.error, self.pass) {
            (Some(why), _, _) => format!("SKIP ({why})"),
            (_, Some(e), _) => format!("FAIL ({e})"),
            (_, _, true) => "PASS".to_string(),
            _ => "FAIL".to_string(),
        };
        let failing = self.statistics.iter().filter(|s| !s.pass).count();
        format!(
            "{:<20} {status}: {} statistics, {failing} failing, worst value/threshold {:.3}",
            self.identity.name(),
            self.statistics.len(),
            self.worst_ratio()
        )
    }
}

/// Everything a verification run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyInput {
    pub risk: RiskModel,
    pub queue: Option<QueueModel>,
    pub settings: VerifySettings,
    pub master_seed: u64,
}

/// One side of a distributional comparison.
struct Side {
    sample: EmpiricalSample,
    transforms: Vec<TransformEstimate>,
}

fn fmt_rate(r: ExtendedRate) -> String {
    r.to_string()
}

/// Runs verification kinds and caches simulated samples across them.
pub struct Verifier {
    input: VerifyInput,
    horizon: f64,
    epsilon: f64,
    x_max: f64,
    cache: HashMap<String, Arc<USample>>,
}

impl Verifier {
    pub fn new(input: VerifyInput) -> Result<Self> {
        validate_risk(&input.risk)?;
        let s = &input.settings;
        let mean_jump = input.risk.spec1.jumps.mean();
        let horizon = s.horizon.unwrap_or_else(|| default_horizon(&input.risk));
        let epsilon = s.epsilon_x.unwrap_or(1e-4 * mean_jump);
        let x_max = s.x_max.unwrap_or(50.0 * mean_jump);
        if s.replicas == 0 || !(horizon > 0.0 && epsilon > 0.0 && x_max > epsilon) {
            return Err(Error::Config("verification budget needs N >= 1, T > 0 and x_max > epsilon_x > 0".into()));
        }
        if !(s.sigma_multiplier > 0.0) || s.transform_grid.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("sigma multiplier must be positive and transform grid non-negative".into()));
        }
        Ok(Verifier { input, horizon, epsilon, x_max, cache: HashMap::new() })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn budget(&self, seed: u64, replicas: usize) -> SimulationBudget {
        SimulationBudget { replicas, horizon: self.horizon, epsilon: self.epsilon, x_max: self.x_max, seed }
    }

    fn model_at(&self, r1: ExtendedRate, r2: ExtendedRate) -> RiskModel {
        self.input.risk.with_rates(r1, r2)
    }

    fn u_sample(&mut self, report: &mut VerificationReport, r1: ExtendedRate, r2: ExtendedRate, condition: Option<Condition>) -> Result<Arc<USample>> {
        let cond = match condition {
            None => "-".to_string(),
            Some(Condition::SecondPathNonnegative) => "second_path_nonnegative".to_string(),
            Some(Condition::UZeroAtRates(a, b)) => format!("u_zero_at({a},{b})"),
        };
        let label = format!("risk|{}|{}|{cond}", fmt_rate(r1), fmt_rate(r2));
        let seed = derive_seed(self.input.master_seed, &label);
        report.seeds.insert(label.clone(), seed);
        let key = format!("{label}|{}|{}|{seed}|{}|{}", self.horizon, self.input.settings.replicas, self.epsilon, self.x_max);
        if let Some(s) = self.cache.get(&key) {
            return Ok(s.clone());
        }
        let model = self.model_at(r1, r2);
        let budget = self.budget(seed, self.input.settings.replicas);
        let sample = match condition {
            None => sample_u(&model, &budget)?,
            Some(c) => sample_u_conditional(&model, c, &budget)?,
        };
        if sample.anomalies > 0 {
            report.anomalies.push(format!("{label}: {} replicas with non-monotone survival", sample.anomalies));
        }
        if sample.bracket_failures > 0 {
            report.anomalies.push(format!("{label}: {} bracket failures", sample.bracket_failures));
        }
        let sample = Arc::new(sample);
        self.cache.insert(key, sample.clone());
        Ok(sample)
    }

    fn transforms(&self, sample: &EmpiricalSample) -> Vec<TransformEstimate> {
        self.input.settings.transform_grid.iter().map(|&s| empirical_lt(sample, s)).collect()
    }

    fn single(&self, u: &USample) -> Side {
        Side { sample: u.sample.clone(), transforms: self.transforms(&u.sample) }
    }

    fn sum(&self, report: &mut VerificationReport, label: &str, a: &USample, b: &USample) -> Side {
        let seed = derive_seed(self.input.master_seed, &format!("pairing|{}|{label}", report.identity));
        report.seeds.insert(format!("pairing|{label}"), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = convolve_samples(&a.sample, &b.sample, &mut rng);
        let transforms = self.transforms(&a.sample).iter().zip(self.transforms(&b.sample)).map(|(x, y)| x.product(&y)).collect();
        Side { sample, transforms }
    }

    fn compare(&self, report: &mut VerificationReport, label: &str, a: &Side, b: &Side) {
        let s = &self.input.settings;
        let ks = ks_two_sample(&a.sample, &b.sample, s.ks_slack);
        report.check(format!("{label}: KS distance"), ks.statistic, ks.threshold);
        for (x, y) in a.transforms.iter().zip(&b.transforms) {
            let threshold = s.sigma_multiplier * x.std_error.hypot(y.std_error) + s.transform_slack;
            report.check(format!("{label}: transform gap at s = {}", x.s), (x.estimate - y.estimate).abs(), threshold);
        }
    }

    fn mu(&self) -> (f64, f64) {
        self.input.risk.means()
    }

    fn rates(&self) -> (ExtendedRate, ExtendedRate) {
        (self.input.risk.r1, self.input.risk.r2)
    }

    fn params(&self, extra: serde_json::Value) -> serde_json::Value {
        json!({
            "risk": self.input.risk,
            "queue": self.input.queue,
            "replicas": self.input.settings.replicas,
            "horizon": self.horizon,
            "epsilon_x": self.epsilon,
            "x_max": self.x_max,
            "master_seed": self.input.master_seed,
            "details": extra,
        })
    }

    /// Runs one kind; failures inside the kind are recorded in the report.
    pub fn verify(&mut self, kind: VerifyKind) -> VerificationReport {
        let mut report = VerificationReport::new(kind);
        report.params = self.params(json!({}));
        let outcome = match kind {
            VerifyKind::Thm1Main => self.thm1_main(&mut report),
            VerifyKind::Thm1Supp1 => self.thm1_supp1(&mut report),
            VerifyKind::Thm1Supp2 => self.thm1_supp2(&mut report),
            VerifyKind::Thm1SuppCombined => self.thm1_supp_combined(&mut report),
            VerifyKind::DecAlt => self.dec_alt(&mut report),
            VerifyKind::LawInv => self.law_inv(&mut report),
            VerifyKind::Thm2Queue => self.thm2_queue(&mut report),
            VerifyKind::AnalyticVsSim => self.analytic_vs_sim(&mut report),
            VerifyKind::KernelCurve => self.kernel_curve(&mut report),
            VerifyKind::WhLimits => self.wh_limits(&mut report),
            VerifyKind::WhIdentity => self.wh_identity(&mut report),
            VerifyKind::RescaleInvariance => self.rescale_invariance(&mut report),
            VerifyKind::MonotoneRates => self.monotone_rates(&mut report),
            VerifyKind::ConvolutionCdf => self.convolution_cdf(&mut report),
        };
        if let Err(e) = outcome {
            report.error = Some(e.to_string());
        }
        report.finish()
    }

    fn skip(report: &mut VerificationReport, why: impl Into<String>) -> Result<()> {
        report.skipped = Some(why.into());
        Ok(())
    }

    fn thm1_main(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (r1, r2) = self.rates();
        let full = self.u_sample(report, r1, r2, None)?;
        let left = self.u_sample(report, r1, ExtendedRate::ZERO, None)?;
        let right = self.u_sample(report, ExtendedRate::ZERO, r2, None)?;
        let a = self.single(&full);
        let b = self.sum(report, "U[r1,0] + U[0,r2]", &left, &right);
        self.compare(report, "U[r1,r2] vs U[r1,0] + U'[0,r2]", &a, &b);
        Ok(())
    }

    fn thm1_supp1(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (mu1, mu2) = self.mu();
        if mu2 <= 0.0 {
            return Self::skip(report, format!("needs mu2 > 0, got {mu2}"));
        }
        let r1 = self.input.risk.r1;
        if r1.is_infinite() && mu1 <= 0.0 {
            return Self::skip(report, "r1 = inf needs mu1 > 0");
        }
        let plain = self.u_sample(report, r1, ExtendedRate::ZERO, None)?;
        let cond = self.u_sample(report, r1, ExtendedRate::Infinite, Some(Condition::SecondPathNonnegative))?;
        self.compare(report, "U[r1,0] vs U[r1,inf] | X2 >= 0", &self.single(&plain), &self.single(&cond));
        let (accepted, attempts) = cond.acceptance.unwrap_or((0, 1));
        let p = accepted as f64 / attempts as f64;
        let want = mu2 / self.input.risk.spec2.drift;
        let se = (want * (1.0 - want) / attempts as f64).sqrt();
        report.check("acceptance rate vs mu2/c2", (p - want).abs(), self.input.settings.sigma_multiplier * se);
        report.params["details"] = json!({ "acceptance_rate": p, "attempts": attempts, "expected": want });
        Ok(())
    }

    fn thm1_supp2(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (mu1, _) = self.mu();
        if mu1 <= 0.0 {
            return Self::skip(report, format!("needs mu1 > 0, got {mu1}"));
        }
        let r2 = self.input.risk.r2;
        let inf = ExtendedRate::Infinite;
        let full = self.u_sample(report, inf, r2, None)?;
        let a = self.u_sample(report, ExtendedRate::ZERO, r2, None)?;
        let b = self.u_sample(report, inf, ExtendedRate::ZERO, None)?;
        let rhs = self.sum(report, "U[0,r2] + U[inf,0]", &a, &b);
        self.compare(report, "U[inf,r2] vs U[0,r2] + U'[inf,0]", &self.single(&full), &rhs);
        Ok(())
    }

    fn thm1_supp_combined(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (mu1, _) = self.mu();
        if mu1 <= 0.0 {
            return Self::skip(report, format!("needs mu1 > 0, got {mu1}"));
        }
        let (r1, r2) = self.rates();
        let inf = ExtendedRate::Infinite;
        let zero = ExtendedRate::ZERO;
        let a = self.u_sample(report, r1, r2, None)?;
        let b = self.u_sample(report, inf, zero, None)?;
        let c = self.u_sample(report, r1, zero, None)?;
        let d = self.u_sample(report, inf, r2, None)?;
        let lhs = self.sum(report, "U[r1,r2] + U[inf,0]", &a, &b);
        let rhs = self.sum(report, "U[r1,0] + U[inf,r2]", &c, &d);
        self.compare(report, "U[r1,r2] + U'[inf,0] vs U[r1,0] + U'[inf,r2]", &lhs, &rhs);
        Ok(())
    }

    fn dec_alt(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (r1, r2) = self.rates();
        let zero = ExtendedRate::ZERO;
        let full = self.u_sample(report, r1, r2, None)?;
        let base = self.u_sample(report, zero, r2, None)?;
        let cond = self.u_sample(report, r1, r2, Some(Condition::UZeroAtRates(zero, r2)))?;
        let rhs = self.sum(report, "U[0,r2] + U[r1,r2] | U[0,r2] = 0", &base, &cond);
        self.compare(report, "U[r1,r2] vs U[0,r2] + U'[r1,r2] | U'[0,r2] = 0", &self.single(&full), &rhs);
        Ok(())
    }

    fn law_inv(&mut self, report: &mut VerificationReport) -> Result<()> {
        let r1 = self.input.risk.r1;
        let (mu1, mu2) = self.mu();
        let reference = self.u_sample(report, r1, ExtendedRate::ZERO, None)?;
        let reference = self.single(&reference);
        let mut skipped = Vec::new();
        for r2 in self.input.settings.law_inv_rates.clone() {
            let cond = if r2.is_infinite() {
                if mu2 <= 0.0 || (r1.is_infinite() && mu1 <= 0.0) {
                    skipped.push(r2.to_string());
                    continue;
                }
                Condition::SecondPathNonnegative
            } else {
                Condition::UZeroAtRates(ExtendedRate::ZERO, r2)
            };
            if validate_risk(&self.model_at(r1, r2)).is_err() {
                skipped.push(r2.to_string());
                continue;
            }
            let s = self.u_sample(report, r1, r2, Some(cond))?;
            let side = self.single(&s);
            self.compare(report, &format!("U[r1,0] vs U[r1,{r2}] | U[0,{r2}] = 0"), &reference, &side);
        }
        if !skipped.is_empty() {
            report.anomalies.push(format!("rates without a valid conditional law skipped: {}", skipped.join(", ")));
        }
        Ok(())
    }

    fn queue_model(&self) -> Option<&QueueModel> {
        self.input.queue.as_ref()
    }

    fn thm2_queue(&mut self, report: &mut VerificationReport) -> Result<()> {
        let Some(q) = self.queue_model().cloned() else {
            return Self::skip(report, "no queue model configured");
        };
        if q.rho1 * q.rho2 >= 1.0 {
            return Err(Error::DegenerateModel(format!("rho1 rho2 = {} >= 1", q.rho1 * q.rho2)));
        }
        if let Err(e) = q.check_decomposition_hypotheses() {
            return Self::skip(report, e.to_string());
        }
        let s = self.input.settings.clone();
        let grid = s.queue_grid.clone();
        let k = s.sigma_multiplier;
        let estimate = |rho1: f64, rho2: f64, report: &mut VerificationReport| -> Result<_> {
            let label = format!("queue|{rho1}|{rho2}");
            let seed = derive_seed(self.input.master_seed, &label);
            report.seeds.insert(label, seed);
            let mut budget = s.queue_budget.unwrap_or_else(|| QueueBudget::defaults_for(&q, 0));
            budget.seed = seed;
            let est = estimate_v_transform(&q.with_rates(rho1, rho2), &grid, &budget)?;
            if est.stationarity_warning {
                report.anomalies.push(format!("stationarity warning at rho = ({rho1}, {rho2})"));
            }
            Ok(est)
        };
        let full = estimate(q.rho1, q.rho2, report)?;
        let none = estimate(0.0, 0.0, report)?;
        let one = estimate(q.rho1, 0.0, report)?;
        let two = estimate(0.0, q.rho2, report)?;
        for est in [&full, &none, &one, &two] {
            let n = est.normalization;
            report.check(format!("normalization at rho = ({}, {})", est.rho1, est.rho2), (n.estimate - 1.0).abs(), k * n.std_error);
        }
        let te = |p: &crate::queue_sim::VPoint| TransformEstimate { s: p.s, estimate: p.estimate, std_error: p.std_error };
        for i in 0..grid.len() {
            let lhs = te(&full.points[i]).product(&te(&none.points[i]));
            let rhs = te(&one.points[i]).product(&te(&two.points[i]));
            report.check(format!("product gap at s = {}", grid[i]), (lhs.estimate - rhs.estimate).abs(), k * lhs.std_error.hypot(rhs.std_error));
        }
        let analytic = QueueTransform::new(&q)?;
        for p in &full.points {
            let want = analytic.g1_hat(Complex64::new(p.s, 0.0))?.re;
            report.check(format!("G1-hat vs simulation at s = {}", p.s), (p.estimate - want).abs(), k * p.std_error);
        }
        report.params["details"] = json!({ "budget": full.budget, "grid": grid });
        Ok(())
    }

    fn analytic_vs_sim(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (r1, r2) = self.rates();
        let transform = RiskTransform::new(&self.input.risk)?;
        let abscissa = transform.abscissa()?;
        let sample = self.u_sample(report, r1, r2, None)?;
        let s = self.input.settings.clone();
        let mut outside = Vec::new();
        for &x in &s.transform_grid {
            if x <= abscissa {
                outside.push(x);
                continue;
            }
            let want = transform.f1_hat(Complex64::new(x, 0.0))?.re;
            let got = empirical_lt(&sample.sample, x);
            report.check(format!("F1-hat vs simulation at s = {x}"), (got.estimate - want).abs(), s.sigma_multiplier * got.std_error + s.transform_slack);
        }
        if !outside.is_empty() {
            report.anomalies.push(format!("grid points not above the abscissa {abscissa}: {outside:?}"));
        }
        Ok(())
    }

    fn kernel_curve(&mut self, report: &mut VerificationReport) -> Result<()> {
        let m = self.input.risk.clone();
        let s = self.input.settings.clone();
        let zero = ExtendedRate::ZERO;
        let t = |model: &RiskModel| RiskTransform::new(model);
        let first = t(&m)?;
        let second = t(&m.swapped())?;
        let first_left = t(&m.with_rates(m.r1, zero))?;
        let first_right = t(&m.with_rates(zero, m.r2))?;
        let second_left = t(&m.with_rates(m.r1, zero).swapped())?;
        let second_right = t(&m.with_rates(zero, m.r2).swapped())?;
        let (mut worst_kernel, mut worst_product) = (0.0f64, 0.0f64);
        for v in log_grid(s.kernel_range.0, s.kernel_range.1, s.kernel_points) {
            let (s1, s2) = kernel_curve(&m.spec1, &m.spec2, Complex64::new(0.0, v))?;
            let coeffs = kernel_coeff_risk(&m, s1, s2)?;
            let a = coeffs.a1 * first.f1(s1)?;
            let b = coeffs.a2 * second.f1(s2)?;
            worst_kernel = worst_kernel.max((a + b).norm() / (a.norm() + b.norm()));
            let lhs = first.f1_hat(s1)? * second_right.f1_hat(s2)? * second_left.f1_hat(s2)?;
            let rhs = first_right.f1_hat(s1)? * first_left.f1_hat(s1)? * second.f1_hat(s2)?;
            worst_product = worst_product.max((lhs - rhs).norm() / (lhs.norm() + rhs.norm()));
        }
        report.check("kernel residual |A1 F1 + A2 F2| / (|A1 F1| + |A2 F2|)", worst_kernel, s.kernel_tolerance);
        report.check("transform product relative residual", worst_product, s.kernel_tolerance);
        Ok(())
    }

    fn axis(&self) -> Result<Arc<AxisData>> {
        Ok(Arc::new(AxisData::build(&self.input.risk.spec1, &self.input.risk.spec2, QuadratureConfig::default())?))
    }

    fn wh_limits(&mut self, report: &mut VerificationReport) -> Result<()> {
        let (mu1, mu2) = self.mu();
        let axis = self.axis()?;
        let s = self.input.settings.clone();
        let (spec1, spec2) = (&self.input.risk.spec1, &self.input.risk.spec2);
        let big = WhFactor::new(axis.clone(), 1e4)?;
        let small = WhFactor::new(axis, 1e-4)?;
        for &x in &s.limit_points {
            let z = Complex64::new(x, 0.0);
            report.check(format!("|Psi+_1e4({x}) - 1|"), (big.plus(z)? - 1.0).norm(), s.limit_tolerance);
            if mu1 > 0.0 {
                let lim = wh_limit(spec1, spec2, WhLimit::RZero, z)?;
                report.check(format!("|Psi+_1e-4({x}) - mu1 Phi1/s|"), (small.plus(z)? - lim).norm(), s.limit_tolerance);
            } else if mu2 > 0.0 {
                let lim = wh_limit(spec1, spec2, WhLimit::RZeroScaled, z)?;
                report.check(format!("|Psi+_1e-4({x})/1e-4 - mu2 Phi1/s|"), (small.plus(z)? / 1e-4 - lim).norm(), s.scaled_limit_tolerance);
            }
        }
        Ok(())
    }

    fn wh_identity(&mut self, report: &mut VerificationReport) -> Result<()> {
        let axis = self.axis()?;
        let s = self.input.settings.clone();
        for &r in &s.identity_rates {
            let f = WhFactor::new(axis.clone(), r)?;
            let worst = log_grid(s.identity_range.0, s.identity_range.1, s.identity_points)
                .into_iter()
                .map(|v| f.identity_residual(v))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            report.check(format!("max |Psi+ Psi- + k/psi| at r = {r}"), worst, s.identity_tolerance);
        }
        Ok(())
    }

    fn rescale_invariance(&mut self, report: &mut VerificationReport) -> Result<()> {
        let s = self.input.settings.clone();
        let c = s.rescale_factor;
        let label = "rescale|risk";
        let seed = derive_seed(self.input.master_seed, label);
        report.seeds.insert(label.into(), seed);
        let budget = self.budget(seed, s.rescale_replicas.max(1));
        let base = sample_u(&self.input.risk, &budget)?;
        let scaled = sample_u(&rescale_risk(&self.input.risk, c)?, &budget)?;
        let worst = base
            .by_replica
            .iter()
            .zip(&scaled.by_replica)
            .map(|(a, b)| if a.0 == b.0 { (a.1 - b.1).abs() } else { f64::INFINITY })
            .fold(0.0, f64::max);
        report.check(format!("max |U - U_rescaled| over {} replicas (c = {c})", budget.replicas), worst, self.epsilon);
        if base.by_replica.len() != scaled.by_replica.len() {
            report.check("replica count mismatch", 1.0, 0.0);
        }
        if let Some(q) = self.queue_model().cloned() {
            if q.rho1 * q.rho2 < 1.0 {
                let qs = rescale_queue(&q, c)?;
                let grid = [0.5, 1.0, 2.0];
                let mut worst_q = 0.0f64;
                for i in 0..4u64 {
                    let p = sample_paths(&q.spec1, &q.spec2, 2000.0, seed, i);
                    let ps = sample_paths(&qs.spec1, &qs.spec2, 2000.0, seed, i);
                    let a = replay_queue(&p, q.spec1.drift, q.spec2.drift, q.rho1, q.rho2, 0.0, 1, &grid, &[])?;
                    let b = replay_queue(&ps, qs.spec1.drift, qs.spec2.drift, qs.rho1, qs.rho2, 0.0, 1, &grid, &[])?;
                    for k in 0..grid.len() {
                        let (x, y) = (a.w2_empty_exp(k), b.w2_empty_exp(k));
                        worst_q = worst_q.max((x - y).abs() / x.abs().max(1e-300));
                    }
                }
                report.check("queue: relative change of int 1{W2=0} exp(-s W1) dt", worst_q, 1e-9);
            }
        }
        Ok(())
    }

    fn monotone_rates(&mut self, report: &mut VerificationReport) -> Result<()> {
        let s = self.input.settings.clone();
        let label = "monotone|risk";
        let seed = derive_seed(self.input.master_seed, label);
        report.seeds.insert(label.into(), seed);
        let ladder = |r: ExtendedRate| -> Vec<f64> {
            match r.as_finite() {
                Some(x) if x > 0.0 => vec![0.0, 0.5 * x, x, 2.0 * x],
                _ => vec![0.0, 0.5, 1.0, 2.0],
            }
        };
        let (l1, l2) = (ladder(self.input.risk.r1), ladder(self.input.risk.r2));
        let budget = self.budget(seed, s.monotone_replicas);
        let mut worst = 0.0f64;
        for replica in 0..s.monotone_replicas as u64 {
            let mut values = Vec::with_capacity(l1.len() * l2.len());
            for &a in &l1 {
                for &b in &l2 {
                    let m = self.input.risk.with_rates(ExtendedRate::Finite(a), ExtendedRate::Finite(b));
                    values.push((a, b, replica_u(&m, &budget, replica)?.value));
                }
            }
            for &(a, b, u) in &values {
                for &(a2, b2, u2) in &values {
                    if a <= a2 && b <= b2 {
                        worst = worst.max(u - u2);
                    }
                }
            }
        }
        report.check(format!("max decrease of U along increasing rates over {} replicas", s.monotone_replicas), worst, self.epsilon);
        report.params["details"] = json!({ "r1_ladder": l1, "r2_ladder": l2 });
        Ok(())
    }

    fn convolution_cdf(&mut self, report: &mut VerificationReport) -> Result<()> {
        let m = self.input.risk.clone();
        let s = self.input.settings.clone();
        let zero = ExtendedRate::ZERO;
        let full = RiskTransform::new(&m)?;
        let left = RiskTransform::new(&m.with_rates(m.r1, zero))?;
        let right = RiskTransform::new(&m.with_rates(zero, m.r2))?;
        let abscissa = full.abscissa()?;
        let cfg = InversionConfig { abscissa, ..Default::default() };
        let u_limit = if abscissa > 0.0 { 0.95 * std::f64::consts::LN_2 / abscissa } else { f64::INFINITY };
        let grid: Vec<f64> = s.cdf_grid.iter().copied().filter(|&u| u <= u_limit).collect();
        if grid.is_empty() {
            return Self::skip(report, format!("no grid point below {u_limit} where the inversion nodes exceed the abscissa"));
        }
        if grid.len() < s.cdf_grid.len() {
            report.anomalies.push(format!("grid truncated at u = {u_limit:.4} (abscissa {abscissa})"));
        }
        let u_top = *grid.last().unwrap();
        let n = (u_top / s.cdf_step).ceil() as usize;
        let step = u_top / n as f64;
        let fine: Vec<f64> = (1..=n).map(|k| k as f64 * step).collect();
        fn eval(t: &RiskTransform) -> impl Fn(f64) -> Result<f64> + '_ {
            move |x| Ok(t.f1_hat(Complex64::new(x, 0.0))?.re)
        }
        let fl = eval(&left);
        let fr = eval(&right);
        let ff = eval(&full);
        let a = invert_cdf_grid(&fl, &fine, &cfg)?;
        let b = invert_cdf_grid(&fr, &fine, &cfg)?;
        let direct = invert_cdf_grid(&ff, &grid, &cfg)?;
        let interp = |g: &crate::inversion::CdfGrid| {
            let values: Vec<f64> = std::iter::once(g.atom).chain(g.points.iter().map(|p| p.cdf)).collect();
            move |x: f64| {
                let pos = (x / step).clamp(0.0, n as f64);
                let i = (pos.floor() as usize).min(n - 1);
                let w = pos - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        };
        let (ca, cb) = (interp(&a), interp(&b));
        let mut worst = 0.0f64;
        for p in &direct.points {
            let conv = stieltjes_convolution(&ca, a.atom, &cb, p.u, step);
            worst = worst.max((conv - p.cdf).abs());
        }
        report.check("max |P(U[r1,r2] <= u) - (P(U[r1,0] <= .) * P(U[0,r2] <= .))(u)|", worst, s.cdf_tolerance);
        report.params["details"] = json!({ "u_max": u_top, "step": step });
        Ok(())
    }
}

/// Checks that the suite can run on this input at all.
pub fn check_suite(input: &VerifyInput, suite: &[VerifyKind]) -> Result<()> {
    validate_risk(&input.risk)?;
    if suite.contains(&VerifyKind::Thm2Queue) {
        if let Some(q) = &input.queue {
            crate::model::validate_queue(q)?;
            if q.rho1 * q.rho2 >= 1.0 {
                return Err(Error::DegenerateModel(format!("rho1 rho2 = {} >= 1", q.rho1 * q.rho2)));
            }
        }
    }
    Ok(())
}

/// Runs `suite` in order; returns the reports and whether all passed.
pub fn run_suite(input: &VerifyInput, suite: &[VerifyKind]) -> Result<(Vec<VerificationReport>, bool)> {
    if suite.is_empty() {
        return Ok((Vec::new(), true));
    }
    check_suite(input, suite)?;
    let mut verifier = Verifier::new(input.clone())?;
    let reports: Vec<VerificationReport> = suite
        .iter()
        .map(|&k| {
            let r = verifier.verify(k);
            log::info!("{}", r.summary());
            r
        })
        .collect();
    let pass = reports.iter().all(|r| r.pass);
    Ok((reports, pass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;

    fn input(risk: RiskModel, queue: Option<QueueModel>, replicas: usize) -> VerifyInput {
        let settings = VerifySettings { replicas, horizon: Some(60.0), rescale_replicas: 100, monotone_replicas: 10, ..Default::default() };
        VerifyInput { risk, queue, settings, master_seed: 7 }
    }

    #[test]
    fn seeds_are_label_dependent() {
        assert_ne!(derive_seed(7, "a"), derive_seed(7, "b"));
        assert_ne!(derive_seed(7, "a"), derive_seed(8, "a"));
        assert_eq!(derive_seed(7, "a"), derive_seed(7, "a"));
    }

    #[test]
    fn suite_parsing() {
        assert_eq!(parse_suite("").unwrap(), vec![]);
        assert_eq!(parse_suite("all").unwrap().len(), 14);
        assert_eq!(parse_suite("thm1_main, wh_identity").unwrap(), vec![VerifyKind::Thm1Main, VerifyKind::WhIdentity]);
        assert!(parse_suite("thm3").is_err());
        for k in VerifyKind::ALL {
            assert_eq!(k.name().parse::<VerifyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn empty_suite_passes() {
        let (reports, pass) = run_suite(&input(cfg_a_risk(), None, 10), &[]).unwrap();
        assert!(reports.is_empty() && pass);
    }

    #[test]
    fn degenerate_queue_is_rejected() {
        let q = cfg_a_queue().with_rates(2.0, 0.6);
        assert!(matches!(run_suite(&input(cfg_a_risk(), Some(q), 10), &[VerifyKind::Thm2Queue]), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn same_sample_passes_and_mismatch_fails() {
        let m = cfg_a_risk();
        let budget = SimulationBudget { replicas: 4000, horizon: 60.0, epsilon: 1e-4, x_max: 50.0, seed: 1 };
        let full = sample_u(&m, &budget).unwrap();
        let r = ks_two_sample(&full.sample, &full.sample, 0.005);
        assert!(r.pass && r.statistic == 0.0);
        let budget = SimulationBudget { seed: 2, ..budget };
        let left = sample_u(&m.with_rates(m.r1, ExtendedRate::ZERO), &budget).unwrap();
        let r = ks_two_sample(&full.sample, &left.sample, 0.005);
        assert!(!r.pass && r.statistic > 2.0 * r.threshold, "{r:?}");
    }

    #[test]
    fn hypotheses_gate_kinds() {
        let mut v = Verifier::new(input(cfg_b_risk(), Some(cfg_b_queue()), 10)).unwrap();
        for k in [VerifyKind::Thm1Supp2, VerifyKind::Thm1SuppCombined, VerifyKind::Thm2Queue] {
            let r = v.verify(k);
            assert!(r.skipped.is_some() && r.pass, "{k}");
        }
    }

    #[test]
    fn small_thm1_run_is_reproducible() {
        let run = || run_suite(&input(cfg_a_risk(), None, 2000), &[VerifyKind::Thm1Main]).unwrap();
        let (a, pass) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(pass, "{:?}", a[0].statistics);
    }
}
