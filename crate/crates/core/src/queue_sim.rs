//! Event-driven simulation of two workload queues whose idle server helps
//! the other, with stationary time averages for transform estimates.
//!
//! Arrivals of work to queue `i` are the jumps of driver `i`, drawn exactly
//! as in [`crate::risk_sim`]. Between arrivals the workloads are linear, so
//! every time integral is evaluated in closed form per segment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_queue, QueueModel};
use crate::risk_sim::{sample_paths, PathPair};

pub const DEFAULT_BATCHES: usize = 20;
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.2;
pub const DEFAULT_REPLICAS: usize = 8;

/// Time integrals over one batch of the measurement window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchIntegrals {
    pub duration: f64,
    /// `int 1{W2 = 0} exp(-s W1) dt` per `s` in the grid.
    pub w2_empty_exp: Vec<f64>,
    pub w2_empty: f64,
    pub both_empty: f64,
    /// `int exp(-s1 W1 - s2 W2) dt` per pair in the joint grid.
    pub joint: Vec<f64>,
}

impl BatchIntegrals {
    fn new(duration: f64, ns: usize, nj: usize) -> Self {
        BatchIntegrals { duration, w2_empty_exp: vec![0.0; ns], w2_empty: 0.0, both_empty: 0.0, joint: vec![0.0; nj] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueTrajectoryStats {
    pub horizon: f64,
    pub burn_in: f64,
    pub s_grid: Vec<f64>,
    pub joint_grid: Vec<(f64, f64)>,
    pub batches: Vec<BatchIntegrals>,
    /// Workloads at the horizon.
    pub final_state: (f64, f64),
}

impl QueueTrajectoryStats {
    pub fn measured_time(&self) -> f64 {
        self.batches.iter().map(|b| b.duration).sum()
    }

    pub fn both_empty_time(&self) -> f64 {
        self.batches.iter().map(|b| b.both_empty).sum()
    }

    pub fn w2_empty_time(&self) -> f64 {
        self.batches.iter().map(|b| b.w2_empty).sum()
    }

    pub fn w2_empty_exp(&self, k: usize) -> f64 {
        self.batches.iter().map(|b| b.w2_empty_exp[k]).sum()
    }

    pub fn joint(&self, k: usize) -> f64 {
        self.batches.iter().map(|b| b.joint[k]).sum()
    }
}

/// `int_0^L exp(-(alpha - k x)) dx` where `alpha - k L >= 0`.
fn exp_integral(alpha: f64, k: f64, len: f64) -> f64 {
    let kl = k * len;
    if kl.abs() < 1e-300 || k == 0.0 {
        (-alpha).exp() * len
    } else if kl.abs() < 1.0 {
        (-alpha).exp() * kl.exp_m1() / k
    } else {
        ((-(alpha - kl)).exp() - (-alpha).exp()) / k
    }
}

struct Accumulator<'a> {
    s_grid: &'a [f64],
    joint_grid: &'a [(f64, f64)],
    start: f64,
    batch_len: f64,
    batches: Vec<BatchIntegrals>,
}

impl Accumulator<'_> {
    /// Adds the segment `w_i(t0 + x) = a_i - b_i x`, `0 <= x <= len`.
    fn segment(&mut self, t0: f64, len: f64, a1: f64, b1: f64, a2: f64, b2: f64) {
        let end = self.start + self.batch_len * self.batches.len() as f64;
        let mut lo = t0.max(self.start);
        let hi = (t0 + len).min(end);
        while lo < hi {
            let k = (((lo - self.start) / self.batch_len) as usize).min(self.batches.len() - 1);
            let batch_end = (self.start + (k + 1) as f64 * self.batch_len).min(hi);
            let piece = batch_end - lo;
            if piece > 0.0 {
                let x0 = lo - t0;
                let (w1, w2) = ((a1 - b1 * x0).max(0.0), (a2 - b2 * x0).max(0.0));
                self.piece(k, piece, w1, b1, w2, b2);
            }
            if batch_end <= lo {
                break;
            }
            lo = batch_end;
        }
    }

    fn piece(&mut self, k: usize, len: f64, w1: f64, b1: f64, w2: f64, b2: f64) {
        let batch = &mut self.batches[k];
        let w2_empty = w2 == 0.0 && b2 == 0.0;
        if w2_empty {
            batch.w2_empty += len;
            if w1 == 0.0 && b1 == 0.0 {
                batch.both_empty += len;
            }
            for (acc, &s) in batch.w2_empty_exp.iter_mut().zip(self.s_grid) {
                *acc += exp_integral(s * w1, s * b1, len);
            }
        }
        for (acc, &(s1, s2)) in batch.joint.iter_mut().zip(self.joint_grid) {
            *acc += exp_integral(s1 * w1 + s2 * w2, s1 * b1 + s2 * b2, len);
        }
    }
}

/// Replays the workloads from `(0, 0)` and integrates over `[burn_in, T]`
/// split into `batches` equal batches.
#[allow(clippy::too_many_arguments)]
pub fn replay_queue(
    paths: &PathPair,
    c1: f64,
    c2: f64,
    rho1: f64,
    rho2: f64,
    burn_in: f64,
    batches: usize,
    s_grid: &[f64],
    joint_grid: &[(f64, f64)],
) -> Result<QueueTrajectoryStats> {
    if rho1 * rho2 >= 1.0 {
        return Err(Error::DegenerateModel(format!("rho1 rho2 = {} >= 1", rho1 * rho2)));
    }
    let horizon = paths.horizon;
    if !(0.0..horizon).contains(&burn_in) || batches == 0 {
        return Err(Error::Domain(format!("need 0 <= burn-in < T and at least one batch, got {burn_in}, {batches}")));
    }
    let batch_len = (horizon - burn_in) / batches as f64;
    let mut acc = Accumulator {
        s_grid,
        joint_grid,
        start: burn_in,
        batch_len,
        batches: (0..batches).map(|_| BatchIntegrals::new(batch_len, s_grid.len(), joint_grid.len())).collect(),
    };
    let (mut w1, mut w2, mut t) = (0.0f64, 0.0f64, 0.0f64);
    let drain = |acc: &mut Accumulator, w1: &mut f64, w2: &mut f64, t: &mut f64, until: f64| {
        while *t < until {
            let remaining = until - *t;
            match (*w1 > 0.0, *w2 > 0.0) {
                (true, true) => {
                    let (e1, e2) = (*w1 / c1, *w2 / c2);
                    let len = e1.min(e2).min(remaining);
                    acc.segment(*t, len, *w1, c1, *w2, c2);
                    *w1 = if len == e1 { 0.0 } else { (*w1 - c1 * len).max(0.0) };
                    *w2 = if len == e2 { 0.0 } else { (*w2 - c2 * len).max(0.0) };
                    *t += len;
                }
                (true, false) => {
                    let b1 = c1 + c2 * rho2;
                    let e1 = *w1 / b1;
                    let len = e1.min(remaining);
                    acc.segment(*t, len, *w1, b1, 0.0, 0.0);
                    *w1 = if len == e1 { 0.0 } else { (*w1 - b1 * len).max(0.0) };
                    *t += len;
                }
                (false, true) => {
                    let b2 = c2 + c1 * rho1;
                    let e2 = *w2 / b2;
                    let len = e2.min(remaining);
                    acc.segment(*t, len, 0.0, 0.0, *w2, b2);
                    *w2 = if len == e2 { 0.0 } else { (*w2 - b2 * len).max(0.0) };
                    *t += len;
                }
                (false, false) => {
                    acc.segment(*t, remaining, 0.0, 0.0, 0.0, 0.0);
                    *t = until;
                }
            }
        }
    };
    let (mut i, mut j) = (0, 0);
    while i < paths.jumps1.len() || j < paths.jumps2.len() {
        let first = j >= paths.jumps2.len() || (i < paths.jumps1.len() && paths.jumps1[i].time < paths.jumps2[j].time);
        let jump = if first { paths.jumps1[i] } else { paths.jumps2[j] };
        drain(&mut acc, &mut w1, &mut w2, &mut t, jump.time);
        if first {
            w1 += jump.size;
            i += 1;
        } else {
            w2 += jump.size;
            j += 1;
        }
    }
    drain(&mut acc, &mut w1, &mut w2, &mut t, horizon);
    Ok(QueueTrajectoryStats {
        horizon,
        burn_in,
        s_grid: s_grid.to_vec(),
        joint_grid: joint_grid.to_vec(),
        batches: acc.batches,
        final_state: (w1, w2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueBudget {
    pub replicas: usize,
    /// Horizon of each replica.
    pub horizon: f64,
    pub burn_in_fraction: f64,
    pub batches: usize,
    pub seed: u64,
}

impl QueueBudget {
    /// Total simulated time `1e6 / min(c1, c2)` over [`DEFAULT_REPLICAS`] replicas.
    pub fn defaults_for(model: &QueueModel, seed: u64) -> Self {
        let total = 1e6 / model.spec1.drift.min(model.spec2.drift);
        QueueBudget {
            replicas: DEFAULT_REPLICAS,
            horizon: total / DEFAULT_REPLICAS as f64,
            burn_in_fraction: DEFAULT_BURN_IN_FRACTION,
            batches: DEFAULT_BATCHES,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 || self.batches < 2 || !(self.horizon > 0.0) || !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!("invalid queue budget {self:?}")));
        }
        Ok(())
    }
}

fn simulate(model: &QueueModel, budget: &QueueBudget, s_grid: &[f64], joint_grid: &[(f64, f64)]) -> Result<Vec<QueueTrajectoryStats>> {
    budget.validate()?;
    (0..budget.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let paths = sample_paths(&model.spec1, &model.spec2, budget.horizon, budget.seed, i);
            replay_queue(
                &paths,
                model.spec1.drift,
                model.spec2.drift,
                model.rho1,
                model.rho2,
                budget.burn_in_fraction * budget.horizon,
                budget.batches,
                s_grid,
                joint_grid,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VPoint {
    pub s: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimates of `E exp(-s V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VTransformEstimate {
    pub rho1: f64,
    pub rho2: f64,
    /// Raw estimator at each `s` of the grid.
    pub points: Vec<VPoint>,
    /// Raw estimator at `s = 0`; its expectation is 1.
    pub normalization: VPoint,
    /// First and second halves of the batches differ by more than 3 sigma somewhere.
    pub stationarity_warning: bool,
    pub budget: QueueBudget,
}

impl VTransformEstimate {
    /// Points divided by the `s = 0` estimate.
    pub fn normalized(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate / self.normalization.estimate).collect()
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// `E exp(-sV)` from time averages of `1{W2 = 0} exp(-s W1)` and of the
/// both-empty indicator, with batch-means standard errors.
pub fn estimate_v_transform(model: &QueueModel, s_grid: &[f64], budget: &QueueBudget) -> Result<VTransformEstimate> {
    model.check_decomposition_hypotheses()?;
    if s_grid.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::Domain("V transform needs finite s >= 0".into()));
    }
    let (mu1, mu2) = model.means();
    let (c1, c2, rho1, rho2) = (model.spec1.drift, model.spec2.drift, model.rho1, model.rho2);
    let denom = mu2 + rho1 * mu1;
    let k_w2 = c2 * (1.0 - rho1 * rho2) / denom;
    let k_00 = rho1 * (c2 * rho2 + c1) / denom;

    let mut grid = vec![0.0];
    grid.extend_from_slice(s_grid);
    let runs = simulate(model, budget, &grid, &[])?;
    let batch_values = |k: usize| -> Vec<f64> {
        runs.iter()
            .flat_map(|r| r.batches.iter().map(move |b| (k_w2 * b.w2_empty_exp[k] + k_00 * b.both_empty) / b.duration))
            .collect()
    };
    let half = budget.batches / 2;
    let mut warning = false;
    let mut points = Vec::with_capacity(grid.len());
    for (k, &s) in grid.iter().enumerate() {
        let values = batch_values(k);
        let (estimate, std_error) = mean_and_se(&values);
        let (early, late): (Vec<f64>, Vec<f64>) = {
            let mut e = Vec::new();
            let mut l = Vec::new();
            for (idx, v) in values.iter().enumerate() {
                if idx % budget.batches < half {
                    e.push(*v);
                } else {
                    l.push(*v);
                }
            }
            (e, l)
        };
        let ((m1, s1), (m2, s2)) = (mean_and_se(&early), mean_and_se(&late));
        if (m1 - m2).abs() > 3.0 * s1.hypot(s2) {
            warning = true;
        }
        points.push(VPoint { s, estimate, std_error });
    }
    if warning {
        log::warn!("stationarity check: first and second halves differ by more than 3 sigma (rho = {rho1}, {rho2})");
    }
    let normalization = points.remove(0);
    Ok(VTransformEstimate { rho1, rho2, points, normalization, stationarity_warning: warning, budget: *budget })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub s1: f64,
    pub s2: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Time averages of `exp(-s1 W1 - s2 W2)`.
pub fn estimate_joint_transform(model: &QueueModel, grid: &[(f64, f64)], budget: &QueueBudget) -> Result<Vec<JointPoint>> {
    validate_queue(model)?;
    if model.rho1 * model.rho2 >= 1.0 {
        return Err(Error::DegenerateModel(format!("rho1 rho2 = {} >= 1", model.rho1 * model.rho2)));
    }
    let runs = simulate(model, budget, &[], grid)?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &(s1, s2))| {
            let values: Vec<f64> = runs.iter().flat_map(|r| r.batches.iter().map(move |b| b.joint[k] / b.duration)).collect();
            let (estimate, std_error) = mean_and_se(&values);
            JointPoint { s1, s2, estimate, std_error }
        })
        .collect())
}
