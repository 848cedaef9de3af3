//! Event-driven simulation of the coupled risk model and extraction of the
//! minimal initial capital `U` of company 1.
//!
//! Replica `i` of a run with seed `s` draws company `k` (0 or 1) from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `2i + k`. Each company's stream
//! alternates inter-arrival and jump-size draws, so any replica can be
//! regenerated in isolation and a longer horizon extends a shorter one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_risk, CompoundPoissonSpec, ExtendedRate, RiskModel};
use crate::stats::EmpiricalSample;

/// Shift applied to a company-2 jump that coincides with a company-1 jump.
pub const TIE_SHIFT: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: u32 = 10;
const MAX_FAILURE_FRACTION: f64 = 1e-3;
const MIN_ACCEPTANCE: f64 = 0.01;
const MIN_ATTEMPTS_FOR_REJECTION: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Jumps of both companies on `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPair {
    pub horizon: f64,
    pub jumps1: Vec<Jump>,
    pub jumps2: Vec<Jump>,
    pub seed: u64,
    pub stream: u64,
    /// Company-2 jumps shifted by [`TIE_SHIFT`].
    pub ties_broken: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    size: f64,
    first: bool,
}

impl PathPair {
    /// Builds a path pair from explicit jump lists (sorted by time).
    pub fn from_jumps(horizon: f64, jumps1: Vec<Jump>, jumps2: Vec<Jump>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        for jumps in [&jumps1, &jumps2] {
            if jumps.windows(2).any(|w| w[0].time >= w[1].time) {
                return Err(Error::Domain("jump times must be strictly increasing".into()));
            }
            if jumps.iter().any(|j| !(j.time > 0.0 && j.time <= horizon && j.size > 0.0)) {
                return Err(Error::Domain("jumps need times in (0, T] and positive sizes".into()));
            }
        }
        let mut p = PathPair { horizon, jumps1, jumps2, seed: 0, stream: 0, ties_broken: 0 };
        p.break_ties();
        Ok(p)
    }

    fn break_ties(&mut self) {
        let mut i = 0;
        let mut count = 0;
        for j in self.jumps2.iter_mut() {
            while i < self.jumps1.len() && self.jumps1[i].time < j.time {
                i += 1;
            }
            if i < self.jumps1.len() && self.jumps1[i].time == j.time {
                j.time += TIE_SHIFT;
                count += 1;
            }
        }
        if count > 0 {
            log::debug!("broke {count} simultaneous jumps on stream {}", self.stream);
        }
        self.ties_broken = count;
    }

    fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.jumps1.len() + self.jumps2.len());
        let (mut i, mut j) = (0, 0);
        while i < self.jumps1.len() || j < self.jumps2.len() {
            let take_first = j >= self.jumps2.len() || (i < self.jumps1.len() && self.jumps1[i].time < self.jumps2[j].time);
            if take_first {
                out.push(Event { time: self.jumps1[i].time, size: self.jumps1[i].size, first: true });
                i += 1;
            } else {
                out.push(Event { time: self.jumps2[j].time, size: self.jumps2[j].size, first: false });
                j += 1;
            }
        }
        out
    }

    /// Whether `c2 t - sum of company-2 jumps` stays nonnegative on `[0, T]`.
    pub fn second_path_nonnegative(&self, drift2: f64) -> bool {
        let mut total = 0.0;
        self.jumps2.iter().all(|j| {
            total += j.size;
            drift2 * j.time - total >= 0.0
        })
    }
}

fn sample_company<R: Rng>(spec: &CompoundPoissonSpec, horizon: f64, rng: &mut R) -> Vec<Jump> {
    let mut jumps = Vec::new();
    if spec.rate <= 0.0 {
        return jumps;
    }
    let mut t = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / spec.rate;
        if t > horizon {
            return jumps;
        }
        let size = spec.jumps.sample(rng);
        jumps.push(Jump { time: t, size });
    }
}

/// Paths of replica `replica` under master seed `seed`.
pub fn sample_paths(spec1: &CompoundPoissonSpec, spec2: &CompoundPoissonSpec, horizon: f64, seed: u64, replica: u64) -> PathPair {
    assert!(horizon > 0.0, "horizon must be positive");
    let mut rng1 = ChaCha8Rng::seed_from_u64(seed);
    rng1.set_stream(2 * replica);
    let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
    rng2.set_stream(2 * replica + 1);
    let jumps1 = sample_company(spec1, horizon, &mut rng1);
    let jumps2 = sample_company(spec2, horizon, &mut rng2);
    let mut p = PathPair { horizon, jumps1, jumps2, seed, stream: replica, ties_broken: 0 };
    p.break_ties();
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuinCause {
    Company1DeficitUnpayable,
    Company2DeficitUnpayable,
    InfiniteRateDeficit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReplayOutcome {
    SurvivedToHorizon { y1: f64, y2: f64 },
    Ruined { time: f64, cause: RuinCause },
}

impl ReplayOutcome {
    pub fn survived(&self) -> bool {
        matches!(self, ReplayOutcome::SurvivedToHorizon { .. })
    }
}

/// Drifts and rates needed to replay a path pair.
#[derive(Debug, Clone, Copy)]
struct Dynamics {
    c1: f64,
    c2: f64,
    r1: ExtendedRate,
    r2: ExtendedRate,
}

fn replay_events(events: &[Event], horizon: f64, d: Dynamics, x1: f64, x2: f64) -> ReplayOutcome {
    let (mut y1, mut y2, mut t) = (x1, x2, 0.0);
    for e in events {
        let dt = e.time - t;
        y1 += d.c1 * dt;
        y2 += d.c2 * dt;
        t = e.time;
        if e.first {
            y1 -= e.size;
            if y1 < 0.0 {
                match d.r1 {
                    ExtendedRate::Infinite => return ReplayOutcome::Ruined { time: t, cause: RuinCause::InfiniteRateDeficit },
                    ExtendedRate::Finite(r) => {
                        y2 += r * y1;
                        y1 = 0.0;
                        if y2 < 0.0 {
                            return ReplayOutcome::Ruined { time: t, cause: RuinCause::Company1DeficitUnpayable };
                        }
                    }
                }
            }
        } else {
            y2 -= e.size;
            if y2 < 0.0 {
                match d.r2 {
                    ExtendedRate::Infinite => return ReplayOutcome::Ruined { time: t, cause: RuinCause::InfiniteRateDeficit },
                    ExtendedRate::Finite(r) => {
                        y1 += r * y2;
                        y2 = 0.0;
                        if y1 < 0.0 {
                            return ReplayOutcome::Ruined { time: t, cause: RuinCause::Company2DeficitUnpayable };
                        }
                    }
                }
            }
        }
    }
    let dt = horizon - t;
    ReplayOutcome::SurvivedToHorizon { y1: y1 + d.c1 * dt, y2: y2 + d.c2 * dt }
}

/// Replays the refill dynamics from `(x1, x2)` with premium rates `c1, c2`.
pub fn replay_risk(paths: &PathPair, c1: f64, c2: f64, x1: f64, x2: f64, r1: ExtendedRate, r2: ExtendedRate) -> ReplayOutcome {
    replay_events(&paths.events(), paths.horizon, Dynamics { c1, c2, r1, r2 }, x1, x2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UExtraction {
    pub value: f64,
    /// Survival was not monotone in `x1` and the grid scan was used.
    pub anomaly: bool,
}

fn extract_events(events: &[Event], horizon: f64, d: Dynamics, epsilon: f64, x_max: f64) -> Result<UExtraction> {
    let survives = |x: f64| replay_events(events, horizon, d, x, 0.0).survived();
    if survives(0.0) {
        return Ok(UExtraction { value: 0.0, anomaly: false });
    }
    if !survives(x_max) {
        return Err(Error::BracketFailure(x_max));
    }
    let (mut lo, mut hi) = (0.0, x_max);
    while hi - lo > epsilon {
        let mid = 0.5 * (lo + hi);
        if survives(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi - epsilon > 0.0 && survives(hi - epsilon) {
        log::warn!("survival not monotone in x1 below {hi}; scanning at resolution {epsilon}");
        let mut k = 1u64;
        loop {
            let x = (k as f64 * epsilon).min(hi);
            if survives(x) {
                return Ok(UExtraction { value: x, anomaly: true });
            }
            k += 1;
        }
    }
    Ok(UExtraction { value: hi, anomaly: false })
}

/// Minimal `x1` in `[0, x_max]`, to within `epsilon`, for which the replay
/// from `(x1, 0)` survives to the horizon.
pub fn extract_u(paths: &PathPair, c1: f64, c2: f64, r1: ExtendedRate, r2: ExtendedRate, epsilon: f64, x_max: f64) -> Result<UExtraction> {
    extract_events(&paths.events(), paths.horizon, Dynamics { c1, c2, r1, r2 }, epsilon, x_max)
}

/// Bisection and horizon settings for sampling `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationBudget {
    pub replicas: usize,
    pub horizon: f64,
    pub epsilon: f64,
    pub x_max: f64,
    pub seed: u64,
}

impl SimulationBudget {
    /// `T = 200 / min(positive drift cushions)`, `epsilon = 1e-4 E J1`, `x_max = 50 E J1`.
    pub fn defaults_for(model: &RiskModel, replicas: usize, seed: u64) -> Self {
        let mean_jump = model.spec1.jumps.mean();
        SimulationBudget { replicas, horizon: default_horizon(model), epsilon: 1e-4 * mean_jump, x_max: 50.0 * mean_jump, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 || !(self.horizon > 0.0) || !(self.epsilon > 0.0) || !(self.x_max > self.epsilon) {
            return Err(Error::Config(format!("invalid simulation budget {self:?}")));
        }
        Ok(())
    }
}

/// `200 / min` over the positive values among `mu1`, `mu2` and the refill
/// cushions `mu2 + r1 mu1`, `mu1 + r2 mu2` of a company with nonpositive drift.
pub fn default_horizon(model: &RiskModel) -> f64 {
    let (m1, m2) = model.means();
    let mut cushions = vec![m1, m2];
    if let Some(r1) = model.r1.as_finite() {
        if m1 <= 0.0 {
            cushions.push(m2 + r1 * m1);
        }
    }
    if let Some(r2) = model.r2.as_finite() {
        if m2 <= 0.0 {
            cushions.push(m1 + r2 * m2);
        }
    }
    let smallest = cushions.into_iter().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        200.0 / smallest
    } else {
        200.0
    }
}

/// Simulated values of `U_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct USample {
    pub sample: EmpiricalSample,
    /// `(replica, U_T)` in replica order.
    pub by_replica: Vec<(u64, f64)>,
    pub r1: ExtendedRate,
    pub r2: ExtendedRate,
    pub budget: SimulationBudget,
    pub bracket_failures: usize,
    pub bracket_growths: usize,
    pub anomalies: usize,
    /// `(accepted, attempts)` for conditional samples.
    pub acceptance: Option<(u64, u64)>,
}

impl USample {
    pub fn values_in_replica_order(&self) -> Vec<f64> {
        self.by_replica.iter().map(|&(_, u)| u).collect()
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance.map(|(a, n)| a as f64 / n as f64)
    }
}

enum ReplicaResult {
    Value { value: f64, anomaly: bool, grown: bool },
    Rejected,
    Failed,
}

fn run_replica(model: &RiskModel, budget: &SimulationBudget, replica: u64, condition: Option<&Condition>) -> Result<ReplicaResult> {
    let paths = sample_paths(&model.spec1, &model.spec2, budget.horizon, budget.seed, replica);
    let events = paths.events();
    let d = Dynamics { c1: model.spec1.drift, c2: model.spec2.drift, r1: model.r1, r2: model.r2 };
    match condition {
        Some(Condition::SecondPathNonnegative) if !paths.second_path_nonnegative(model.spec2.drift) => return Ok(ReplicaResult::Rejected),
        Some(Condition::UZeroAtRates(r1, r2)) => {
            let alt = Dynamics { r1: *r1, r2: *r2, ..d };
            if !replay_events(&events, paths.horizon, alt, 0.0, 0.0).survived() {
                return Ok(ReplicaResult::Rejected);
            }
        }
        _ => {}
    }
    let mut x_max = budget.x_max;
    for doubling in 0..=MAX_BRACKET_DOUBLINGS {
        match extract_events(&events, paths.horizon, d, budget.epsilon, x_max) {
            Ok(u) => return Ok(ReplicaResult::Value { value: u.value, anomaly: u.anomaly, grown: doubling > 0 }),
            Err(Error::BracketFailure(_)) => x_max *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Ok(ReplicaResult::Failed)
}

/// `U_T` of one replica, doubling `x_max` on bracket failure up to 2^10 times.
pub fn replica_u(model: &RiskModel, budget: &SimulationBudget, replica: u64) -> Result<UExtraction> {
    match run_replica(model, budget, replica, None)? {
        ReplicaResult::Value { value, anomaly, .. } => Ok(UExtraction { value, anomaly }),
        _ => Err(Error::BracketFailure(budget.x_max * f64::from(1u32 << MAX_BRACKET_DOUBLINGS))),
    }
}

struct Tally {
    by_replica: Vec<(u64, f64)>,
    failures: usize,
    growths: usize,
    anomalies: usize,
}

impl Tally {
    fn new() -> Self {
        Tally { by_replica: Vec::new(), failures: 0, growths: 0, anomalies: 0 }
    }

    fn push(&mut self, replica: u64, r: ReplicaResult) {
        match r {
            ReplicaResult::Value { value, anomaly, grown } => {
                self.by_replica.push((replica, value));
                self.anomalies += anomaly as usize;
                self.growths += grown as usize;
            }
            ReplicaResult::Failed => self.failures += 1,
            ReplicaResult::Rejected => {}
        }
    }

    fn finish(self, model: &RiskModel, budget: SimulationBudget, acceptance: Option<(u64, u64)>, origin: String) -> Result<USample> {
        let attempted = self.by_replica.len() + self.failures;
        if self.failures as f64 > MAX_FAILURE_FRACTION * attempted as f64 {
            return Err(Error::TooManyBracketFailures { failures: self.failures, replicas: attempted });
        }
        if self.by_replica.is_empty() {
            return Err(Error::TooManyBracketFailures { failures: self.failures, replicas: attempted });
        }
        let sample = EmpiricalSample::new(self.by_replica.iter().map(|&(_, u)| u).collect(), origin, budget.seed, budget.horizon);
        Ok(USample {
            sample,
            by_replica: self.by_replica,
            r1: model.r1,
            r2: model.r2,
            budget,
            bracket_failures: self.failures,
            bracket_growths: self.growths,
            anomalies: self.anomalies,
            acceptance,
        })
    }
}

/// `budget.replicas` independent draws of `U_T` at the model's rates.
pub fn sample_u(model: &RiskModel, budget: &SimulationBudget) -> Result<USample> {
    validate_risk(model)?;
    budget.validate()?;
    let results = (0..budget.replicas as u64)
        .into_par_iter()
        .map(|i| run_replica(model, budget, i, None))
        .collect::<Result<Vec<_>>>()?;
    let mut tally = Tally::new();
    for (i, r) in results.into_iter().enumerate() {
        tally.push(i as u64, r);
    }
    tally.finish(model, *budget, None, format!("U[{}, {}]", model.r1, model.r2))
}

/// Conditioning events for rejection sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// The raw company-2 path never goes negative.
    SecondPathNonnegative,
    /// `U_T = 0` under the given rates.
    UZeroAtRates(ExtendedRate, ExtendedRate),
}

/// Draws replicas in order until `budget.replicas` satisfy `condition`.
pub fn sample_u_conditional(model: &RiskModel, condition: Condition, budget: &SimulationBudget) -> Result<USample> {
    validate_risk(model)?;
    budget.validate()?;
    let target = budget.replicas as u64;
    let mut tally = Tally::new();
    let mut accepted = 0u64;
    let mut next = 0u64;
    let mut last_accepted = 0u64;
    while accepted < target {
        let rate = if next == 0 { 1.0 } else { (accepted as f64 / next as f64).max(MIN_ACCEPTANCE) };
        let chunk = (((target - accepted) as f64 * 1.1 / rate).ceil() as u64).max(MIN_ATTEMPTS_FOR_REJECTION);
        let results = (next..next + chunk)
            .into_par_iter()
            .map(|i| run_replica(model, budget, i, Some(&condition)))
            .collect::<Result<Vec<_>>>()?;
        for (k, r) in results.into_iter().enumerate() {
            if accepted == target {
                break;
            }
            let replica = next + k as u64;
            if !matches!(r, ReplicaResult::Rejected) {
                accepted += 1;
                last_accepted = replica;
            }
            tally.push(replica, r);
        }
        next += chunk;
        if accepted < target && (accepted as f64) < MIN_ACCEPTANCE * next as f64 {
            return Err(Error::AcceptanceTooLow { rate: accepted as f64 / next as f64, attempts: next });
        }
    }
    let attempts = last_accepted + 1;
    let origin = format!("U[{}, {}] | {:?}", model.r1, model.r2, condition);
    tally.finish(model, *budget, Some((accepted, attempts)), origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::{cfg_a_risk, cfg_b_risk};
    use crate::model::JumpDistribution;

    const INF: ExtendedRate = ExtendedRate::Infinite;

    fn fin(x: f64) -> ExtendedRate {
        ExtendedRate::Finite(x)
    }

    fn one_jump(time: f64, size: f64) -> PathPair {
        PathPair::from_jumps(5.0, vec![Jump { time, size }], vec![]).unwrap()
    }

    #[test]
    fn replay_without_jumps() {
        let p = PathPair::from_jumps(10.0, vec![], vec![]).unwrap();
        assert_eq!(replay_risk(&p, 2.0, 3.0, 1.0, 0.5, INF, INF), ReplayOutcome::SurvivedToHorizon { y1: 21.0, y2: 30.5 });
        assert_eq!(extract_u(&p, 2.0, 3.0, fin(1.0), fin(1.0), 1e-4, 10.0).unwrap().value, 0.0);
    }

    #[test]
    fn replay_hand_examples() {
        let p = one_jump(1.0, 3.0);
        assert!(replay_risk(&p, 2.0, 3.0, 0.0, 0.0, fin(1.0), fin(0.0)).survived());
        assert_eq!(
            replay_risk(&p, 2.0, 3.0, 0.0, 0.0, fin(4.0), fin(0.0)),
            ReplayOutcome::Ruined { time: 1.0, cause: RuinCause::Company1DeficitUnpayable }
        );
        assert_eq!(
            replay_risk(&p, 2.0, 3.0, 0.0, 0.0, INF, fin(0.0)),
            ReplayOutcome::Ruined { time: 1.0, cause: RuinCause::InfiniteRateDeficit }
        );
    }

    #[test]
    fn extraction_hand_examples() {
        let p = one_jump(1.0, 3.0);
        let u = extract_u(&p, 2.0, 3.0, fin(6.0), fin(0.3), 1e-6, 10.0).unwrap();
        assert!((u.value - 0.5).abs() <= 1e-6 && u.value >= 0.5 && !u.anomaly);
        assert_eq!(extract_u(&p, 2.0, 3.0, fin(1.0), fin(0.3), 1e-6, 10.0).unwrap().value, 0.0);
        assert!(matches!(extract_u(&p, 2.0, 3.0, INF, fin(0.3), 1e-6, 0.5), Err(Error::BracketFailure(_))));
    }

    #[test]
    fn ties_are_shifted() {
        let j = |t| Jump { time: t, size: 1.0 };
        let p = PathPair::from_jumps(5.0, vec![j(1.0), j(2.0)], vec![j(2.0), j(3.0)]).unwrap();
        assert_eq!(p.ties_broken, 1);
        assert_eq!(p.jumps2[0].time, 2.0 + TIE_SHIFT);
    }

    #[test]
    fn paths_are_reproducible_and_poisson() {
        let m = cfg_a_risk();
        let a = sample_paths(&m.spec1, &m.spec2, 50.0, 11, 3);
        let b = sample_paths(&m.spec1, &m.spec2, 50.0, 11, 3);
        assert_eq!(a, b);
        let zero = CompoundPoissonSpec::new(1.0, 0.0, JumpDistribution::Exponential { rate: 1.0 }).unwrap();
        let e = sample_paths(&zero, &zero, 50.0, 1, 0);
        assert!(e.jumps1.is_empty() && e.jumps2.is_empty());

        let n = 10_000;
        let horizon = 3.0;
        let total: usize = (0..n).map(|i| sample_paths(&m.spec1, &m.spec2, horizon, 5, i).jumps1.len()).sum();
        let lt = m.spec1.rate * horizon;
        let mean = total as f64 / n as f64;
        assert!((mean - lt).abs() < 3.0 * (lt / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn longer_horizon_extends_paths() {
        let m = cfg_a_risk();
        for i in 0..20 {
            let short = sample_paths(&m.spec1, &m.spec2, 20.0, 4, i);
            let long = sample_paths(&m.spec1, &m.spec2, 40.0, 4, i);
            assert_eq!(&long.jumps1[..short.jumps1.len()], &short.jumps1[..]);
            assert_eq!(&long.jumps2[..short.jumps2.len()], &short.jumps2[..]);
        }
    }

    #[test]
    fn horizons_for_presets() {
        assert!((default_horizon(&cfg_a_risk()) - 200.0).abs() < 1e-9);
        assert!((default_horizon(&cfg_b_risk()) - 200.0 / 0.6).abs() < 1e-9);
    }

    #[test]
    fn pk_atom_of_ruin_sample() {
        let m = cfg_a_risk().with_rates(INF, ExtendedRate::ZERO);
        let mut budget = SimulationBudget::defaults_for(&m, 4000, 21);
        budget.horizon = 100.0;
        let s = sample_u(&m, &budget).unwrap();
        let p = s.sample.ecdf(0.0);
        assert!((p - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt(), "{p}");
        assert!(s.sample.ecdf(20.0) > 0.99);
        assert_eq!(s.anomalies, 0);
    }

    #[test]
    fn conditional_acceptance_and_rejection() {
        let m = cfg_a_risk().with_rates(fin(2.0), INF);
        let mut budget = SimulationBudget::defaults_for(&m, 3000, 8);
        budget.horizon = 100.0;
        let s = sample_u_conditional(&m, Condition::SecondPathNonnegative, &budget).unwrap();
        let (a, n) = s.acceptance.unwrap();
        assert_eq!(a, 3000);
        let p = a as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p - 1.0 / 3.0).abs() < 3.0 * se + 0.005, "{p}");

        let spec2 = CompoundPoissonSpec::new(1.0, 2.0, JumpDistribution::Exponential { rate: 1.0 }).unwrap();
        let bad = RiskModel::new(m.spec1.clone(), spec2, fin(0.0), fin(0.0));
        let mut budget = SimulationBudget::defaults_for(&bad, 50, 8);
        budget.horizon = 200.0;
        assert!(matches!(sample_u_conditional(&bad, Condition::SecondPathNonnegative, &budget), Err(Error::AcceptanceTooLow { .. })));
    }

    #[test]
    fn extraction_postcondition_holds() {
        let m = cfg_b_risk();
        let budget = SimulationBudget { replicas: 200, horizon: 60.0, epsilon: 1e-4, x_max: 25.0, seed: 3 };
        let s = sample_u(&m, &budget).unwrap();
        for &(i, u) in &s.by_replica {
            let p = sample_paths(&m.spec1, &m.spec2, budget.horizon, budget.seed, i);
            assert!(replay_risk(&p, 0.8, 3.0, u, 0.0, m.r1, m.r2).survived());
            if u > 0.0 {
                assert!(!replay_risk(&p, 0.8, 3.0, u - budget.epsilon, 0.0, m.r1, m.r2).survived());
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rate() -> impl Strategy<Value = ExtendedRate> {
            prop_oneof![Just(ExtendedRate::ZERO), Just(INF), (0.01f64..20.0).prop_map(ExtendedRate::Finite)]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn replay_is_deterministic(seed in any::<u64>(), x1 in 0.0f64..5.0, r1 in rate(), r2 in rate()) {
                let m = cfg_a_risk();
                let p = sample_paths(&m.spec1, &m.spec2, 30.0, seed, 0);
                let a = replay_risk(&p, 2.0, 3.0, x1, 0.0, r1, r2);
                let b = replay_risk(&p.clone(), 2.0, 3.0, x1, 0.0, r1, r2);
                prop_assert_eq!(a, b);
                if let ReplayOutcome::Ruined { time, .. } = a {
                    prop_assert!(time > 0.0 && time <= 30.0);
                }
            }

            #[test]
            fn u_is_monotone_in_rates_and_horizon(seed in any::<u64>(), a in 0.0f64..5.0, b in 0.0f64..5.0, da in 0.0f64..5.0, db in 0.0f64..5.0) {
                let m = cfg_a_risk();
                let eps = 1e-6;
                let short = sample_paths(&m.spec1, &m.spec2, 30.0, seed, 1);
                let long = sample_paths(&m.spec1, &m.spec2, 60.0, seed, 1);
                let u = |p: &PathPair, r1: f64, r2: f64| extract_u(p, 2.0, 3.0, fin(r1), fin(r2), eps, 1e4).unwrap().value;
                let base = u(&short, a, b);
                prop_assert!(u(&short, a + da, b + db) >= base - eps);
                prop_assert!(u(&long, a, b) >= base - eps);
            }
        }
    }
}
