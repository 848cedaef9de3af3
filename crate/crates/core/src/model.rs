//! Model specifications for the two coupled entities.
//!
//! Each entity is driven by a drifted compound Poisson process
//! `X(t) = c t - sum_{k <= N(t)} J_k`. The risk model couples two such
//! drivers through deficit-coverage rates `r1, r2 in [0, inf]`, the queueing
//! model through idle-server assistance proportions `rho1, rho2 in [0, inf)`.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Law of the jump (claim / work) sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDistribution {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    Deterministic { size: f64 },
}

impl JumpDistribution {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("{what} must be finite and positive, got {x}")))
            }
        };
        match self {
            JumpDistribution::Exponential { rate } => positive(*rate, "exponential rate"),
            JumpDistribution::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::InvalidModel("Erlang shape must be at least 1".into()));
                }
                positive(*rate, "Erlang rate")
            }
            JumpDistribution::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::InvalidModel(
                        "hyperexponential weights and rates must be non-empty and of equal length".into(),
                    ));
                }
                for &w in weights {
                    positive(w, "hyperexponential weight")?;
                }
                for &a in rates {
                    positive(a, "hyperexponential rate")?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "hyperexponential weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            JumpDistribution::Deterministic { size } => positive(*size, "deterministic jump size"),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpDistribution::Exponential { rate } => 1.0 / rate,
            JumpDistribution::Erlang { shape, rate } => *shape as f64 / rate,
            JumpDistribution::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(p, a)| p / a).sum()
            }
            JumpDistribution::Deterministic { size } => *size,
        }
    }

    /// Whether the transform-inverse continuation is supported for this law.
    pub fn supports_continuation(&self) -> bool {
        !matches!(self, JumpDistribution::Deterministic { .. })
    }

    /// `E exp(-sJ) - 1`, written to avoid cancellation for small `|s|`.
    pub fn transform_minus_one(&self, s: Complex64) -> Complex64 {
        match self {
            JumpDistribution::Exponential { rate } => -s / (*rate + s),
            JumpDistribution::Erlang { shape, rate } => {
                let q = *rate / (*rate + s);
                let q_minus_one = -s / (*rate + s);
                let mut geometric = Complex64::new(0.0, 0.0);
                let mut power = Complex64::new(1.0, 0.0);
                for _ in 0..*shape {
                    geometric += power;
                    power *= q;
                }
                q_minus_one * geometric
            }
            JumpDistribution::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, a)| *p * (-s / (*a + s)))
                .sum(),
            JumpDistribution::Deterministic { size } => expm1(-s * *size),
        }
    }

    /// `d/ds E exp(-sJ)`.
    pub fn transform_derivative(&self, s: Complex64) -> Complex64 {
        match self {
            JumpDistribution::Exponential { rate } => -*rate / ((*rate + s) * (*rate + s)),
            JumpDistribution::Erlang { shape, rate } => {
                let q = *rate / (*rate + s);
                let k = *shape as i32;
                -(*shape as f64) * q.powi(k - 1) * *rate / ((*rate + s) * (*rate + s))
            }
            JumpDistribution::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, a)| -*p * *a / ((*a + s) * (*a + s)))
                .sum(),
            JumpDistribution::Deterministic { size } => -*size * (-s * *size).exp(),
        }
    }

    /// Draws one jump size. Every variant is a deterministic multiple of
    /// unit-rate draws, so scaling the law by `c` scales the draw by `c`
    /// for the same generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpDistribution::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            JumpDistribution::Erlang { shape, rate } => {
                let mut total = 0.0;
                for _ in 0..*shape {
                    let e: f64 = Exp1.sample(rng);
                    total += e;
                }
                total / rate
            }
            JumpDistribution::HyperExponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut branch = rates.len() - 1;
                for (j, p) in weights.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        branch = j;
                        break;
                    }
                }
                let e: f64 = Exp1.sample(rng);
                e / rates[branch]
            }
            JumpDistribution::Deterministic { size } => *size,
        }
    }

    /// Law of `c J`.
    pub fn scaled(&self, c: f64) -> JumpDistribution {
        match self {
            JumpDistribution::Exponential { rate } => JumpDistribution::Exponential { rate: rate / c },
            JumpDistribution::Erlang { shape, rate } => JumpDistribution::Erlang { shape: *shape, rate: rate / c },
            JumpDistribution::HyperExponential { weights, rates } => JumpDistribution::HyperExponential {
                weights: weights.clone(),
                rates: rates.iter().map(|a| a / c).collect(),
            },
            JumpDistribution::Deterministic { size } => JumpDistribution::Deterministic { size: size * c },
        }
    }
}

fn expm1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        z + z * z / 2.0 + z * z * z / 6.0
    } else {
        z.exp() - 1.0
    }
}

/// A drifted compound Poisson driver `X(t) = c t - sum J_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPoissonSpec {
    pub drift: f64,
    pub rate: f64,
    pub jumps: JumpDistribution,
}

impl CompoundPoissonSpec {
    pub fn new(drift: f64, rate: f64, jumps: JumpDistribution) -> Result<Self> {
        let spec = CompoundPoissonSpec { drift, rate, jumps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drift.is_finite() && self.drift > 0.0) {
            return Err(Error::InvalidModel(format!("drift must be positive, got {}", self.drift)));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::InvalidModel(format!("arrival rate must be non-negative, got {}", self.rate)));
        }
        self.jumps.validate()
    }

    /// `E X(1) = c - lambda E J`.
    pub fn mean_drift(&self) -> f64 {
        self.drift - self.rate * self.jumps.mean()
    }

    /// The driver `c X`: drift and jump sizes scaled, arrival rate unchanged.
    pub fn scaled(&self, c: f64) -> CompoundPoissonSpec {
        CompoundPoissonSpec { drift: self.drift * c, rate: self.rate, jumps: self.jumps.scaled(c) }
    }
}

/// `mu = c - lambda E J`.
pub fn mean_drift(spec: &CompoundPoissonSpec) -> f64 {
    spec.mean_drift()
}

/// A rate in `[0, inf]` with an explicit infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedRate {
    Finite(f64),
    Infinite,
}

impl ExtendedRate {
    pub const ZERO: ExtendedRate = ExtendedRate::Finite(0.0);

    pub fn finite(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(ExtendedRate::Finite(value))
        } else {
            Err(Error::InvalidModel(format!("rate must be finite and non-negative, got {value}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedRate::Infinite)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, ExtendedRate::Finite(v) if v == 0.0)
    }

    pub fn as_finite(self) -> Option<f64> {
        match self {
            ExtendedRate::Finite(v) => Some(v),
            ExtendedRate::Infinite => None,
        }
    }

    /// Product with a finite real. `inf * 0` is rejected.
    pub fn mul(self, x: f64) -> Result<ExtendedRate> {
        match self {
            ExtendedRate::Finite(v) => ExtendedRate::finite(v * x),
            ExtendedRate::Infinite if x > 0.0 => Ok(ExtendedRate::Infinite),
            ExtendedRate::Infinite => Err(Error::InvalidModel(format!("infinite rate times {x}"))),
        }
    }

    /// `1 / r` with `1/0 = inf` and `1/inf = 0`.
    pub fn reciprocal(self) -> ExtendedRate {
        match self {
            ExtendedRate::Finite(v) if v == 0.0 => ExtendedRate::Infinite,
            ExtendedRate::Finite(v) => ExtendedRate::Finite(1.0 / v),
            ExtendedRate::Infinite => ExtendedRate::ZERO,
        }
    }

    /// Total order with infinity on top.
    pub fn le(self, other: ExtendedRate) -> bool {
        match (self, other) {
            (_, ExtendedRate::Infinite) => true,
            (ExtendedRate::Infinite, ExtendedRate::Finite(_)) => false,
            (ExtendedRate::Finite(a), ExtendedRate::Finite(b)) => a <= b,
        }
    }

    /// Comparison `r * x > y` valid for finite `x`, with `inf * x` read by the sign of `x`.
    fn times_plus_positive(self, x: f64, y: f64) -> bool {
        match self {
            ExtendedRate::Finite(r) => y + r * x > 0.0,
            ExtendedRate::Infinite => x > 0.0 || (x == 0.0 && y > 0.0),
        }
    }
}

impl fmt::Display for ExtendedRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedRate::Finite(v) => write!(f, "{v}"),
            ExtendedRate::Infinite => write!(f, "inf"),
        }
    }
}

impl From<f64> for ExtendedRate {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            ExtendedRate::Infinite
        } else {
            ExtendedRate::Finite(v)
        }
    }
}

impl Serialize for ExtendedRate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedRate::Finite(v) => serializer.serialize_f64(*v),
            ExtendedRate::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedRate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => ExtendedRate::finite(v).map_err(serde::de::Error::custom),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(ExtendedRate::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// Which clause of the stability condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    BothPositive,
    FirstNonpositive,
    SecondNonpositive,
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StabilityClass::BothPositive => "BothPositive",
            StabilityClass::FirstNonpositive => "FirstNonpositive",
            StabilityClass::SecondNonpositive => "SecondNonpositive",
        };
        f.write_str(name)
    }
}

/// Two companies covering each other's deficits at rates `r1`, `r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub spec1: CompoundPoissonSpec,
    pub spec2: CompoundPoissonSpec,
    pub r1: ExtendedRate,
    pub r2: ExtendedRate,
}

impl RiskModel {
    pub fn new(spec1: CompoundPoissonSpec, spec2: CompoundPoissonSpec, r1: ExtendedRate, r2: ExtendedRate) -> Self {
        RiskModel { spec1, spec2, r1, r2 }
    }

    pub fn with_rates(&self, r1: ExtendedRate, r2: ExtendedRate) -> RiskModel {
        RiskModel { r1, r2, ..self.clone() }
    }

    /// Roles of the two companies exchanged.
    pub fn swapped(&self) -> RiskModel {
        RiskModel { spec1: self.spec2.clone(), spec2: self.spec1.clone(), r1: self.r2, r2: self.r1 }
    }

    pub fn means(&self) -> (f64, f64) {
        (self.spec1.mean_drift(), self.spec2.mean_drift())
    }

    /// `r1 r2 = 1`: the model reduces to a single sum process.
    pub fn is_degenerate_product(&self) -> bool {
        matches!((self.r1, self.r2), (ExtendedRate::Finite(a), ExtendedRate::Finite(b)) if (a * b - 1.0).abs() < 1e-12)
    }
}

pub fn validate_risk(model: &RiskModel) -> Result<StabilityClass> {
    model.spec1.validate()?;
    model.spec2.validate()?;
    let (mu1, mu2) = model.means();
    if model.r1.is_infinite() && mu1 <= 0.0 {
        return Err(Error::InfiniteRateWithNonpositiveDrift(1));
    }
    if model.r2.is_infinite() && mu2 <= 0.0 {
        return Err(Error::InfiniteRateWithNonpositiveDrift(2));
    }
    if mu1 > 0.0 && mu2 > 0.0 {
        Ok(StabilityClass::BothPositive)
    } else if mu1 <= 0.0 && model.r1.times_plus_positive(mu1, mu2) {
        Ok(StabilityClass::FirstNonpositive)
    } else if mu2 <= 0.0 && model.r2.times_plus_positive(mu2, mu1) {
        Ok(StabilityClass::SecondNonpositive)
    } else {
        Err(Error::Unstable(format!("mu1 = {mu1}, mu2 = {mu2}, r1 = {}, r2 = {}", model.r1, model.r2)))
    }
}

/// The model `(X1, c X2, c r1, r2 / c)`; survival from `(x1, x2)` in the
/// original equals survival from `(x1, c x2)` in the result.
pub fn rescale_risk(model: &RiskModel, c: f64) -> Result<RiskModel> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("rescaling factor must be finite and positive, got {c}")));
    }
    Ok(RiskModel {
        spec1: model.spec1.clone(),
        spec2: model.spec2.scaled(c),
        r1: model.r1.mul(c)?,
        r2: model.r2.mul(1.0 / c)?,
    })
}

/// Two servers helping each other when idle with proportions `rho1`, `rho2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    pub spec1: CompoundPoissonSpec,
    pub spec2: CompoundPoissonSpec,
    pub rho1: f64,
    pub rho2: f64,
}

impl QueueModel {
    pub fn new(spec1: CompoundPoissonSpec, spec2: CompoundPoissonSpec, rho1: f64, rho2: f64) -> Self {
        QueueModel { spec1, spec2, rho1, rho2 }
    }

    pub fn with_rates(&self, rho1: f64, rho2: f64) -> QueueModel {
        QueueModel { rho1, rho2, ..self.clone() }
    }

    pub fn swapped(&self) -> QueueModel {
        QueueModel { spec1: self.spec2.clone(), spec2: self.spec1.clone(), rho1: self.rho2, rho2: self.rho1 }
    }

    pub fn means(&self) -> (f64, f64) {
        (self.spec1.mean_drift(), self.spec2.mean_drift())
    }

    /// Hypotheses of the queue decomposition: `rho1 rho2 < 1` and both means positive.
    pub fn check_decomposition_hypotheses(&self) -> Result<()> {
        validate_queue(self)?;
        if self.rho1 * self.rho2 >= 1.0 {
            return Err(Error::DegenerateModel(format!("rho1 rho2 = {} >= 1", self.rho1 * self.rho2)));
        }
        let (mu1, mu2) = self.means();
        if mu1 <= 0.0 || mu2 <= 0.0 {
            return Err(Error::Drift(format!("both means must be positive, got mu1 = {mu1}, mu2 = {mu2}")));
        }
        Ok(())
    }
}

pub fn validate_queue(model: &QueueModel) -> Result<StabilityClass> {
    model.spec1.validate()?;
    model.spec2.validate()?;
    for (name, rho) in [("rho1", model.rho1), ("rho2", model.rho2)] {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidModel(format!("{name} must be finite and non-negative, got {rho}")));
        }
    }
    let (mu1, mu2) = model.means();
    if mu1 > 0.0 && mu2 > 0.0 {
        Ok(StabilityClass::BothPositive)
    } else if mu1 <= 0.0 && mu1 + model.rho2 * mu2 > 0.0 {
        Ok(StabilityClass::FirstNonpositive)
    } else if mu2 <= 0.0 && mu2 + model.rho1 * mu1 > 0.0 {
        Ok(StabilityClass::SecondNonpositive)
    } else {
        Err(Error::Unstable(format!("mu1 = {mu1}, mu2 = {mu2}, rho1 = {}, rho2 = {}", model.rho1, model.rho2)))
    }
}

/// The model `(X1, c X2, c rho1, rho2 / c)`; `(W1, W2)` maps to `(W1, c W2)`.
pub fn rescale_queue(model: &QueueModel, c: f64) -> Result<QueueModel> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("rescaling factor must be finite and positive, got {c}")));
    }
    Ok(QueueModel {
        spec1: model.spec1.clone(),
        spec2: model.spec2.scaled(c),
        rho1: model.rho1 * c,
        rho2: model.rho2 / c,
    })
}

/// `x^+ = max(x, 0)`.
pub(crate) fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `x^- = max(-x, 0)`.
pub(crate) fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// The two reference configurations used throughout the tests and the
/// default verification suite.
pub mod presets {
    use super::*;

    /// Company 1: `(c, lambda, J) = (2, 1, Exp(1))`, company 2: `(3, 2, Exp(1))`;
    /// `mu1 = mu2 = 1`, risk rates `(2, 0.25)`, queue proportions `(0.5, 0.4)`.
    pub fn cfg_a_specs() -> (CompoundPoissonSpec, CompoundPoissonSpec) {
        (
            CompoundPoissonSpec { drift: 2.0, rate: 1.0, jumps: JumpDistribution::Exponential { rate: 1.0 } },
            CompoundPoissonSpec { drift: 3.0, rate: 2.0, jumps: JumpDistribution::Exponential { rate: 1.0 } },
        )
    }

    pub fn cfg_a_risk() -> RiskModel {
        let (a, b) = cfg_a_specs();
        RiskModel::new(a, b, ExtendedRate::Finite(2.0), ExtendedRate::Finite(0.25))
    }

    pub fn cfg_a_queue() -> QueueModel {
        let (a, b) = cfg_a_specs();
        QueueModel::new(a, b, 0.5, 0.4)
    }

    /// Company 1: `(0.8, 2, Exp(2))` with `mu1 = -0.2`; company 2 as in CFG-A;
    /// risk rates `(2, 0.25)`.
    pub fn cfg_b_specs() -> (CompoundPoissonSpec, CompoundPoissonSpec) {
        (
            CompoundPoissonSpec { drift: 0.8, rate: 2.0, jumps: JumpDistribution::Exponential { rate: 2.0 } },
            CompoundPoissonSpec { drift: 3.0, rate: 2.0, jumps: JumpDistribution::Exponential { rate: 1.0 } },
        )
    }

    pub fn cfg_b_risk() -> RiskModel {
        let (a, b) = cfg_b_specs();
        RiskModel::new(a, b, ExtendedRate::Finite(2.0), ExtendedRate::Finite(0.25))
    }

    pub fn cfg_b_queue() -> QueueModel {
        let (a, b) = cfg_b_specs();
        QueueModel::new(a, b, 0.5, 0.4)
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn exp_spec(c: f64, lambda: f64, alpha: f64) -> CompoundPoissonSpec {
        CompoundPoissonSpec::new(c, lambda, JumpDistribution::Exponential { rate: alpha }).unwrap()
    }

    #[test]
    fn mean_drift_examples() {
        assert_eq!(mean_drift(&exp_spec(2.0, 1.0, 1.0)), 1.0);
        assert_eq!(mean_drift(&exp_spec(2.0, 0.0, 1.0)), 2.0);
        let erlang = CompoundPoissonSpec::new(1.5, 1.0, JumpDistribution::Erlang { shape: 2, rate: 2.0 }).unwrap();
        assert!((mean_drift(&erlang) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hyperexponential_weights_are_checked_not_renormalized() {
        let bad = JumpDistribution::HyperExponential { weights: vec![0.5, 0.5 + 1e-9], rates: vec![1.0, 2.0] };
        assert!(bad.validate().is_err());
        let good = JumpDistribution::HyperExponential { weights: vec![0.25, 0.75], rates: vec![1.0, 3.0] };
        good.validate().unwrap();
        assert!((good.mean() - (0.25 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(CompoundPoissonSpec::new(0.0, 1.0, JumpDistribution::Exponential { rate: 1.0 }).is_err());
        assert!(CompoundPoissonSpec::new(1.0, -1.0, JumpDistribution::Exponential { rate: 1.0 }).is_err());
        assert!(CompoundPoissonSpec::new(1.0, 1.0, JumpDistribution::Erlang { shape: 0, rate: 1.0 }).is_err());
        assert!(CompoundPoissonSpec::new(1.0, 1.0, JumpDistribution::Deterministic { size: 0.0 }).is_err());
    }

    #[test]
    fn risk_stability_examples() {
        assert_eq!(validate_risk(&cfg_a_risk()).unwrap(), StabilityClass::BothPositive);
        let mut m = cfg_b_risk();
        assert_eq!(validate_risk(&m).unwrap(), StabilityClass::FirstNonpositive);
        m.r1 = ExtendedRate::Finite(6.0);
        assert!(matches!(validate_risk(&m), Err(Error::Unstable(_))));
        m.r1 = ExtendedRate::Infinite;
        assert_eq!(validate_risk(&m), Err(Error::InfiniteRateWithNonpositiveDrift(1)));
    }

    #[test]
    fn queue_stability_examples() {
        let (a, b) = cfg_a_specs();
        assert_eq!(validate_queue(&QueueModel::new(a, b, 0.0, 0.0)).unwrap(), StabilityClass::BothPositive);
        assert_eq!(validate_queue(&cfg_a_queue()).unwrap(), StabilityClass::BothPositive);
        let m = cfg_b_queue().with_rates(0.0, 0.1);
        assert!(matches!(validate_queue(&m), Err(Error::Unstable(_))));
    }

    #[test]
    fn rescale_examples() {
        let m = cfg_a_risk();
        assert_eq!(rescale_risk(&m, 1.0).unwrap(), m);
        let r = rescale_risk(&m, 2.0).unwrap();
        assert_eq!(r.spec2, exp_spec(6.0, 2.0, 0.5));
        assert_eq!(r.r1, ExtendedRate::Finite(4.0));
        assert_eq!(r.r2, ExtendedRate::Finite(0.125));
        assert_eq!(r.spec1, m.spec1);
    }

    #[test]
    fn extended_rate_rules() {
        assert!(ExtendedRate::Infinite.mul(0.0).is_err());
        assert_eq!(ExtendedRate::Infinite.mul(3.0).unwrap(), ExtendedRate::Infinite);
        assert_eq!(ExtendedRate::ZERO.reciprocal(), ExtendedRate::Infinite);
        assert!(ExtendedRate::Finite(5.0).le(ExtendedRate::Infinite));
        assert!(!ExtendedRate::Infinite.le(ExtendedRate::Finite(1e300)));
        let parsed: ExtendedRate = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(parsed, ExtendedRate::Infinite);
        let parsed: ExtendedRate = serde_json::from_str("0.25").unwrap();
        assert_eq!(parsed, ExtendedRate::Finite(0.25));
        assert!(serde_json::from_str::<ExtendedRate>("-1.0").is_err());
    }

    #[test]
    fn transform_minus_one_is_accurate_near_zero() {
        let s = Complex64::new(1e-12, 0.0);
        for law in [
            JumpDistribution::Exponential { rate: 2.0 },
            JumpDistribution::Erlang { shape: 3, rate: 2.0 },
            JumpDistribution::HyperExponential { weights: vec![0.3, 0.7], rates: vec![1.0, 4.0] },
            JumpDistribution::Deterministic { size: 0.7 },
        ] {
            let v = law.transform_minus_one(s);
            assert!(((v.re / -1e-12) - law.mean()).abs() < 1e-9, "{law:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rescaling_preserves_stability(
                c1 in 0.1f64..5.0, l1 in 0.0f64..5.0, a1 in 0.2f64..5.0,
                c2 in 0.1f64..5.0, l2 in 0.0f64..5.0, a2 in 0.2f64..5.0,
                r1 in 0.0f64..10.0, r2 in 0.0f64..10.0, c in 0.05f64..20.0,
            ) {
                let m = RiskModel::new(exp_spec(c1, l1, a1), exp_spec(c2, l2, a2),
                    ExtendedRate::Finite(r1), ExtendedRate::Finite(r2));
                let scaled = rescale_risk(&m, c).unwrap();
                prop_assert_eq!(validate_risk(&m).is_ok(), validate_risk(&scaled).is_ok());
                let p = r1 * r2;
                let q = scaled.r1.as_finite().unwrap() * scaled.r2.as_finite().unwrap();
                prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p));

                let qm = QueueModel::new(m.spec1.clone(), m.spec2.clone(), r1, r2);
                let qs = rescale_queue(&qm, c).unwrap();
                prop_assert_eq!(validate_queue(&qm).is_ok(), validate_queue(&qs).is_ok());
                prop_assert!((qm.rho1 * qm.rho2 - qs.rho1 * qs.rho2).abs() <= 1e-12 * (1.0 + p));
            }

            #[test]
            fn mean_drift_is_linear(c in 0.1f64..5.0, l in 0.0f64..5.0, a in 0.2f64..5.0, k in 0.1f64..3.0) {
                let base = mean_drift(&exp_spec(c, l, a));
                let scaled_rate = mean_drift(&exp_spec(c, k * l, a));
                prop_assert!((scaled_rate - (c - k * (c - base))).abs() < 1e-12);
                let shifted = mean_drift(&exp_spec(c + k, l, a));
                prop_assert!((shifted - base - k).abs() < 1e-12);
            }
        }
    }
}
