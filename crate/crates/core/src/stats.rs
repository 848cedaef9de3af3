//! Empirical distributions, two-sample tests and empirical transforms.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Asymptotic two-sample Kolmogorov-Smirnov constant at level 0.01.
pub const KS_C_001: f64 = 1.628;

/// Sorted i.i.d. draws with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    pub origin: String,
    pub seed: u64,
    pub horizon: f64,
}

impl EmpiricalSample {
    /// Panics on an empty or NaN-containing input.
    pub fn new(mut values: Vec<f64>, origin: impl Into<String>, seed: u64, horizon: f64) -> Self {
        assert!(!values.is_empty(), "an empirical sample needs at least one value");
        values.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
        EmpiricalSample { values, origin: origin.into(), seed, horizon }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self::new(values, "values", 0, f64::NAN)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        self.values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    }

    pub fn ecdf(&self, x: f64) -> f64 {
        ecdf(self, x)
    }
}

/// Right-continuous empirical CDF.
pub fn ecdf(sample: &EmpiricalSample, x: f64) -> f64 {
    sample.values.partition_point(|&v| v <= x) as f64 / sample.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `sup_x |ECDF_a(x) - ECDF_b(x)|` over the pooled points.
pub fn ks_statistic(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (xa, xb) = (a.values(), b.values());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS test at level 0.01 with `slack` added to the threshold.
pub fn ks_two_sample(a: &EmpiricalSample, b: &EmpiricalSample, slack: f64) -> KsResult {
    let statistic = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let threshold = KS_C_001 * ((na + nb) / (na * nb)).sqrt() + slack;
    KsResult { statistic, threshold, pass: statistic <= threshold }
}

/// Independent sums `a_i + b_pi(i)` from a uniform pairing of random
/// subsets of size `min(N_a, N_b)`.
pub fn convolve_samples<R: Rng + ?Sized>(a: &EmpiricalSample, b: &EmpiricalSample, rng: &mut R) -> EmpiricalSample {
    let n = a.len().min(b.len());
    let mut ia: Vec<usize> = (0..a.len()).collect();
    let mut ib: Vec<usize> = (0..b.len()).collect();
    ia.shuffle(rng);
    ib.shuffle(rng);
    let values = ia[..n].iter().zip(&ib[..n]).map(|(&i, &j)| a.values[i] + b.values[j]).collect();
    EmpiricalSample::new(values, format!("({}) + ({})", a.origin, b.origin), a.seed, a.horizon.min(b.horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformEstimate {
    pub s: f64,
    pub estimate: f64,
    pub std_error: f64,
}

impl TransformEstimate {
    /// Product of independent estimates with first-order error propagation.
    pub fn product(&self, other: &TransformEstimate) -> TransformEstimate {
        let estimate = self.estimate * other.estimate;
        let var = (other.estimate * self.std_error).powi(2) + (self.estimate * other.std_error).powi(2);
        TransformEstimate { s: self.s, estimate, std_error: var.sqrt() }
    }

    /// `|a - b| <= k sqrt(se_a^2 + se_b^2) + slack`.
    pub fn agrees_with(&self, other: &TransformEstimate, k: f64, slack: f64) -> bool {
        (self.estimate - other.estimate).abs() <= k * self.std_error.hypot(other.std_error) + slack
    }
}

/// Mean of `exp(-s U)` with standard error `sd / sqrt(N)`.
pub fn empirical_lt(sample: &EmpiricalSample, s: f64) -> TransformEstimate {
    assert!(s >= 0.0, "empirical transform needs s >= 0");
    let n = sample.len() as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &v in sample.values() {
        let e = (-s * v).exp();
        sum += e;
        sum_sq += e * e;
    }
    let mean = sum / n;
    let var = if sample.len() > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    TransformEstimate { s, estimate: mean, std_error: (var / n).sqrt() }
}
