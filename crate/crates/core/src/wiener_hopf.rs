//! Wiener-Hopf factors of the auxiliary killed process and the boundary
//! transforms built from them.
//!
//! The exponent `psi_r(theta) = -theta/Phi1(theta) + r theta/Phi2(-theta)`
//! on the imaginary axis is factorized by a Cauchy projection of
//! `h = log(-k_r / psi_r)`:
//!
//! ```text
//! log Psi+(s) = -(1/2 pi) int h(iu) [1/(iu - s) - 1/(iu)] du,   Re s >= 0,
//! log Psi-(s) = +(1/2 pi) int h(iu) [1/(iu - s) - 1/(iu)] du,   Re s <= 0,
//! ```
//!
//! with boundary values taken from the respective side. The integral is
//! computed on a sinh-mapped trapezoid grid `u = a sinh(t)`, which resolves
//! every scale from `a` to `u_max` with a few hundred nodes. The value
//! `h(i Im s)` is subtracted inside the integral and added back in closed
//! form, as is the constant tail beyond `u_max`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::analytic::{phi_inverse, phi_on_imaginary_axis, psi};
use crate::error::{Error, Result};
use crate::model::{neg, pos, validate_queue, validate_risk, CompoundPoissonSpec, ExtendedRate, QueueModel, RiskModel};

/// Rates outside `[EXTREME_LOW, EXTREME_HIGH]` use the closed-form limits.
pub const EXTREME_LOW: f64 = 1e-6;
pub const EXTREME_HIGH: f64 = 1e6;

const PROBE_TOLERANCE: f64 = 1e-10;
const EVAL_TOLERANCE: f64 = 1e-8;
const MAX_REFINEMENTS: usize = 4;

/// The auxiliary process `X_r(t) = Z1(t) - Z2(rt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxModel {
    pub spec1: CompoundPoissonSpec,
    pub spec2: CompoundPoissonSpec,
    pub r: ExtendedRate,
}

impl AuxModel {
    pub fn new(spec1: CompoundPoissonSpec, spec2: CompoundPoissonSpec, r: ExtendedRate) -> Result<Self> {
        let aux = AuxModel { spec1, spec2, r };
        aux.killing_rate()?;
        Ok(aux)
    }

    /// `k_r = mu1^+ + r mu2^+`.
    pub fn killing_rate(&self) -> Result<f64> {
        let (mu1, mu2) = (self.spec1.mean_drift(), self.spec2.mean_drift());
        let k = match self.r {
            ExtendedRate::Finite(r) => pos(mu1) + r * pos(mu2),
            ExtendedRate::Infinite if mu2 > 0.0 => f64::INFINITY,
            ExtendedRate::Infinite => pos(mu1),
        };
        if k > 0.0 {
            Ok(k)
        } else {
            Err(Error::Drift(format!("killing rate must be positive (mu1 = {mu1}, mu2 = {mu2}, r = {})", self.r)))
        }
    }
}

/// `psi_r(theta)` for purely imaginary `theta`; `-k_r` for `|theta| < 1e-8`.
pub fn aux_exponent(aux: &AuxModel, theta: Complex64) -> Result<Complex64> {
    let r = aux
        .r
        .as_finite()
        .ok_or_else(|| Error::Domain("the auxiliary exponent needs a finite rate".into()))?;
    if theta.re != 0.0 {
        return Err(Error::Domain(format!("theta must be purely imaginary, got {theta}")));
    }
    if theta.im.abs() < 1e-8 {
        return Ok(Complex64::new(-aux.killing_rate()?, 0.0));
    }
    let t = Complex64::new(0.0, theta.im.abs());
    let a = -t / phi_inverse(&aux.spec1, t)?;
    let b = t / phi_inverse(&aux.spec2, t)?.conj();
    let v = a + r * b;
    Ok(if theta.im < 0.0 { v.conj() } else { v })
}

/// Quadrature grid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Step in the sinh variable `t`.
    pub dt: f64,
    /// Inner scale `a` of `u = a sinh(t)`.
    pub inner_scale: f64,
    /// Truncation height, multiplied by `max(1, c1, c2)`.
    pub outer_scale: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { dt: 0.1, inner_scale: 1e-9, outer_scale: 1e12 }
    }
}

/// `A(u) = -iu/Phi1(iu)` and `B(u) = iu/Phi2(-iu)` on the positive half-grid.
#[derive(Debug)]
pub struct AxisData {
    spec1: CompoundPoissonSpec,
    spec2: CompoundPoissonSpec,
    cfg: QuadratureConfig,
    u: Vec<f64>,
    w: Vec<f64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    u_max: f64,
    dt: f64,
}

impl AxisData {
    pub fn build(spec1: &CompoundPoissonSpec, spec2: &CompoundPoissonSpec, cfg: QuadratureConfig) -> Result<Self> {
        let u_max = cfg.outer_scale * spec1.drift.max(spec2.drift).max(1.0);
        let t_max = (u_max / cfg.inner_scale).asinh();
        let mut n = (t_max / cfg.dt).ceil() as usize;
        n += n % 2;
        let dt = t_max / n as f64;
        let mut u = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for j in 1..=n {
            let t = j as f64 * dt;
            u.push(cfg.inner_scale * t.sinh());
            let weight = cfg.inner_scale * t.cosh() * dt;
            w.push(if j == n { 0.5 * weight } else { weight });
        }
        let phi1 = phi_on_imaginary_axis(spec1, &u)?;
        let phi2 = phi_on_imaginary_axis(spec2, &u)?;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for j in 0..n {
            let t = Complex64::new(0.0, u[j]);
            a.push(-t / phi1[j]);
            b.push(t / phi2[j].conj());
        }
        Ok(AxisData { spec1: spec1.clone(), spec2: spec2.clone(), cfg, u, w, a, b, u_max, dt })
    }

    pub fn node_count(&self) -> usize {
        self.u.len()
    }
}

/// Numerical factorization for one finite rate `r`.
#[derive(Debug, Clone)]
pub struct WhFactor {
    axis: Arc<AxisData>,
    r: f64,
    k: f64,
    h: Vec<Complex64>,
    h_inf: f64,
}

/// A factor value with its quadrature error estimate (on the log scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorValue {
    pub value: Complex64,
    pub error_estimate: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Plus,
    Minus,
}

impl WhFactor {
    /// Builds the factor on `axis`, refining the grid if the probe error is too large.
    pub fn new(axis: Arc<AxisData>, r: f64) -> Result<Self> {
        let mut axis = axis;
        for _ in 0..=MAX_REFINEMENTS {
            let factor = Self::on_axis(axis.clone(), r)?;
            if factor.probe_error()? <= PROBE_TOLERANCE {
                return Ok(factor);
            }
            let mut cfg = axis.cfg;
            cfg.dt *= 0.5;
            log::debug!("refining Wiener-Hopf grid for r = {r} to dt = {}", cfg.dt);
            axis = Arc::new(AxisData::build(&axis.spec1, &axis.spec2, cfg)?);
        }
        Err(Error::QuadratureFailure(format!("grid refinement did not converge for r = {r}")))
    }

    fn on_axis(axis: Arc<AxisData>, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("numerical factor needs 0 < r < inf, got {r}")));
        }
        let k = pos(axis.spec1.mean_drift()) + r * pos(axis.spec2.mean_drift());
        if k <= 0.0 {
            return Err(Error::Drift(format!("killing rate is zero for r = {r}")));
        }
        let mut h = Vec::with_capacity(axis.u.len());
        let mut arg = 0.0f64;
        let mut prev = Complex64::new(1.0, 0.0);
        for j in 0..axis.u.len() {
            let f = -k / (axis.a[j] + r * axis.b[j]);
            let step = (f / prev).arg();
            if step.abs() > 0.5 * PI {
                return Err(Error::QuadratureFailure(format!("phase jump of {step} at u = {}", axis.u[j])));
            }
            arg += step;
            h.push(Complex64::new(f.norm().ln(), arg));
            prev = f;
        }
        let h_inf = (k / (axis.spec1.drift + r * axis.spec2.drift)).ln();
        let last = h.last().copied().unwrap_or_default();
        if (last - h_inf).norm() > 1e-3 {
            return Err(Error::QuadratureFailure(format!(
                "log(-k/psi_r) does not settle: h(u_max) = {last}, expected {h_inf}"
            )));
        }
        Ok(WhFactor { axis, r, k, h, h_inf })
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    pub fn killing_rate(&self) -> f64 {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.h.len()
    }

    fn probe_error(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            worst = worst.max(self.plus_with_error(Complex64::new(s, 0.0))?.error_estimate);
        }
        for v in [0.05, 1.0, 50.0] {
            worst = worst.max(self.plus_with_error(Complex64::new(0.0, v))?.error_estimate);
        }
        Ok(worst)
    }

    /// `psi_r(iv)` evaluated directly.
    pub fn exponent_at(&self, v: f64) -> Result<Complex64> {
        if v == 0.0 {
            return Ok(Complex64::new(-self.k, 0.0));
        }
        let t = Complex64::new(0.0, v.abs());
        let a = -t / phi_inverse(&self.axis.spec1, t)?;
        let b = t / phi_inverse(&self.axis.spec2, t)?.conj();
        let value = a + self.r * b;
        Ok(if v < 0.0 { value.conj() } else { value })
    }

    /// `h(iv)` on the branch continuous with the grid.
    fn h_at(&self, v: f64) -> Result<Complex64> {
        if v == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let x = v.abs();
        let f = -self.k / self.exponent_at(x)?;
        let j = self.axis.u.partition_point(|&u| u < x);
        let (reference_f, reference_arg) = if j == 0 {
            (Complex64::new(1.0, 0.0), 0.0)
        } else {
            let i = (j - 1).min(self.h.len() - 1);
            (self.h[i].exp(), self.h[i].im)
        };
        let value = Complex64::new(f.norm().ln(), reference_arg + (f / reference_f).arg());
        Ok(if v < 0.0 { value.conj() } else { value })
    }

    fn projection(&self, s: Complex64, side: Side) -> Result<(Complex64, f64)> {
        let hv = self.h_at(s.im)?;
        Ok(self.project(s, hv, side))
    }

    fn project(&self, s: Complex64, hv: Complex64, side: Side) -> (Complex64, f64) {
        let sigma = s.re;
        let v = s.im;
        let mut fine = Complex64::new(0.0, 0.0);
        let mut coarse = Complex64::new(0.0, 0.0);
        for (j, ((&u, &w), &hj)) in self.axis.u.iter().zip(&self.axis.w).zip(&self.h).enumerate() {
            let iu = Complex64::new(0.0, u);
            let term = (hj - hv) / (iu - s) + (hj.conj() - hv) / (-iu - s) - 2.0 * hj.im / u;
            fine += term * w;
            if j % 2 == 1 {
                coarse += term * (2.0 * w);
            }
        }
        // The u = 0 node, where h(iu)/(iu) tends to Im h / u.
        let origin = hv / s - self.h[0].im / self.axis.u[0];
        let w0 = self.axis.cfg.inner_scale * self.axis.dt;
        fine += origin * w0;
        coarse += origin * (2.0 * w0);
        let big_u = self.axis.u_max;
        let ratio_log = 0.5 * ((sigma * sigma + (big_u - v).powi(2)) / (sigma * sigma + (big_u + v).powi(2))).ln();
        let (line_re, tail_re) = if sigma == 0.0 {
            let sign = match side {
                Side::Plus => 1.0,
                Side::Minus => -1.0,
            };
            (-sign * PI, 0.0)
        } else {
            let a_hi = ((big_u - v) / sigma).atan();
            let a_lo = ((-big_u - v) / sigma).atan();
            let half = 0.5 * PI * sigma.signum();
            (-(a_hi - a_lo), -((half - a_hi) + (a_lo + half)))
        };
        let line = Complex64::new(line_re, -ratio_log);
        let tail = Complex64::new(tail_re, ratio_log);
        let closed = hv * line + self.h_inf * tail;
        let sign = match side {
            Side::Plus => -1.0,
            Side::Minus => 1.0,
        };
        let value = sign / (2.0 * PI) * (fine + closed);
        let estimate = (fine - coarse).norm() / (2.0 * PI);
        (value, estimate)
    }

    /// `Psi+_r(s)` for `Re s >= 0` with its error estimate.
    pub fn plus_with_error(&self, s: Complex64) -> Result<FactorValue> {
        if !(s.re >= 0.0) || !s.im.is_finite() {
            return Err(Error::Domain(format!("Psi+ needs Re s >= 0, got {s}")));
        }
        if s == Complex64::new(0.0, 0.0) {
            return Ok(FactorValue { value: Complex64::new(1.0, 0.0), error_estimate: 0.0 });
        }
        let (log_value, estimate) = self.projection(s, Side::Plus)?;
        Ok(FactorValue { value: log_value.exp(), error_estimate: estimate })
    }

    /// `Psi-_r(s)` for `Re s <= 0`.
    pub fn minus_with_error(&self, s: Complex64) -> Result<FactorValue> {
        if !(s.re <= 0.0) || !s.im.is_finite() {
            return Err(Error::Domain(format!("Psi- needs Re s <= 0, got {s}")));
        }
        if s == Complex64::new(0.0, 0.0) {
            return Ok(FactorValue { value: Complex64::new(1.0, 0.0), error_estimate: 0.0 });
        }
        let (log_value, estimate) = self.projection(s, Side::Minus)?;
        Ok(FactorValue { value: log_value.exp(), error_estimate: estimate })
    }

    pub fn plus(&self, s: Complex64) -> Result<Complex64> {
        let v = self.plus_with_error(s)?;
        if v.error_estimate > EVAL_TOLERANCE {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {:e} at s = {s} exceeds {EVAL_TOLERANCE:e}",
                v.error_estimate
            )));
        }
        Ok(v.value)
    }

    pub fn minus(&self, s: Complex64) -> Result<Complex64> {
        let v = self.minus_with_error(s)?;
        if v.error_estimate > EVAL_TOLERANCE {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {:e} at s = {s} exceeds {EVAL_TOLERANCE:e}",
                v.error_estimate
            )));
        }
        Ok(v.value)
    }

    /// `|Psi+(iv) Psi-(iv) + k_r / psi_r(iv)|`.
    pub fn identity_residual(&self, v: f64) -> Result<f64> {
        let theta = Complex64::new(0.0, v);
        let lhs = self.plus(theta)? * self.minus(theta)?;
        Ok((lhs + self.k / self.exponent_at(v)?).norm())
    }
}

/// Closed-form factor limits in the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhLimit {
    /// `Psi+_0(s) = mu1^+ Phi1(s)/s`.
    RZero,
    /// `Psi+_inf(s) = 1`.
    RInfinity,
    /// `lim_{r -> 0} Psi+_r(s)/r = mu2 Phi1(s)/s` for `mu1 <= 0 < mu2`.
    RZeroScaled,
}

pub fn wh_limit(spec1: &CompoundPoissonSpec, spec2: &CompoundPoissonSpec, which: WhLimit, s: Complex64) -> Result<Complex64> {
    if !(s.re >= 0.0) || s == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain(format!("limit needs s != 0 with Re s >= 0, got {s}")));
    }
    let (mu1, mu2) = (spec1.mean_drift(), spec2.mean_drift());
    match which {
        WhLimit::RInfinity => Ok(Complex64::new(1.0, 0.0)),
        WhLimit::RZero => {
            if mu1 <= 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            Ok(mu1 * phi_inverse(spec1, s)? / s)
        }
        WhLimit::RZeroScaled => {
            if mu1 > 0.0 || mu2 <= 0.0 {
                return Err(Error::Drift(format!("scaled limit needs mu1 <= 0 < mu2, got mu1 = {mu1}, mu2 = {mu2}")));
            }
            Ok(mu2 * phi_inverse(spec1, s)? / s)
        }
    }
}

/// `Psi+_r` for any `r in [0, inf]`, switching to the limits at extreme rates.
#[derive(Debug, Clone)]
pub enum PlusFactor {
    One,
    Zero { spec1: CompoundPoissonSpec, mu1: f64 },
    ZeroScaled { spec1: CompoundPoissonSpec, r: f64, mu2: f64 },
    Numeric(WhFactor),
}

impl PlusFactor {
    pub fn new(axis: &Arc<AxisData>, r: ExtendedRate) -> Result<Self> {
        let (mu1, mu2) = (axis.spec1.mean_drift(), axis.spec2.mean_drift());
        let r = match r {
            ExtendedRate::Infinite => return Ok(PlusFactor::One),
            ExtendedRate::Finite(r) => r,
        };
        if r > EXTREME_HIGH {
            return Ok(PlusFactor::One);
        }
        if r < EXTREME_LOW {
            if mu1 > 0.0 {
                return Ok(PlusFactor::Zero { spec1: axis.spec1.clone(), mu1 });
            }
            if r > 0.0 && mu2 > 0.0 {
                return Ok(PlusFactor::ZeroScaled { spec1: axis.spec1.clone(), r, mu2 });
            }
            return Err(Error::Drift(format!("Psi+ at r = {r} degenerates for mu1 = {mu1}, mu2 = {mu2}")));
        }
        Ok(PlusFactor::Numeric(WhFactor::new(axis.clone(), r)?))
    }

    pub fn plus(&self, s: Complex64) -> Result<Complex64> {
        if s == Complex64::new(0.0, 0.0) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        match self {
            PlusFactor::One => Ok(Complex64::new(1.0, 0.0)),
            PlusFactor::Zero { spec1, mu1 } => Ok(*mu1 * phi_inverse(spec1, s)? / s),
            PlusFactor::ZeroScaled { spec1, r, mu2 } => Ok(*r * *mu2 * phi_inverse(spec1, s)? / s),
            PlusFactor::Numeric(f) => f.plus(s),
        }
    }
}

/// `Psi+_r(s)` built from scratch; prefer [`PlusFactor`] for repeated use.
pub fn wh_plus(aux: &AuxModel, s: Complex64) -> Result<Complex64> {
    aux.killing_rate()?;
    let axis = Arc::new(AxisData::build(&aux.spec1, &aux.spec2, QuadratureConfig::default())?);
    PlusFactor::new(&axis, aux.r)?.plus(s)
}

/// Snaps a nearly imaginary `theta` onto the axis.
fn clean_theta(theta: Complex64) -> Complex64 {
    if theta.re.abs() <= 1e-12 * theta.norm() {
        Complex64::new(0.0, theta.im)
    } else {
        theta
    }
}

/// `F1` and `F1-hat` for one risk model.
#[derive(Debug, Clone)]
pub struct RiskTransform {
    model: RiskModel,
    mu1: f64,
    mu2: f64,
    inv_r1: PlusFactor,
    r2: PlusFactor,
}

impl RiskTransform {
    pub fn new(model: &RiskModel) -> Result<Self> {
        Self::with_config(model, QuadratureConfig::default())
    }

    pub fn with_config(model: &RiskModel, cfg: QuadratureConfig) -> Result<Self> {
        validate_risk(model)?;
        let axis = Arc::new(AxisData::build(&model.spec1, &model.spec2, cfg)?);
        let (mu1, mu2) = model.means();
        let inv_r1 = match model.r1 {
            ExtendedRate::Finite(r) if r > 0.0 => PlusFactor::new(&axis, ExtendedRate::Finite(1.0 / r))?,
            _ => PlusFactor::One,
        };
        let r2 = match model.r2 {
            ExtendedRate::Finite(r) if r > 0.0 => PlusFactor::new(&axis, ExtendedRate::Finite(r))?,
            _ => PlusFactor::One,
        };
        Ok(RiskTransform { model: model.clone(), mu1, mu2, inv_r1, r2 })
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    /// Smallest admissible real argument `Phi1(0)`.
    pub fn abscissa(&self) -> Result<f64> {
        crate::analytic::phi_real(&self.model.spec1, 0.0)
    }

    /// `F1-hat(s) = E exp(-sU)` (defective when `r2 = inf`).
    pub fn f1_hat(&self, s: Complex64) -> Result<Complex64> {
        if !(s.re >= 0.0) || !s.im.is_finite() {
            return Err(Error::Domain(format!("F1-hat needs Re s >= 0, got {s}")));
        }
        if s.im == 0.0 && s.re <= self.abscissa()? && !(self.model.r1.is_zero() && self.model.r2.is_zero()) {
            return Err(Error::Domain(format!("F1-hat needs s > Phi1(0), got {s}")));
        }
        let m = &self.model;
        let theta = clean_theta(psi(&m.spec1, s));
        if theta.re < 0.0 {
            return Err(Error::Domain(format!("psi1(s) = {theta} has negative real part")));
        }
        let pk = || self.mu1 * s / theta;
        let finite_r2_part = |r2: f64| -> Result<Complex64> {
            // (mu1^+ + r2 mu2) s / ((theta + psi2(r2 s)) Psi+_{r2}(theta)), times the r1 part.
            let denom = theta + psi(&m.spec2, s * r2);
            Ok(s / (denom * self.r2.plus(theta)?))
        };
        let value = match (m.r1, m.r2) {
            (r1, ExtendedRate::Infinite) => {
                let base = self.r2_zero_value(r1, s, theta)?;
                base * (self.mu2 / m.spec2.drift)
            }
            (r1, ExtendedRate::Finite(r2)) if r2 == 0.0 => self.r2_zero_value(r1, s, theta)?,
            (ExtendedRate::Infinite, ExtendedRate::Finite(r2)) => {
                (pos(self.mu1) + r2 * self.mu2) * finite_r2_part(r2)? * pk()
            }
            (ExtendedRate::Finite(r1), ExtendedRate::Finite(r2)) if r1 == 0.0 => {
                (pos(self.mu1) + r2 * self.mu2) * finite_r2_part(r2)?
            }
            (ExtendedRate::Finite(r1), ExtendedRate::Finite(r2)) => {
                let constant = pos(self.mu1) - r1 * r2 * neg(self.mu1) + r2 * self.mu2;
                constant * finite_r2_part(r2)? * self.inv_r1.plus(theta)?
            }
        };
        if value.re.is_nan() {
            return Err(Error::Domain(format!("F1-hat undefined at s = {s}")));
        }
        Ok(value)
    }

    fn r2_zero_value(&self, r1: ExtendedRate, s: Complex64, theta: Complex64) -> Result<Complex64> {
        match r1 {
            ExtendedRate::Infinite => Ok(self.mu1 * s / theta),
            ExtendedRate::Finite(r1) if r1 == 0.0 => Ok(Complex64::new(1.0, 0.0)),
            ExtendedRate::Finite(r1) => {
                let p = self.inv_r1.plus(theta)?;
                if self.mu1 > 0.0 {
                    Ok(p)
                } else {
                    Ok((r1 * self.mu1 + self.mu2) / self.mu2 * p)
                }
            }
        }
    }

    /// `F1(s) = F1-hat(s) / s`.
    pub fn f1(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.f1_hat(s)? / s)
    }
}

/// `F1(s)` for real `s > Phi1(0)`.
pub fn f1_transform(model: &RiskModel, s: f64) -> Result<f64> {
    Ok(RiskTransform::new(model)?.f1(Complex64::new(s, 0.0))?.re)
}

/// `F1-hat(s) = s F1(s)` for real `s > Phi1(0)`.
pub fn f1_hat(model: &RiskModel, s: f64) -> Result<f64> {
    Ok(RiskTransform::new(model)?.f1_hat(Complex64::new(s, 0.0))?.re)
}

/// `G1` and `G1-hat` for one queueing model.
#[derive(Debug, Clone)]
pub struct QueueTransform {
    model: QueueModel,
    mu1: f64,
    mu2: f64,
    rho2: PlusFactor,
    inv_rho1: PlusFactor,
}

impl QueueTransform {
    pub fn new(model: &QueueModel) -> Result<Self> {
        Self::with_config(model, QuadratureConfig::default())
    }

    pub fn with_config(model: &QueueModel, cfg: QuadratureConfig) -> Result<Self> {
        validate_queue(model)?;
        if (model.rho1 * model.rho2 - 1.0).abs() < 1e-12 {
            return Err(Error::DegenerateModel("rho1 rho2 = 1".into()));
        }
        let axis = Arc::new(AxisData::build(&model.spec1, &model.spec2, cfg)?);
        let (mu1, mu2) = model.means();
        let rho2 = PlusFactor::new(&axis, ExtendedRate::Finite(model.rho2))?;
        let inv_rho1 = if model.rho1 > 0.0 {
            PlusFactor::new(&axis, ExtendedRate::Finite(1.0 / model.rho1))?
        } else {
            PlusFactor::One
        };
        Ok(QueueTransform { model: model.clone(), mu1, mu2, rho2, inv_rho1 })
    }

    /// `G1(0) = (mu2 + rho1 mu1) / (1 - rho1 rho2)`, defined for `mu1 > 0`.
    pub fn g1_at_zero(&self) -> Result<f64> {
        if self.mu1 <= 0.0 {
            return Err(Error::Drift(format!("G1(0) needs mu1 > 0, got {}", self.mu1)));
        }
        let m = &self.model;
        Ok((self.mu2 + m.rho1 * self.mu1) / (1.0 - m.rho1 * m.rho2))
    }

    pub fn g1(&self, s: Complex64) -> Result<Complex64> {
        let m = &self.model;
        if s.im == 0.0 && s.re <= crate::analytic::phi_real(&m.spec1, 0.0)? && self.mu1 <= 0.0 {
            return Err(Error::Domain(format!("G1 needs s > Phi1(0), got {s}")));
        }
        let theta = clean_theta(psi(&m.spec1, s));
        if theta.re < 0.0 {
            return Err(Error::Domain(format!("psi1(s) = {theta} has negative real part")));
        }
        let constant = if m.rho2 > 0.0 {
            (self.mu2 + m.rho1 * pos(self.mu1) + neg(self.mu1) / m.rho2) / (1.0 - m.rho1 * m.rho2)
        } else {
            (self.mu2 + m.rho1 * pos(self.mu1)) / (1.0 - m.rho1 * m.rho2)
        };
        if s == Complex64::new(0.0, 0.0) {
            return Ok(Complex64::new(constant, 0.0));
        }
        Ok(constant * self.rho2.plus(theta)? / self.inv_rho1.plus(theta)?)
    }

    /// `G1-hat(s) = G1(s) / G1(0)`.
    pub fn g1_hat(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.g1(s)? / self.g1_at_zero()?)
    }
}

pub fn g1_transform(model: &QueueModel, s: f64) -> Result<f64> {
    Ok(QueueTransform::new(model)?.g1(Complex64::new(s, 0.0))?.re)
}

pub fn g1_hat(model: &QueueModel, s: f64) -> Result<f64> {
    Ok(QueueTransform::new(model)?.g1_hat(Complex64::new(s, 0.0))?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{pk_transform, phi_real};
    use crate::model::presets::*;
    use crate::model::JumpDistribution;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn cfg_a_axis() -> Arc<AxisData> {
        let (a, b) = cfg_a_specs();
        Arc::new(AxisData::build(&a, &b, QuadratureConfig::default()).unwrap())
    }

    /// Projection of a known factorization: with
    /// `h(z) = log(a/(a+z)) + log(b/(b-z))` the plus factor is `a/(a+s)`.
    #[test]
    fn projection_recovers_known_factorization() {
        let axis = cfg_a_axis();
        let (a, b) = (0.7, 2.5);
        let mut h = Vec::new();
        let mut arg = 0.0;
        let mut prev = c(1.0);
        for &u in &axis.u {
            let z = Complex64::new(0.0, u);
            let f = a / (a + z) * (b / (b - z));
            arg += (f / prev).arg();
            prev = f;
            h.push(Complex64::new(f.norm().ln(), arg));
        }
        let factor = WhFactor { axis: axis.clone(), r: 1.0, k: 1.0, h, h_inf: f64::NEG_INFINITY };
        // The oracle decays to zero, so evaluate the tail-free part directly.
        for s in [0.01, 0.3, 1.0, 7.0, 200.0] {
            let s = c(s);
            let mut fine = c(0.0);
            for ((&u, &w), &hj) in axis.u.iter().zip(&axis.w).zip(&factor.h) {
                let iu = Complex64::new(0.0, u);
                fine += ((hj) / (iu - s) + hj.conj() / (-iu - s) - 2.0 * hj.im / u) * w;
            }
            let got = (-fine / (2.0 * PI)).exp();
            let want = a / (a + s);
            assert!((got - want).norm() < 1e-6, "s = {s}: {got} vs {want}");
        }
    }

    /// Same oracle with bounded `h` and the full evaluation path: the
    /// plus part of `h = log((a+s)... )` below tends to a constant at infinity.
    #[test]
    fn projection_with_constant_limit() {
        // f(z) = ((z + 2a)/(z + a)) * ((2b - z)/(b - z)) / 4 normalised to 1 at 0:
        // plus factor (s + 2a)/(2(s + a)), minus factor (2b - s)/(2(b - s)).
        let axis = cfg_a_axis();
        let (a, b) = (0.4, 3.0);
        let plus = |z: Complex64| (z + 2.0 * a) / (2.0 * (z + a));
        let minus = |z: Complex64| (2.0 * b - z) / (2.0 * (b - z));
        let mut h = Vec::new();
        let mut arg = 0.0;
        let mut prev = c(1.0);
        for &u in &axis.u {
            let z = Complex64::new(0.0, u);
            let f = plus(z) * minus(z);
            arg += (f / prev).arg();
            prev = f;
            h.push(Complex64::new(f.norm().ln(), arg));
        }
        let h_inf = (0.25f64).ln();
        let factor = WhFactor { axis, r: 1.0, k: 1.0, h, h_inf };
        for s in [c(0.05), c(1.0), c(30.0), Complex64::new(2.0, 0.5), Complex64::new(0.0, 0.7), Complex64::new(0.0, -20.0)] {
            let hv = (plus(Complex64::new(0.0, s.im)) * minus(Complex64::new(0.0, s.im))).ln();
            let (log_value, est) = factor.project(s, hv, Side::Plus);
            let got = log_value.exp();
            assert!((got - plus(s)).norm() < 1e-9, "s = {s}: {got} vs {}", plus(s));
            assert!(est < 1e-9);
        }
        for s in [c(-0.05), c(-2.0), Complex64::new(-2.0, -0.5), Complex64::new(0.0, 3.0)] {
            let hv = (plus(Complex64::new(0.0, s.im)) * minus(Complex64::new(0.0, s.im))).ln();
            let (log_value, _) = factor.project(s, hv, Side::Minus);
            assert!((log_value.exp() - minus(s)).norm() < 1e-9, "s = {s}");
        }
    }

    #[test]
    fn aux_exponent_limits_and_symmetry() {
        let (a, b) = cfg_a_specs();
        let aux = AuxModel::new(a, b, ExtendedRate::Finite(1.0)).unwrap();
        assert_eq!(aux_exponent(&aux, Complex64::new(0.0, 1e-9)).unwrap(), c(-2.0));
        let near = aux_exponent(&aux, Complex64::new(0.0, 1e-5)).unwrap();
        assert!((near + 2.0).norm() < 1e-4);
        let far = aux_exponent(&aux, Complex64::new(0.0, 1e9)).unwrap();
        assert!((far + 5.0).norm() < 1e-6);
        let p = aux_exponent(&aux, Complex64::new(0.0, 1.0)).unwrap();
        let m = aux_exponent(&aux, Complex64::new(0.0, -1.0)).unwrap();
        assert!((p - m.conj()).norm() < 1e-14);
    }

    #[test]
    fn factor_is_a_defective_transform_on_the_real_line() {
        let axis = cfg_a_axis();
        for r in [0.1, 1.0, 10.0] {
            let f = WhFactor::new(axis.clone(), r).unwrap();
            let mut prev = 1.0;
            for k in 0..40 {
                let s = 10f64.powf(-3.0 + 6.0 * k as f64 / 39.0);
                let v = f.plus(c(s)).unwrap();
                assert!(v.im.abs() < 1e-12);
                assert!(v.re > 0.0 && v.re <= prev + 1e-12, "r = {r}, s = {s}");
                prev = v.re;
            }
            let near_zero = f.plus(c(1e-7)).unwrap();
            assert!((near_zero.re - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn factor_is_nondecreasing_in_rate() {
        let axis = cfg_a_axis();
        let factors: Vec<_> = [0.01, 0.1, 1.0, 10.0, 100.0].iter().map(|&r| WhFactor::new(axis.clone(), r).unwrap()).collect();
        for s in [0.1, 1.0, 5.0] {
            let values: Vec<f64> = factors.iter().map(|f| f.plus(c(s)).unwrap().re).collect();
            assert!(values.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{values:?}");
        }
    }

    #[test]
    fn limit_examples() {
        let (a, b) = cfg_a_specs();
        assert_eq!(wh_limit(&a, &b, WhLimit::RInfinity, c(0.3)).unwrap(), c(1.0));
        let v = wh_limit(&a, &b, WhLimit::RZero, c(1.5)).unwrap();
        assert!((v - 2.0 / 3.0).norm() < 1e-14);
        let (n, b2) = cfg_b_specs();
        assert_eq!(wh_limit(&n, &b2, WhLimit::RZero, c(1.0)).unwrap(), c(0.0));
        assert!(wh_limit(&a, &b, WhLimit::RZeroScaled, c(1.0)).is_err());
        assert!(wh_limit(&n, &b2, WhLimit::RZeroScaled, c(1.0)).is_ok());
    }

    #[test]
    fn numeric_factor_approaches_limits() {
        let axis = cfg_a_axis();
        let (a, b) = cfg_a_specs();
        let big = WhFactor::new(axis.clone(), 1e4).unwrap();
        let small = WhFactor::new(axis, 1e-4).unwrap();
        for s in [0.5, 1.0, 2.0] {
            assert!((big.plus(c(s)).unwrap() - 1.0).norm() < 1e-3);
            let lim = wh_limit(&a, &b, WhLimit::RZero, c(s)).unwrap();
            assert!((small.plus(c(s)).unwrap() - lim).norm() < 1e-3);
        }
    }

    #[test]
    fn infinite_then_zero_is_pk() {
        let m = cfg_a_risk().with_rates(ExtendedRate::Infinite, ExtendedRate::ZERO);
        let t = RiskTransform::new(&m).unwrap();
        for s in [0.1, 1.0, 3.0] {
            let want = pk_transform(&m.spec1, psi(&m.spec1, c(s)).re).unwrap();
            // mu1 s / psi1(s) written through the PK transform of psi1(s) = theta.
            let direct = m.spec1.mean_drift() * s / psi(&m.spec1, c(s)).re;
            assert!((t.f1_hat(c(s)).unwrap().re - direct).abs() < 1e-14);
            assert!(want > 0.0);
        }
    }

    #[test]
    fn product_identity_for_f1() {
        for m in [cfg_a_risk(), cfg_b_risk()] {
            let full = RiskTransform::new(&m).unwrap();
            let left = RiskTransform::new(&m.with_rates(m.r1, ExtendedRate::ZERO)).unwrap();
            let right = RiskTransform::new(&m.with_rates(ExtendedRate::ZERO, m.r2)).unwrap();
            let s0 = phi_real(&m.spec1, 0.0).unwrap();
            for s in [0.25, 0.5, 1.0, 2.0, 4.0] {
                let s = c(s0 + s);
                let lhs = left.f1_hat(s).unwrap() * right.f1_hat(s).unwrap();
                let rhs = full.f1_hat(s).unwrap();
                assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
                assert!(rhs.re > 0.0 && rhs.re <= 1.0);
            }
        }
    }

    #[test]
    fn f1_hat_is_a_transform_of_a_proper_variable() {
        let m = cfg_a_risk();
        let t = RiskTransform::new(&m).unwrap();
        let mut prev = 1.0;
        for k in 0..30 {
            let s = 10f64.powf(-4.0 + 8.0 * k as f64 / 29.0);
            let v = t.f1_hat(c(s)).unwrap().re;
            assert!(v <= prev + 1e-12 && v > 0.0);
            prev = v;
        }
        assert!((t.f1_hat(c(1e-6)).unwrap().re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn g1_boundary_cases() {
        let q = cfg_a_queue();
        let plain = QueueTransform::new(&q.with_rates(0.0, 0.0)).unwrap();
        for s in [0.5, 1.0, 2.0] {
            let want = pk_transform(&q.spec1, s).unwrap();
            assert!((plain.g1_hat(c(s)).unwrap().re - want).abs() < 1e-12);
        }
        let full = QueueTransform::new(&q).unwrap();
        let one = QueueTransform::new(&q.with_rates(q.rho1, 0.0)).unwrap();
        let two = QueueTransform::new(&q.with_rates(0.0, q.rho2)).unwrap();
        for s in [0.25, 1.0, 4.0] {
            let s = c(s);
            let lhs = full.g1_hat(s).unwrap() * plain.g1_hat(s).unwrap();
            let rhs = one.g1_hat(s).unwrap() * two.g1_hat(s).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!((full.g1_hat(c(1e-8)).unwrap().re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn erlang_and_hyperexponential_factors_converge() {
        let s1 = CompoundPoissonSpec::new(2.0, 1.0, JumpDistribution::Erlang { shape: 3, rate: 2.0 }).unwrap();
        let s2 = CompoundPoissonSpec::new(
            1.0,
            1.0,
            JumpDistribution::HyperExponential { weights: vec![0.5, 0.5], rates: vec![1.0, 4.0] },
        )
        .unwrap();
        let axis = Arc::new(AxisData::build(&s1, &s2, QuadratureConfig::default()).unwrap());
        let f = WhFactor::new(axis, 0.7).unwrap();
        for v in [0.05, 0.5, 5.0, 50.0] {
            assert!(f.identity_residual(v).unwrap() < 1e-9);
        }
    }

    #[test]
    fn boundary_transforms_annihilate_the_kernel_on_the_curve() {
        use crate::analytic::{kernel_coeff_risk, kernel_curve};
        let m = cfg_a_risk();
        let first = RiskTransform::new(&m).unwrap();
        let second = RiskTransform::new(&m.swapped()).unwrap();
        for k in 0..20 {
            let v = 0.1 * 100f64.powf(k as f64 / 19.0);
            let (s1, s2) = kernel_curve(&m.spec1, &m.spec2, Complex64::new(0.0, v)).unwrap();
            let coeffs = kernel_coeff_risk(&m, s1, s2).unwrap();
            let a = coeffs.a1 * first.f1(s1).unwrap();
            let b = coeffs.a2 * second.f1(s2).unwrap();
            let rel = (a + b).norm() / (a.norm() + b.norm());
            assert!(rel < 1e-8, "v = {v}: {rel:e}");
        }
    }

    #[test]
    fn scaled_limit_for_negative_first_drift() {
        let (a, b) = cfg_b_specs();
        let axis = Arc::new(AxisData::build(&a, &b, QuadratureConfig::default()).unwrap());
        let f = WhFactor::new(axis, 1e-4).unwrap();
        for s in [0.5, 1.0, 2.0] {
            let lim = wh_limit(&a, &b, WhLimit::RZeroScaled, c(s)).unwrap();
            let got = f.plus(c(s)).unwrap() / 1e-4;
            assert!((got - lim).norm() < 1e-2, "s = {s}: {got} vs {lim}");
        }
    }
}
