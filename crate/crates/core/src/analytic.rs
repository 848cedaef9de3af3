//! Laplace exponents, their inverses, and the kernel-equation ingredients.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CompoundPoissonSpec, ExtendedRate, QueueModel, RiskModel};

/// Transform arguments `s`, `s1`, `s2`, `theta`.
pub type ComplexPoint = Complex64;

const ROOT_TOL: f64 = 1e-12;
const ACCEPT_TOL: f64 = 1e-10;
const NOMINAL_STEPS: usize = 32;
const MAX_HOMOTOPY_STEPS: usize = 20_000;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `psi(s)` without the half-plane check.
pub(crate) fn psi(spec: &CompoundPoissonSpec, s: Complex64) -> Complex64 {
    spec.drift * s + spec.rate * spec.jumps.transform_minus_one(s)
}

/// `psi'(s)`.
pub(crate) fn psi_prime(spec: &CompoundPoissonSpec, s: Complex64) -> Complex64 {
    spec.drift + spec.rate * spec.jumps.transform_derivative(s)
}

fn psi_real(spec: &CompoundPoissonSpec, s: f64) -> f64 {
    psi(spec, c(s)).re
}

fn psi_prime_real(spec: &CompoundPoissonSpec, s: f64) -> f64 {
    psi_prime(spec, c(s)).re
}

fn check_finite(z: Complex64, what: &str) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {z}")))
    }
}

/// `psi(s) = c s + lambda (E exp(-sJ) - 1)` for `Re s >= 0`.
pub fn laplace_exponent(spec: &CompoundPoissonSpec, s: ComplexPoint) -> Result<ComplexPoint> {
    check_finite(s, "s")?;
    if s.re < 0.0 {
        return Err(Error::Domain(format!("Re s must be non-negative, got {s}")));
    }
    Ok(psi(spec, s))
}

/// `psi'(s)` for `Re s >= 0`.
pub fn laplace_exponent_derivative(spec: &CompoundPoissonSpec, s: ComplexPoint) -> Result<ComplexPoint> {
    check_finite(s, "s")?;
    if s.re < 0.0 {
        return Err(Error::Domain(format!("Re s must be non-negative, got {s}")));
    }
    Ok(psi_prime(spec, s))
}

/// The largest real root of `psi(s) = theta`, `theta >= 0`.
///
/// Newton from the right converges monotonically since `psi` is convex and
/// increasing to the right of its largest root.
pub fn phi_real(spec: &CompoundPoissonSpec, theta: f64) -> Result<f64> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be finite and non-negative, got {theta}")));
    }
    let mut s = (theta + spec.rate) / spec.drift;
    if spec.mean_drift() > 0.0 {
        s = s.min(theta / spec.mean_drift());
    }
    // `psi(s) >= theta` holds at both bounds; guard against rounding anyway.
    while psi_real(spec, s) < theta {
        s = 2.0 * s + 1e-300;
    }
    for _ in 0..500 {
        let f = psi_real(spec, s) - theta;
        let d = psi_prime_real(spec, s);
        if f <= 0.0 || d <= 0.0 {
            break;
        }
        let step = f / d;
        let next = s - step;
        if !(next < s) || step <= 1e-16 * s.abs() {
            s = next.max(0.0).min(s);
            break;
        }
        s = next;
    }
    if !s.is_finite() {
        return Err(Error::NoConvergence(format!("real inverse at theta = {theta}")));
    }
    Ok(s.max(0.0))
}

fn converged(spec: &CompoundPoissonSpec, s: Complex64, theta: Complex64, tol: f64) -> bool {
    let scale = theta.norm().max(spec.drift * s.norm()).max(1e-300);
    (psi(spec, s) - theta).norm() <= tol * scale
}

/// Newton for `psi(s) = theta` from `s`; `None` if it does not settle
/// within `max_iter` iterations or leaves the right half-plane.
fn newton(spec: &CompoundPoissonSpec, mut s: Complex64, theta: Complex64, max_iter: usize, tol: f64) -> Option<Complex64> {
    for _ in 0..max_iter {
        if converged(spec, s, theta, tol) {
            return Some(s);
        }
        let d = psi_prime(spec, s);
        if d.norm() == 0.0 || !d.re.is_finite() {
            return None;
        }
        s -= (psi(spec, s) - theta) / d;
        if !(s.re.is_finite() && s.im.is_finite()) || s.re < -1e-9 * (1.0 + s.norm()) {
            return None;
        }
    }
    converged(spec, s, theta, tol).then_some(s)
}

/// Traces the root of `psi(s) = theta` from `(theta_from, s_from)` along
/// the segment to `theta_to`.
pub(crate) fn continue_root(
    spec: &CompoundPoissonSpec,
    s_from: Complex64,
    theta_from: Complex64,
    theta_to: Complex64,
) -> Result<Complex64> {
    let delta = theta_to - theta_from;
    let mut tau = 0.0f64;
    let mut dtau = 1.0 / NOMINAL_STEPS as f64;
    let mut s = s_from;
    let mut steps = 0usize;
    while tau < 1.0 {
        steps += 1;
        if steps > MAX_HOMOTOPY_STEPS || dtau < 1e-10 {
            return Err(Error::NoConvergence(format!("continuation to theta = {theta_to} stalled at tau = {tau}")));
        }
        let next_tau = (tau + dtau).min(1.0);
        let theta_next = theta_from + delta * next_tau;
        let d = psi_prime(spec, s);
        let predicted = s + delta * (next_tau - tau) / d;
        match newton(spec, predicted, theta_next, 8, ACCEPT_TOL) {
            Some(next) if (next - predicted).norm() <= 0.5 * (predicted - s).norm() + 1e-12 * (1.0 + s.norm()) => {
                s = next;
                tau = next_tau;
                dtau = (dtau * 1.5).min(1.0 / NOMINAL_STEPS as f64 * 4.0);
            }
            _ => dtau *= 0.5,
        }
    }
    Ok(polish(spec, s, theta_to))
}

fn polish(spec: &CompoundPoissonSpec, mut s: Complex64, theta: Complex64) -> Complex64 {
    let mut best = s;
    let mut best_res = (psi(spec, s) - theta).norm();
    for _ in 0..6 {
        if converged(spec, s, theta, ROOT_TOL) {
            return s;
        }
        s -= (psi(spec, s) - theta) / psi_prime(spec, s);
        let res = (psi(spec, s) - theta).norm();
        if res < best_res {
            best = s;
            best_res = res;
        }
    }
    best
}

fn require_continuable(spec: &CompoundPoissonSpec) -> Result<()> {
    if spec.jumps.supports_continuation() {
        Ok(())
    } else {
        Err(Error::Domain("inverse exponent continuation is not supported for deterministic jumps".into()))
    }
}

/// `Phi(theta)`: the root of `psi(s) = theta` continued from the positive
/// real root, for `Re theta >= 0`.
pub fn phi_inverse(spec: &CompoundPoissonSpec, theta: ComplexPoint) -> Result<ComplexPoint> {
    require_continuable(spec)?;
    check_finite(theta, "theta")?;
    if theta.re < 0.0 {
        return Err(Error::Domain(format!("Re theta must be non-negative, got {theta}")));
    }
    let start = theta.norm();
    let s0 = phi_real(spec, start)?;
    if theta.im == 0.0 {
        return Ok(c(s0));
    }
    let s = continue_root(spec, c(s0), c(start), theta)?;
    if s.re < 0.0 || !converged(spec, s, theta, ACCEPT_TOL) {
        return Err(Error::NoConvergence(format!("continuation to theta = {theta} ended at s = {s}")));
    }
    Ok(s)
}

/// `Phi(i u_j)` for increasing `u_j > 0`, each continued from its predecessor.
pub(crate) fn phi_on_imaginary_axis(spec: &CompoundPoissonSpec, u: &[f64]) -> Result<Vec<Complex64>> {
    require_continuable(spec)?;
    let mut out = Vec::with_capacity(u.len());
    let mut prev: Option<(Complex64, Complex64)> = None;
    for &uj in u {
        let theta = Complex64::new(0.0, uj);
        let s = match prev {
            None => phi_inverse(spec, theta)?,
            Some((theta_prev, s_prev)) => {
                let predicted = s_prev + (theta - theta_prev) / psi_prime(spec, s_prev);
                match newton(spec, predicted, theta, 6, ROOT_TOL) {
                    Some(s) if s.re >= 0.0 && (s - predicted).norm() <= 0.5 * (predicted - s_prev).norm() + 1e-12 => s,
                    _ => continue_root(spec, s_prev, theta_prev, theta)?,
                }
            }
        };
        if s.re < 0.0 || !converged(spec, s, theta, ACCEPT_TOL) {
            return Err(Error::NoConvergence(format!("inverse at theta = {theta} gave s = {s}")));
        }
        out.push(s);
        prev = Some((theta, s));
    }
    Ok(out)
}

/// Generalized Pollaczek-Khinchine transform `mu theta / psi(theta)`.
pub fn pk_transform(spec: &CompoundPoissonSpec, theta: f64) -> Result<f64> {
    let mu = spec.mean_drift();
    if mu <= 0.0 {
        return Err(Error::Drift(format!("mean drift must be positive, got {mu}")));
    }
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be non-negative, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    if theta.is_infinite() {
        return Ok(mu / spec.drift);
    }
    Ok(mu * theta / psi_real(spec, theta))
}

/// Multipliers of the two boundary transforms in a kernel equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCoefficients {
    pub a1: Complex64,
    pub a2: Complex64,
}

/// `(psi(a) - psi(b)) / (a - b)`, with the derivative at the removable point.
fn divided_difference(spec: &CompoundPoissonSpec, a: Complex64, b: Complex64) -> Complex64 {
    let gap = a - b;
    if gap.norm() <= 1e-7 * (1.0 + a.norm().max(b.norm())) {
        // Midpoint derivative; the error is O(|a - b|^2).
        psi_prime(spec, (a + b) * 0.5)
    } else {
        (psi(spec, a) - psi(spec, b)) / gap
    }
}

fn risk_coefficient(spec: &CompoundPoissonSpec, s_other: Complex64, r: ExtendedRate, s_own: Complex64) -> Complex64 {
    match r {
        ExtendedRate::Infinite => c(spec.drift),
        ExtendedRate::Finite(r) => divided_difference(spec, s_other, s_own * r),
    }
}

/// `A1 = (psi2(s2) - psi2(r2 s1)) / (s2 - r2 s1)` and its mirror `A2`.
pub fn kernel_coeff_risk(model: &RiskModel, s1: ComplexPoint, s2: ComplexPoint) -> Result<KernelCoefficients> {
    check_finite(s1, "s1")?;
    check_finite(s2, "s2")?;
    if s1.re < 0.0 || s2.re < 0.0 {
        return Err(Error::Domain(format!("kernel arguments need Re >= 0, got s1 = {s1}, s2 = {s2}")));
    }
    Ok(KernelCoefficients {
        a1: risk_coefficient(&model.spec2, s2, model.r2, s1),
        a2: risk_coefficient(&model.spec1, s1, model.r1, s2),
    })
}

/// `A1 = s2 - rho2 s1`, `A2 = s1 - rho1 s2`.
pub fn kernel_coeff_queue(model: &QueueModel, s1: ComplexPoint, s2: ComplexPoint) -> Result<KernelCoefficients> {
    if (model.rho1 * model.rho2 - 1.0).abs() < 1e-12 {
        return Err(Error::DegenerateModel("rho1 rho2 = 1".into()));
    }
    Ok(KernelCoefficients { a1: s2 - model.rho2 * s1, a2: s1 - model.rho1 * s2 })
}

/// `(s1, s2) = (Phi1(theta), Phi2(-theta))` for purely imaginary `theta != 0`.
pub fn kernel_curve(
    spec1: &CompoundPoissonSpec,
    spec2: &CompoundPoissonSpec,
    theta: ComplexPoint,
) -> Result<(ComplexPoint, ComplexPoint)> {
    if theta.re != 0.0 || theta.im == 0.0 {
        return Err(Error::Domain(format!("theta must be purely imaginary and non-zero, got {theta}")));
    }
    let s1 = phi_inverse(spec1, theta)?;
    let s2 = phi_inverse(spec2, -theta)?;
    Ok((s1, s2))
}

/// Solves a kernel equation for the bivariate transform:
/// `(A1 F1 + A2 F2) / (psi1(s1) + psi2(s2))`.
pub fn bivariate_from_kernel(
    spec1: &CompoundPoissonSpec,
    spec2: &CompoundPoissonSpec,
    coeffs: KernelCoefficients,
    s1: ComplexPoint,
    s2: ComplexPoint,
    f1: ComplexPoint,
    f2: ComplexPoint,
) -> Result<ComplexPoint> {
    let denom = laplace_exponent(spec1, s1)? + laplace_exponent(spec2, s2)?;
    if denom.norm() < 1e-12 {
        return Err(Error::OnKernelCurve(denom.norm()));
    }
    Ok((coeffs.a1 * f1 + coeffs.a2 * f2) / denom)
}
