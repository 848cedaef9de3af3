//! Gaver-Stehfest inversion of `E exp(-sU)` into the CDF of `U`.
//!
//! With `F(s) = F-hat(s)/s` the Laplace transform of the CDF,
//! `CDF(u) ~ (ln 2 / u) sum_k V_k F(k ln 2 / u)`. Every node is real and
//! positive, so transforms only need to be evaluated where they are proven.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

pub const DEFAULT_TERMS: usize = 16;
const AGREEMENT_TOLERANCE: f64 = 1e-4;
const CORRECTION_LIMIT: f64 = 1e-3;
/// Argument at which the atom at zero is read off the transform.
pub const ATOM_ARGUMENT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    /// Number of Stehfest terms `M` (even, 8..=20).
    pub terms: usize,
    /// Transforms are only evaluated strictly above this abscissa.
    pub abscissa: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { terms: DEFAULT_TERMS, abscissa: 0.0 }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.terms % 2 != 0 || !(8..=20).contains(&self.terms) {
            return Err(Error::Domain(format!("Stehfest term count must be even in 8..=20, got {}", self.terms)));
        }
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Stehfest weights `V_1..V_M`.
pub fn stehfest_weights(m: usize) -> Vec<f64> {
    let half = m / 2;
    (1..=m)
        .map(|k| {
            let mut sum = 0.0;
            for j in (k + 1) / 2..=k.min(half) {
                sum += (j as f64).powi(half as i32) * factorial(2 * j)
                    / (factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k));
            }
            if (k + half) % 2 == 0 {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

/// One inverted CDF value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfPoint {
    pub u: f64,
    pub cdf: f64,
    /// `|CDF_M - CDF_{M+2}|`.
    pub error_estimate: f64,
}

fn invert_raw(transform: &dyn Fn(f64) -> Result<f64>, u: f64, cfg: &InversionConfig, extended_weights: &[f64], weights: &[f64]) -> Result<CdfPoint> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Domain(format!("inversion point must be positive, got {u}")));
    }
    let step = LN_2 / u;
    if step <= cfg.abscissa {
        return Err(Error::NodesBelowDomain { node: step, abscissa: cfg.abscissa });
    }
    let mut extended = 0.0;
    let mut value = 0.0;
    for (k, v_extended) in extended_weights.iter().enumerate() {
        let s = (k + 1) as f64 * step;
        let f = transform(s)? / s;
        extended += v_extended * f;
        if let Some(v_base) = weights.get(k) {
            value += v_base * f;
        }
    }
    let extended = extended * step;
    let value = value * step;
    let error_estimate = (extended - value).abs();
    if error_estimate > AGREEMENT_TOLERANCE {
        return Err(Error::InversionUnstable(format!(
            "M = {} and M = {} disagree by {error_estimate:e} at u = {u}",
            cfg.terms,
            cfg.terms + 2
        )));
    }
    Ok(CdfPoint { u, cdf: value.clamp(0.0, 1.0), error_estimate })
}

/// `P(U <= u)` from `s -> E exp(-sU)`.
pub fn invert_cdf(transform: &dyn Fn(f64) -> Result<f64>, u: f64, cfg: &InversionConfig) -> Result<CdfPoint> {
    cfg.validate()?;
    let inner = stehfest_weights(cfg.terms);
    let outer = stehfest_weights(cfg.terms + 2);
    invert_raw(transform, u, cfg, &outer, &inner)
}

/// Inverted CDF on a grid after the monotone correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    pub points: Vec<CdfPoint>,
    /// `lim_{s -> inf} F-hat(s)`, read at `s = 1e6`.
    pub atom: f64,
    /// Largest change made by the monotone correction.
    pub correction: f64,
}

/// Pool-adjacent-violators fit of a nondecreasing sequence.
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (v2, n2) = blocks[blocks.len() - 1];
            let (v1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((v1 * n1 as f64 + v2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Inverts on an increasing grid of positive points.
pub fn invert_cdf_grid(transform: &dyn Fn(f64) -> Result<f64>, u_grid: &[f64], cfg: &InversionConfig) -> Result<CdfGrid> {
    cfg.validate()?;
    if u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("inversion grid must be strictly increasing".into()));
    }
    let inner = stehfest_weights(cfg.terms);
    let outer = stehfest_weights(cfg.terms + 2);
    let mut points = u_grid
        .iter()
        .map(|&u| invert_raw(transform, u, cfg, &outer, &inner))
        .collect::<Result<Vec<_>>>()?;
    let atom = transform(ATOM_ARGUMENT.max(2.0 * cfg.abscissa))?.clamp(0.0, 1.0);
    let raw: Vec<f64> = points.iter().map(|p| p.cdf).collect();
    let fitted = isotonic(&raw);
    let correction = raw.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if correction > CORRECTION_LIMIT {
        return Err(Error::InversionUnstable(format!("monotone correction of {correction:e} exceeds {CORRECTION_LIMIT:e}")));
    }
    for (p, v) in points.iter_mut().zip(fitted) {
        p.cdf = v;
    }
    Ok(CdfGrid { points, atom, correction })
}

/// `int_{0-}^u B(u - x) dA(x)` for CDFs `A`, `B` given on `[0, u]`, with the
/// atom of `A` at zero passed separately. Trapezoid in `B` over the step.
pub fn stieltjes_convolution(a: &dyn Fn(f64) -> f64, a_atom: f64, b: &dyn Fn(f64) -> f64, u: f64, step: f64) -> f64 {
    let n = (u / step).ceil().max(1.0) as usize;
    let h = u / n as f64;
    let mut total = a_atom * b(u);
    let mut a_prev = a_atom;
    for i in 0..n {
        let x1 = (i + 1) as f64 * h;
        let a_next = a(x1);
        let x0 = i as f64 * h;
        total += 0.5 * (b(u - x0) + b(u - x1)) * (a_next - a_prev);
        a_prev = a_next;
    }
    total
}
