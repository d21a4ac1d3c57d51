//! Finite atomic measures on the closed ball and the orbit measures built from a group ball.

mod atomic;
mod product;

pub use atomic::{AtomicMeasure, MeasureMeta};
pub use product::ProductAtoms;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_orbit::GroupBall;
use crate::hypgeom::{busemann, dist_raw, radial_projection, GeomError, HPoint, Location};
use crate::natural_map::Representation;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("the group ball is empty")]
    EmptyBall,
    #[error("sigma must be a probability measure, got mass {mass}")]
    SigmaNotProbability { mass: f64 },
    #[error("representation incomplete: {0}")]
    RepresentationIncomplete(String),
    #[error("convolution rule undefined at atom {0}")]
    RuleUndefinedAtAtom(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weights `exp(-s d(x, γO))` for every element of the ball, in ball order.
///
/// At `x = O` these are bitwise the terms of `poincare_partial`.
pub(crate) fn orbit_weights(ball: &GroupBall, x: &HPoint, s: f64) -> Vec<f64> {
    let xs = x.as_slice();
    if is_origin(x) {
        return ball.radii().iter().map(|r| (-s * r).exp()).collect();
    }
    (0..ball.len()).into_par_iter().map(|i| (-s * dist_raw(xs, ball.orbit_slice(i))).exp()).collect()
}

fn is_origin(x: &HPoint) -> bool {
    let v = x.as_slice();
    v[0] == 1.0 && v[1..].iter().all(|&a| a == 0.0)
}

/// `c(s)`, the normalizer shared by every orbit measure of the ball.
pub fn normalizer(ball: &GroupBall, s: f64) -> f64 {
    crate::group_orbit::poincare_partial(ball, s)
}

/// `(1/c(s)) Σ exp(-s d(x, γO)) δ_{γO}`.
pub fn ps_measure(ball: &GroupBall, x: &HPoint, s: f64) -> Result<AtomicMeasure, MeasureError> {
    if ball.is_empty() {
        return Err(MeasureError::EmptyBall);
    }
    if x.dim() != ball.dim() {
        return Err(MeasureError::DimensionMismatch { expected: ball.dim(), got: x.dim() });
    }
    let raw = orbit_weights(ball, x, s);
    let n = ball.dim() + 1;
    let mut coords = Vec::with_capacity(ball.len() * n);
    for i in 0..ball.len() {
        coords.extend_from_slice(ball.orbit(i).as_slice());
    }
    Ok(AtomicMeasure::from_parts(ball.dim(), coords, vec![false; ball.len()], raw, normalizer(ball, s)))
}

/// `(1/c(s)) Σ exp(-s d(x, γO)) γ_*σ`, with `σ` a probability measure of interior atoms.
pub fn ms_measure(ball: &GroupBall, x: &HPoint, s: f64, sigma: &AtomicMeasure) -> Result<AtomicMeasure, MeasureError> {
    if ball.is_empty() {
        return Err(MeasureError::EmptyBall);
    }
    let mass = sigma.mass();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(MeasureError::SigmaNotProbability { mass });
    }
    if sigma.dim() != ball.dim() {
        return Err(MeasureError::DimensionMismatch { expected: ball.dim(), got: sigma.dim() });
    }
    let base = orbit_weights(ball, x, s);
    let n = ball.dim() + 1;
    let m = sigma.len();
    let mut coords = Vec::with_capacity(ball.len() * m * n);
    let mut raw = Vec::with_capacity(ball.len() * m);
    let mut ideal = Vec::with_capacity(ball.len() * m);
    for (i, w) in base.iter().enumerate() {
        let g = ball.isometry(i);
        for q in 0..m {
            let v = g.apply_vec(sigma.location_slice(q));
            if sigma.is_ideal(q) {
                coords.extend_from_slice(crate::hypgeom::IdealPoint::from_ray_unchecked(v).as_slice());
            } else {
                coords.extend_from_slice(HPoint::from_raw(v).as_slice());
            }
            ideal.push(sigma.is_ideal(q));
            raw.push(w * sigma.weight(q));
        }
    }
    Ok(AtomicMeasure::from_parts(ball.dim(), coords, ideal, raw, normalizer(ball, s)))
}

/// `η_x^s`: orbit atoms `γO` paired with `ρ(γ) D(O)`.
pub fn graphic_measure(
    ball: &GroupBall,
    x: &HPoint,
    s: f64,
    rep: &Representation,
) -> Result<ProductAtoms, MeasureError> {
    if ball.is_empty() {
        return Err(MeasureError::EmptyBall);
    }
    let mu = ps_measure(ball, x, s)?;
    let images = rep.images_over(ball).map_err(|e| MeasureError::RepresentationIncomplete(e.to_string()))?;
    let nn = rep.dim_n() + 1;
    let d0 = rep.d0().as_slice();
    let mut targets = Vec::with_capacity(ball.len() * nn);
    for i in 0..ball.len() {
        let m = &images[i * nn * nn..(i + 1) * nn * nn];
        let v: Vec<f64> = (0..nn).map(|r| (0..nn).map(|c| m[c * nn + r] * d0[c]).sum()).collect();
        targets.extend_from_slice(HPoint::from_raw(v).as_slice());
    }
    Ok(ProductAtoms::from_source(mu, rep.dim_n(), targets, vec![false; ball.len()]))
}

/// `μ ∗ {rule}`: each atom `z` of `μ` is replaced by `rule(z)` scaled by its weight.
pub fn convolve<F>(mu: &AtomicMeasure, dim_y: usize, rule: F) -> Result<AtomicMeasure, MeasureError>
where
    F: Fn(usize, &Location) -> Option<AtomicMeasure>,
{
    let mut out = AtomicMeasure::new(dim_y);
    for i in 0..mu.len() {
        let loc = mu.location(i);
        let nu = rule(i, &loc).ok_or(MeasureError::RuleUndefinedAtAtom(i))?;
        if nu.dim() != dim_y {
            return Err(MeasureError::DimensionMismatch { expected: dim_y, got: nu.dim() });
        }
        let w = mu.weight(i);
        for (l, v) in nu.atoms() {
            out.push(l, w * v)?;
        }
    }
    Ok(out)
}

/// Atomwise comparison of `γ_* μ_x` with `μ_{γx}` over words `w` with `w, γw` both in the ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub compared: usize,
    pub max_weight_diff: f64,
    pub max_location_diff: f64,
}

pub fn equivariance_check(ball: &GroupBall, x: &HPoint, s: f64, gamma: usize) -> Result<EquivarianceReport, MeasureError> {
    let g = ball.isometry(gamma);
    let gx = g.apply(x);
    let mu_x = ps_measure(ball, x, s)?;
    let mu_gx = ps_measure(ball, &gx, s)?;
    let mut rep = EquivarianceReport { compared: 0, max_weight_diff: 0.0, max_location_diff: 0.0 };
    for i in 0..ball.len() {
        let gw = g.compose(&ball.isometry(i));
        let Some(j) = ball.find(&gw) else { continue };
        rep.compared += 1;
        rep.max_weight_diff = rep.max_weight_diff.max((mu_x.weight(i) - mu_gx.weight(j)).abs());
        let moved = g.apply_vec(mu_x.location_slice(i));
        rep.max_location_diff = rep.max_location_diff.max(dist_raw(&moved, mu_gx.location_slice(j)));
    }
    Ok(rep)
}

/// Compares `w_γ(x)/w_γ(O)` with `exp(-s B(x, θ_γ))` on atoms of radius above `frac · R_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub checked: usize,
    pub max_rel_err: f64,
}

pub fn density_kernel_check(ball: &GroupBall, x: &HPoint, s: f64, frac: f64) -> Result<DensityReport, MeasureError> {
    let mu_x = ps_measure(ball, x, s)?;
    let mu_o = ps_measure(ball, &HPoint::origin(ball.dim()), s)?;
    let cut = frac * ball.r_max();
    let mut rep = DensityReport { checked: 0, max_rel_err: 0.0 };
    for i in 0..ball.len() {
        if ball.radius(i) <= cut {
            continue;
        }
        let Some(theta) = radial_projection(&ball.orbit(i)) else { continue };
        let ratio = mu_x.raw_weights()[i] / mu_o.raw_weights()[i];
        let kernel = (-s * busemann(x, &theta)).exp();
        rep.checked += 1;
        rep.max_rel_err = rep.max_rel_err.max((ratio / kernel - 1.0).abs());
    }
    Ok(rep)
}

/// How close a finite orbit measure is to its limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub s_minus_delta: f64,
    pub r_max: f64,
    /// Mass fraction carried by atoms of radius above `0.9 R_max` (at `O`).
    pub tail_fraction: f64,
    /// `exp(-(s - δ̂) R_max)`; above 0.1 the truncation dominates.
    pub truncation_factor: f64,
}

pub fn truncation_report(ball: &GroupBall, s: f64, delta_hat: f64) -> TruncationReport {
    let total: f64 = ball.radii().iter().map(|r| (-s * r).exp()).sum();
    let cut = 0.9 * ball.r_max();
    let tail: f64 = ball.radii().iter().filter(|&&r| r > cut).map(|r| (-s * r).exp()).sum();
    let factor = (-(s - delta_hat) * ball.r_max()).exp();
    if factor > 0.1 {
        log::warn!("exp(-(s - delta) R_max) = {factor:.3} > 0.1: truncation dominates");
    }
    TruncationReport { s_minus_delta: s - delta_hat, r_max: ball.r_max(), tail_fraction: tail / total, truncation_factor: factor }
}

/// Masses of `μ_O` in ball-model balls `B(ω, r)` against `c r^δ̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub radii: Vec<f64>,
    /// `masses[j][i]`: mass within chordal radius `radii[i]` of point `j`.
    pub masses: Vec<Vec<f64>>,
    pub fitted_c: f64,
    /// Largest `mass / (c r^δ̂)` over all points and radii.
    pub worst_ratio: f64,
    pub within_factor_3: bool,
}

pub fn shadow_bound(mu: &AtomicMeasure, points: &[Vec<f64>], delta_hat: f64) -> ShadowReport {
    let radii: Vec<f64> = (1..=6).map(|j| 0.5f64.powi(j)).collect();
    let balls: Vec<Vec<f64>> = (0..mu.len()).map(|i| mu.ball_coords(i)).collect();
    let masses: Vec<Vec<f64>> = points
        .iter()
        .map(|w| {
            radii
                .iter()
                .map(|&r| {
                    (0..mu.len())
                        .filter(|&i| crate::hypgeom::chordal(&balls[i], w) < r)
                        .map(|i| mu.weight(i))
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut logs: Vec<f64> = masses
        .iter()
        .flat_map(|row| row.iter().zip(&radii).filter(|(m, _)| **m > 0.0).map(|(m, r)| (m / r.powf(delta_hat)).ln()))
        .collect();
    logs.sort_by(f64::total_cmp);
    let fitted_c = if logs.is_empty() { 0.0 } else { logs[logs.len() / 2].exp() };
    let worst_ratio = masses
        .iter()
        .flat_map(|row| row.iter().zip(&radii).map(|(m, r)| m / (fitted_c * r.powf(delta_hat))))
        .fold(0.0, f64::max);
    ShadowReport { radii, masses, fitted_c, worst_ratio, within_factor_3: worst_ratio <= 3.0 }
}
