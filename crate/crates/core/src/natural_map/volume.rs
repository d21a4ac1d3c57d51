use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{differential, jac_p, MapError};
use crate::group_orbit::GroupBall;
use crate::hypgeom::{mink, ray_point, Frame, HPoint, IdealPoint};

/// Weighted points covering the Dirichlet domain of a group ball at `O`,
/// truncated to a hyperbolic ball of radius `radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSample {
    pub points: Vec<HPoint>,
    /// Every point carries `ball_volume / candidates`.
    pub weight: f64,
    pub candidates: usize,
    pub radius: f64,
    pub ball_volume: f64,
}

impl DomainSample {
    /// Monte-Carlo estimate of the truncated domain volume.
    pub fn volume(&self) -> f64 {
        self.weight * self.points.len() as f64
    }

    pub fn weighted(&self) -> Vec<(HPoint, f64)> {
        self.points.iter().map(|p| (p.clone(), self.weight)).collect()
    }
}

/// Area of the unit sphere `S^{k-1}`.
fn sphere_area(k: usize) -> f64 {
    // 2 π^{k/2} / Γ(k/2), by the recursion A_k = 2π/(k-2) A_{k-2}.
    let mut a = if k % 2 == 0 { 2.0 * std::f64::consts::PI } else { 2.0 };
    let mut j = if k % 2 == 0 { 2 } else { 1 };
    while j < k {
        a *= 2.0 * std::f64::consts::PI / j as f64;
        j += 2;
    }
    a
}

/// `∫_0^r sinh^{k-1}`, by Simpson's rule on a fine grid.
fn radial_mass(k: usize, r: f64) -> f64 {
    let n = 2 * ((r * 2000.0) as usize / 2 + 1);
    let h = r / n as f64;
    let f = |t: f64| t.sinh().powi(k as i32 - 1);
    let mut s = f(0.0) + f(r);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

/// Hyperbolic volume of the ball of radius `r` in `H^k`.
pub fn hyperbolic_ball_volume(k: usize, r: f64) -> f64 {
    sphere_area(k) * radial_mass(k, r)
}

/// Rejection sampler for the Dirichlet domain at `O`: uniform points in
/// `B(O, radius)` kept when no orbit point `γO` is closer than `O`.
///
/// Stops after `count` accepted points. Needs `ball.r_max() ≥ 2 radius` so
/// that every relevant bisector is present.
pub fn dirichlet_sample(ball: &GroupBall, radius: f64, count: usize, rng: &mut impl Rng) -> Result<DomainSample, MapError> {
    if !(radius > 0.0) || ball.r_max() < 2.0 * radius {
        return Err(MapError::InvalidArgument(format!(
            "sampling radius {radius} needs a ball of radius at least {}",
            2.0 * radius
        )));
    }
    let k = ball.dim();
    // Inverse CDF of the radial density sinh^{k-1} on a grid.
    let grid = 4096;
    let cdf: Vec<f64> = (0..=grid).map(|i| radial_mass(k, radius * i as f64 / grid as f64)).collect();
    let total = cdf[grid];
    let sample_radius = |u: f64| -> f64 {
        let target = u * total;
        let j = cdf.partition_point(|&c| c < target).clamp(1, grid);
        let (c0, c1) = (cdf[j - 1], cdf[j]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        radius * ((j - 1) as f64 + t) / grid as f64
    };
    let in_domain = |x: &HPoint| -> bool {
        let xs = x.as_slice();
        let own = xs[0];
        let reach = 2.0 * crate::hypgeom::dist(x, &HPoint::origin(k)) + 1e-9;
        for i in 1..ball.len() {
            if ball.radius(i) > reach {
                break;
            }
            if -mink(xs, ball.orbit_slice(i)) < own {
                return false;
            }
        }
        true
    };
    let mut points = Vec::with_capacity(count);
    let mut candidates = 0;
    const CHUNK: usize = 4096;
    while points.len() < count {
        let batch: Vec<HPoint> = (0..CHUNK)
            .map(|_| {
                let u: Vec<f64> = (0..k).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                let theta = IdealPoint::from_direction(&u).unwrap_or_else(|_| {
                    IdealPoint::from_direction(&[1.0].repeat(k)).expect("nonzero direction")
                });
                ray_point(&theta, sample_radius(rng.random::<f64>()))
            })
            .collect();
        let keep: Vec<bool> = batch.par_iter().map(|x| in_domain(x)).collect();
        for (x, ok) in batch.into_iter().zip(keep) {
            candidates += 1;
            if ok {
                points.push(x);
                if points.len() == count {
                    break;
                }
            }
        }
    }
    let ball_volume = sphere_area(k) * total;
    Ok(DomainSample { points, weight: ball_volume / candidates as f64, candidates, radius, ball_volume })
}

/// `Σ w · J(x)` over weighted sample points, with `J` the signed Jacobian
/// determinant when source and target dimensions agree and the unsigned
/// `k`-Jacobian otherwise.
pub fn volume_estimate<F>(f: F, samples: &[(HPoint, f64)], h: f64) -> Result<f64, MapError>
where
    F: Fn(&HPoint) -> Result<HPoint, MapError> + Sync,
{
    let jac: Vec<Result<f64, MapError>> = samples
        .par_iter()
        .map(|(x, _)| {
            let frame = Frame::standard(x, x.dim());
            let (df, _) = differential(&f, &frame, h)?;
            if df.nrows() == df.ncols() {
                Ok(df.determinant())
            } else {
                jac_p(&df, df.ncols())
            }
        })
        .collect();
    let mut total = 0.0;
    for ((_, w), j) in samples.iter().zip(jac) {
        total += w * j?;
    }
    Ok(total)
}
