use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{classify, IsometryType, MapError, NaturalMap};
use crate::barycenter::{busemann_average_grad, busemann_average_hessian};
use crate::hypgeom::{chordal, dist, exp_map, log_map, ray_point, to_ball, Frame, HPoint};

fn check_step(h: f64) -> Result<(), MapError> {
    if !(1e-5..=1e-2).contains(&h) {
        return Err(MapError::InvalidArgument(format!("finite-difference step {h} outside [1e-5, 1e-2]")));
    }
    Ok(())
}

/// `dF` at the base of `frame` by central differences, as an `n × k` matrix
/// from `frame` to the standard frame at `F(x)`.
///
/// Returns the matrix and `F(x)`.
pub fn differential<F>(f: F, frame: &Frame, h: f64) -> Result<(DMatrix<f64>, HPoint), MapError>
where
    F: Fn(&HPoint) -> Result<HPoint, MapError>,
{
    check_step(h)?;
    let x = frame.base();
    let fx = f(x)?;
    let out = Frame::standard(&fx, fx.dim());
    let mut d = DMatrix::zeros(fx.dim(), frame.len());
    for (j, e) in frame.vectors().iter().enumerate() {
        let plus = f(&exp_map(x, &(e * h)))?;
        let minus = f(&exp_map(x, &(e * -h)))?;
        let v = (log_map(&fx, &plus) - log_map(&fx, &minus)) / (2.0 * h);
        d.set_column(j, &out.coordinates(&v));
    }
    Ok((d, fx))
}

/// Product of the `p` largest singular values: the largest `p`-volume
/// distortion over orthonormal `p`-frames.
pub fn jac_p(df: &DMatrix<f64>, p: usize) -> Result<f64, MapError> {
    if p == 0 || p > df.ncols() {
        return Err(MapError::InvalidArgument(format!("p = {p} outside 1..={}", df.ncols())));
    }
    let mut sv: Vec<f64> = df.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.resize(p.max(sv.len()), 0.0);
    Ok(sv[..p].iter().product())
}

/// Upper bound `(δ (1 + ε) / (p - 1))^p` on `Jac_p F_ε`, meaningful for `p ≥ 3`.
pub fn jacobian_bound(delta: f64, epsilon: f64, p: usize) -> f64 {
    (delta * (1.0 + epsilon) / (p as f64 - 1.0)).powi(p as i32)
}

/// `max_j d(F(exp_x(h e_j)), F(x)) / h` over the frame.
pub fn lipschitz_estimate<F>(f: F, frame: &Frame, h: f64) -> Result<f64, MapError>
where
    F: Fn(&HPoint) -> Result<HPoint, MapError>,
{
    check_step(h)?;
    let fx = f(frame.base())?;
    let mut worst: f64 = 0.0;
    for e in frame.vectors() {
        let y = f(&exp_map(frame.base(), &(e * h)))?;
        worst = worst.max(dist(&y, &fx) / h);
    }
    Ok(worst)
}

/// Residual of the differentiated barycenter equation
/// `Hess Φ_x(F(x)) · dF(u) + ∂_u ∇Φ_x(F(x)) = 0`,
/// where `Φ_x` is the smoothed Busemann average of the target measure at `x`.
///
/// Both terms are computed by central differences with step `h`; the result
/// is the largest residual over the frame, relative to the size of the terms.
pub fn implicit_residual(map: &NaturalMap, frame: &Frame, h: f64) -> Result<f64, MapError> {
    let x = frame.base();
    let (df, y) = differential(|p| map.point(p), frame, h)?;
    let yf = Frame::standard(&y, y.dim());
    let hess = busemann_average_hessian(&map.target_measure(x), &yf, map.profile())?;
    let mut worst: f64 = 0.0;
    for (j, e) in frame.vectors().iter().enumerate() {
        let gp = busemann_average_grad(&map.target_measure(&exp_map(x, &(e * h))), &y, map.profile())?;
        let gm = busemann_average_grad(&map.target_measure(&exp_map(x, &(e * -h))), &y, map.profile())?;
        let mixed = yf.coordinates(&((gp - gm) / (2.0 * h)));
        let moved = &hess * df.column(j);
        let scale = mixed.norm().max(moved.norm()).max(1e-300);
        worst = worst.max((moved + mixed).norm() / scale);
    }
    Ok(worst)
}

/// `F_ε` along a ray toward the fixed point of a parabolic element: ball-model
/// distance from `F_ε(ray(t))` to the fixed point of its image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndsReport {
    pub times: Vec<f64>,
    pub chordal: Vec<f64>,
    /// Distances never increased by more than 1e-3 along the ray.
    pub approaching: bool,
}

pub fn properly_ends_diagnostic(map: &NaturalMap, parabolic: usize, times: &[f64]) -> Result<EndsReport, MapError> {
    let g = map.ball().isometry(parabolic);
    let IsometryType::Parabolic { fixed: source } = classify(&g) else {
        return Err(MapError::InvalidArgument(format!("ball element {parabolic} is not parabolic")));
    };
    let image = map.representation().image_of_word(map.ball().word(parabolic));
    let IsometryType::Parabolic { fixed: target } = classify(&image) else {
        return Err(MapError::InvalidArgument("image of the parabolic element is not parabolic".into()));
    };
    let mut chordals = Vec::with_capacity(times.len());
    for &t in times {
        let fx = map.point(&ray_point(&source, t))?;
        chordals.push(chordal(&to_ball(&fx), target.direction()));
    }
    let approaching = chordals.windows(2).all(|w| w[1] <= w[0] + 1e-3);
    Ok(EndsReport { times: times.to_vec(), chordal: chordals, approaching })
}
