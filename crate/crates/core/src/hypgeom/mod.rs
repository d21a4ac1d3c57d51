//! Hyperboloid-model geometry for `H^d` in every dimension.
//!
//! Points live on the upper sheet `{x : <x,x> = -1, x_0 > 0}` of Minkowski
//! space with signature `(-,+,...,+)`, time coordinate first. Boundary points
//! are future lightlike rays normalized so that `<O, ray> = -1`, i.e. `ray_0 = 1`
//! and the spatial part is a unit vector. Tangent vectors are ambient vectors
//! Lorentz-orthogonal to their base point.
//!
//! Ball and half-space coordinates only appear at I/O boundaries; see
//! [`to_ball`], [`to_half_space`] and friends.

mod frame;
mod isometry;
mod point;
mod sl2;

pub use frame::Frame;
pub use isometry::Isometry;
pub use point::{HPoint, IdealPoint, Location};
pub use sl2::{embed_ideal, embed_isometry, embed_point, lift_sl2, Sl2Matrix};

use nalgebra::DVector;
use thiserror::Error;

/// Ambient representation of a tangent vector.
pub type Tangent = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("matrix determinant {det} is not 1 (|det - 1| >= 1e-9)")]
    NonUnitDeterminant { det: f64 },
    #[error("not a point of the hyperboloid: {0}")]
    InvalidPoint(String),
    #[error("not a Lorentz isometry: {0}")]
    InvalidIsometry(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Minkowski product `-a_0 b_0 + sum a_i b_i`.
#[inline]
pub fn mink(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Hyperbolic distance.
///
/// Uses `2 asinh(|x - y|_L / 2)` for nearby points, where the arccosh form
/// loses half its digits, and the clamped arccosh otherwise.
pub fn dist(x: &HPoint, y: &HPoint) -> f64 {
    dist_raw(x.as_slice(), y.as_slice())
}

#[inline]
pub(crate) fn dist_raw(x: &[f64], y: &[f64]) -> f64 {
    let c = -mink(x, y);
    if c < 2.0 {
        let mut q = -(x[0] - y[0]) * (x[0] - y[0]);
        for i in 1..x.len() {
            q += (x[i] - y[i]) * (x[i] - y[i]);
        }
        2.0 * (q.max(0.0).sqrt() / 2.0).asinh()
    } else {
        c.max(1.0).acosh()
    }
}

/// Busemann function normalized at the basepoint: `B(x, θ) = log(-<x, θ>)`.
pub fn busemann(x: &HPoint, theta: &IdealPoint) -> f64 {
    (-mink(x.as_slice(), theta.as_slice())).ln()
}

/// Riemannian gradient of `B(·, θ)` at `x`: `P_x(θ) / <x, θ>`.
///
/// Always a unit tangent vector pointing away from `θ`.
pub fn busemann_grad(x: &HPoint, theta: &IdealPoint) -> Tangent {
    let xs = x.as_slice();
    let ts = theta.as_slice();
    let a = mink(xs, ts);
    let mut v = DVector::from_fn(xs.len(), |i, _| (ts[i] + a * xs[i]) / a);
    project_tangent(x, &mut v);
    v
}

/// Lorentz norm of a (spacelike) tangent vector.
pub fn tangent_norm(v: &Tangent) -> f64 {
    mink(v.as_slice(), v.as_slice()).max(0.0).sqrt()
}

/// Removes the component of `v` along `x`, i.e. applies `v + <x,v> x`.
pub fn project_tangent(x: &HPoint, v: &mut Tangent) {
    let xs = x.as_slice();
    let c = mink(xs, v.as_slice());
    for (vi, xi) in v.iter_mut().zip(xs) {
        *vi += c * xi;
    }
}

/// Riemannian exponential map.
pub fn exp_map(x: &HPoint, v: &Tangent) -> HPoint {
    let n = tangent_norm(v);
    if n == 0.0 {
        return x.clone();
    }
    let (ch, sh_over_n) = (n.cosh(), n.sinh() / n);
    let xs = x.as_slice();
    let y: Vec<f64> = xs.iter().zip(v.iter()).map(|(a, b)| ch * a + sh_over_n * b).collect();
    HPoint::from_raw(y)
}

/// Riemannian logarithm; `log_map(x, x)` is the zero vector.
pub fn log_map(x: &HPoint, y: &HPoint) -> Tangent {
    let xs = x.as_slice();
    let ys = y.as_slice();
    let d = dist_raw(xs, ys);
    if d < 1e-300 {
        return DVector::zeros(xs.len());
    }
    // c - 1 = |x - y|_L^2 / 2, accurate for close points.
    let mut q = -(xs[0] - ys[0]) * (xs[0] - ys[0]);
    for i in 1..xs.len() {
        q += (xs[i] - ys[i]) * (xs[i] - ys[i]);
    }
    let cm1 = 0.5 * q.max(0.0);
    let mut u = DVector::from_fn(xs.len(), |i, _| (ys[i] - xs[i]) - cm1 * xs[i]);
    project_tangent(x, &mut u);
    let un = tangent_norm(&u);
    if un == 0.0 {
        return DVector::zeros(xs.len());
    }
    u * (d / un)
}

/// Unit-speed geodesic ray from the basepoint toward `θ`, evaluated at time `t`.
pub fn ray_point(theta: &IdealPoint, t: f64) -> HPoint {
    let ts = theta.as_slice();
    let mut v = vec![t.cosh()];
    v.extend(ts[1..].iter().map(|u| t.sinh() * u));
    HPoint::from_raw(v)
}

/// Poincaré-ball coordinates of an interior point: `x_s / (1 + x_0)`.
pub fn to_ball(x: &HPoint) -> Vec<f64> {
    let xs = x.as_slice();
    xs[1..].iter().map(|v| v / (1.0 + xs[0])).collect()
}

/// Ball coordinates of any location of the closed ball.
pub fn location_to_ball(loc: &Location) -> Vec<f64> {
    match loc {
        Location::Interior(p) => to_ball(p),
        Location::Ideal(t) => t.direction().to_vec(),
    }
}

/// Inverse of [`to_ball`]; `v` must lie in the open unit ball.
pub fn from_ball(v: &[f64]) -> Result<HPoint, GeomError> {
    let r2: f64 = v.iter().map(|a| a * a).sum();
    if !(r2 < 1.0) {
        return Err(GeomError::InvalidPoint(format!("ball coordinates with |v|^2 = {r2}")));
    }
    let den = 1.0 - r2;
    let mut c = vec![(1.0 + r2) / den];
    c.extend(v.iter().map(|a| 2.0 * a / den));
    Ok(HPoint::from_raw(c))
}

/// Upper half-space coordinates `(x', x_k)` with the basepoint at `(0, ..., 0, 1)`.
///
/// The last spatial coordinate is the vertical direction, which matches the
/// 2x2 matrix action `z -> (az + b)/(cz + d)` of [`lift_sl2`].
pub fn to_half_space(x: &HPoint) -> Vec<f64> {
    let xs = x.as_slice();
    let k = xs.len() - 1;
    let den = xs[0] - xs[k];
    let mut h: Vec<f64> = xs[1..k].iter().map(|v| v / den).collect();
    h.push(1.0 / den);
    h
}

/// Inverse of [`to_half_space`]; the last coordinate must be positive.
pub fn from_half_space(h: &[f64]) -> Result<HPoint, GeomError> {
    let k = h.len();
    let t = h[k - 1];
    if !(t > 0.0) {
        return Err(GeomError::InvalidPoint(format!("half-space height {t} <= 0")));
    }
    let z2: f64 = h[..k - 1].iter().map(|a| a * a).sum();
    // Hermitian-form correspondence: x0 - xk = 1/t, x0 + xk = (|z|^2 + t^2)/t.
    let plus = (z2 + t * t) / t;
    let minus = 1.0 / t;
    let mut c = vec![0.5 * (plus + minus)];
    c.extend(h[..k - 1].iter().map(|z| z / t));
    c.push(0.5 * (plus - minus));
    Ok(HPoint::from_raw(c))
}

/// Boundary coordinate `ξ ∈ R^{k-1}` of an ideal point in the half-space model,
/// or `None` for the point at infinity.
pub fn ideal_to_half_space(theta: &IdealPoint) -> Option<Vec<f64>> {
    let ts = theta.as_slice();
    let k = ts.len() - 1;
    let den = ts[0] - ts[k];
    if den.abs() < 1e-14 {
        return None;
    }
    Some(ts[1..k].iter().map(|v| v / den).collect())
}

/// Ideal point with half-space boundary coordinate `ξ`.
pub fn ideal_from_half_space(xi: &[f64]) -> IdealPoint {
    let z2: f64 = xi.iter().map(|a| a * a).sum();
    // Limit of from_half_space((ξ, t)) rescaled by t as t -> 0.
    let mut ray = vec![0.5 * (z2 + 1.0)];
    ray.extend(xi.iter().copied());
    ray.push(0.5 * (z2 - 1.0));
    IdealPoint::from_ray_unchecked(ray)
}

/// Euclidean distance between ball-model coordinates.
pub fn chordal(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Chordal distance between two boundary points.
pub fn chordal_ideal(a: &IdealPoint, b: &IdealPoint) -> f64 {
    chordal(a.direction(), b.direction())
}

/// Radial projection of an interior point to the boundary, as seen from the basepoint.
pub fn radial_projection(x: &HPoint) -> Option<IdealPoint> {
    IdealPoint::from_direction(&x.as_slice()[1..]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_point(rng: &mut impl Rng, d: usize, scale: f64) -> HPoint {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-9);
        let t = rng.random_range(0.0..scale);
        let u: Vec<f64> = v.iter().map(|a| a / n).collect();
        ray_point(&IdealPoint::from_direction(&u).unwrap(), t)
    }

    fn random_ideal(rng: &mut impl Rng, d: usize) -> IdealPoint {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Ok(t) = IdealPoint::from_direction(&v) {
                return t;
            }
        }
    }

    #[test]
    fn dist_basic() {
        let o = HPoint::origin(3);
        assert_eq!(dist(&o, &o), 0.0);
        let p = HPoint::from_coords(vec![1f64.cosh(), 1f64.sinh(), 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(dist(&o, &p), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dist_along_boost_matches_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = random_point(&mut rng, 2, 3.0);
            let t = rng.random_range(0.01..5.0);
            // Boost of parameter t along an axis through x: conjugate the standard boost.
            let to_x = Isometry::translation_to(&x);
            let g = to_x.compose(&Isometry::boost(2, 1, t)).compose(&to_x.inverse());
            let gx = g.apply(&x);
            assert_abs_diff_eq!(dist(&x, &gx), t, epsilon = 1e-7);
        }
    }

    #[test]
    fn triangle_inequality_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a = random_point(&mut rng, 3, 4.0);
            let b = random_point(&mut rng, 3, 4.0);
            let c = random_point(&mut rng, 3, 4.0);
            assert_abs_diff_eq!(dist(&a, &b), dist(&b, &a), epsilon = 1e-12);
            assert!(dist(&a, &c) <= dist(&a, &b) + dist(&b, &c) + 1e-9);
        }
    }

    #[test]
    fn busemann_zero_at_origin_and_along_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = HPoint::origin(3);
        for _ in 0..100 {
            let th = random_ideal(&mut rng, 3);
            assert_eq!(busemann(&o, &th), 0.0);
            let t = rng.random_range(0.0..8.0);
            let x = ray_point(&th, t);
            // Oracle: d(γ(t), γ(T)) - T at T = 30.
            let far = ray_point(&th, 30.0);
            let oracle = dist(&x, &far) - 30.0;
            assert_abs_diff_eq!(busemann(&x, &th), -t, epsilon = 1e-8);
            assert_abs_diff_eq!(busemann(&x, &th), oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn busemann_grad_unit_tangent_and_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = random_point(&mut rng, 3, 5.0);
            let th = random_ideal(&mut rng, 3);
            let g = busemann_grad(&x, &th);
            assert!((tangent_norm(&g) - 1.0).abs() <= 1e-10);
            assert!(mink(x.as_slice(), g.as_slice()).abs() <= 1e-10 * x.time());
        }
        let th = random_ideal(&mut rng, 2);
        let x = ray_point(&th, 2.0);
        let dir = log_map(&x, &ray_point(&th, 3.0));
        let g = busemann_grad(&x, &th);
        assert_abs_diff_eq!(mink(g.as_slice(), dir.as_slice()), -1.0, epsilon = 1e-8);
    }

    #[test]
    fn busemann_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..200 {
            let x = random_point(&mut rng, 3, 3.0);
            let th = random_ideal(&mut rng, 3);
            let v = Frame::random(&x, 1, &mut rng).vectors()[0].clone();
            let fd = (busemann(&exp_map(&x, &(&v * h)), &th) - busemann(&x, &th)) / h;
            let g = busemann_grad(&x, &th);
            assert!((mink(g.as_slice(), v.as_slice()) - fd).abs() <= 1e-5);
        }
    }

    #[test]
    fn half_space_kernel_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let x = random_point(&mut rng, 3, 3.0);
            let th = random_ideal(&mut rng, 3);
            let delta = 1.7;
            let h = to_half_space(&x);
            let xi = ideal_to_half_space(&th).unwrap();
            let (xp, xk) = (&h[..2], h[2]);
            let d2: f64 = xi.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum();
            let n2: f64 = xi.iter().map(|a| a * a).sum();
            let rhs = (xk * (1.0 + n2) / (d2 + xk * xk)).powf(delta);
            let lhs = (-delta * busemann(&x, &th)).exp();
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1.0));
        }
    }

    #[test]
    fn half_space_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random_point(&mut rng, 3, 3.0);
            let y = from_half_space(&to_half_space(&x)).unwrap();
            assert!(dist(&x, &y) < 1e-9);
            let th = random_ideal(&mut rng, 2);
            let back = ideal_from_half_space(&ideal_to_half_space(&th).unwrap());
            assert!(chordal_ideal(&th, &back) < 1e-9);
        }
        let o = from_half_space(&[0.0, 0.0, 1.0]).unwrap();
        assert!(dist(&o, &HPoint::origin(3)) < 1e-15);
    }

    #[test]
    fn exp_log_examples_and_round_trip() {
        let o = HPoint::origin(2);
        assert_eq!(exp_map(&o, &DVector::zeros(3)), o);
        let t = 1.3;
        let y = exp_map(&o, &DVector::from_vec(vec![0.0, t, 0.0]));
        assert_abs_diff_eq!(y.as_slice()[0], t.cosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(y.as_slice()[1], t.sinh(), epsilon = 1e-12);
        assert_eq!(log_map(&y, &y).norm(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = random_point(&mut rng, 3, 4.0);
            let y = random_point(&mut rng, 3, 4.0);
            let v = log_map(&x, &y);
            assert!((dist(&x, &exp_map(&x, &v)) - tangent_norm(&v)).abs() < 1e-10 * (1.0 + tangent_norm(&v)));
            worst = worst.max(dist(&exp_map(&x, &v), &y));
        }
        assert!(worst < 1e-8, "worst round trip {worst}");
    }

    #[test]
    fn ball_projection() {
        let o = HPoint::origin(3);
        assert_eq!(to_ball(&o), vec![0.0; 3]);
        let t: f64 = 2.2;
        let x = HPoint::from_coords(vec![t.cosh(), t.sinh(), 0.0]).unwrap();
        assert_abs_diff_eq!(to_ball(&x)[0], (t / 2.0).tanh(), epsilon = 1e-14);
        let th = IdealPoint::from_direction(&[3.0, 4.0]).unwrap();
        let b = location_to_ball(&Location::Ideal(th.clone()));
        assert_abs_diff_eq!(b[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(chordal(&b, &b), 0.0);
        let back = from_ball(&to_ball(&x)).unwrap();
        assert!(dist(&back, &x) < 1e-12);
    }
}
