use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BarycenterError, VisualKernelProfile};
use crate::hypgeom::{dist, exp_map, mink, radial_projection, Frame, HPoint, IdealPoint, Tangent};
use crate::measure::AtomicMeasure;

/// Search direction used by [`solve_barycenter`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Riemannian Newton steps, falling back to the gradient when the
    /// Hessian is not positive definite.
    Newton,
    GradientDescent,
}

/// Radius beyond which hyperboloid coordinates lose the Busemann values of
/// nearby boundary points to cancellation (`e^{2r}` times machine epsilon).
pub const PRECISION_RADIUS: f64 = 15.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates beyond this distance from the basepoint with a large gradient
    /// count as escaping; values above [`PRECISION_RADIUS`] are clamped to it.
    pub escape_radius: f64,
    /// Gradient norm above which a far iterate counts as escaping.
    pub escape_grad: f64,
    /// Longest hyperbolic step taken in one iteration.
    pub max_step: f64,
    pub method: Method,
    /// Starting point; the Lorentz-weighted average of the atoms when absent.
    pub init: Option<HPoint>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 500,
            escape_radius: PRECISION_RADIUS,
            escape_grad: 0.1,
            max_step: 5.0,
            method: Method::Newton,
            init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarycenterReport {
    /// The minimizer; absent when the iterates escaped to the boundary.
    pub point: Option<HPoint>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub escaped: bool,
    pub escape_direction: Option<IdealPoint>,
    pub degenerate: bool,
    /// Objective at the final iterate (up to a constant per interior atom).
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Directional derivative along a geodesic through the minimizer was
    /// found nondecreasing.
    pub convexity_ok: bool,
}

impl BarycenterReport {
    /// Report for a measure without a barycenter (two equal boundary atoms).
    pub fn degenerate() -> Self {
        BarycenterReport {
            point: None,
            grad_norm: f64::NAN,
            iterations: 0,
            escaped: false,
            escape_direction: None,
            degenerate: true,
            objective: f64::NAN,
            objective_trace: Vec::new(),
            convexity_ok: false,
        }
    }
}

struct Eval {
    value: f64,
    /// Ambient gradient.
    grad: Tangent,
    /// Hessian in the frame, when requested.
    hess: Option<DMatrix<f64>>,
}

fn check(beta: &AtomicMeasure, y: &HPoint, profile: &VisualKernelProfile) -> Result<(), BarycenterError> {
    if beta.dim() != y.dim() {
        return Err(BarycenterError::DimensionMismatch { expected: beta.dim(), got: y.dim() });
    }
    if profile.dim_n() != beta.dim() {
        return Err(BarycenterError::DimensionMismatch { expected: beta.dim(), got: profile.dim_n() });
    }
    if !(beta.mass() > 0.0) {
        return Err(BarycenterError::ZeroMass);
    }
    Ok(())
}

/// Objective, gradient and optionally the frame Hessian of
/// `y ↦ Σ_ideal w B(y, θ) + Σ_interior w G(d(y, p))`.
fn evaluate(beta: &AtomicMeasure, y: &HPoint, profile: &VisualKernelProfile, frame: Option<&Frame>) -> Eval {
    let ys = y.as_slice();
    let len = ys.len();
    let k = frame.map_or(0, |f| f.len());
    let mut value = 0.0;
    let mut grad = vec![0.0; len];
    let mut hess = frame.map(|_| DMatrix::<f64>::zeros(k, k));
    let mut u = vec![0.0; len];
    let mut a = vec![0.0; k];
    let dm0 = profile.eval(0.0).dm;
    for i in 0..beta.len() {
        let w = beta.weight(i);
        if w == 0.0 {
            continue;
        }
        let p = beta.location_slice(i);
        // Unit gradient direction `u`, its magnitude, and the transverse Hessian factor.
        let (scale, along, across);
        if beta.is_ideal(i) {
            let c = mink(ys, p);
            value += w * (-c).ln();
            for j in 0..len {
                u[j] = (p[j] + c * ys[j]) / c;
            }
            (scale, along, across) = (1.0, 0.0, 1.0);
        } else {
            let c = -mink(ys, p);
            let d = crate::hypgeom::dist_raw(ys, p);
            if d < 1e-12 {
                if let (Some(h), Some(_)) = (hess.as_mut(), frame) {
                    for j in 0..k {
                        h[(j, j)] += w * dm0;
                    }
                }
                continue;
            }
            let kv = profile.eval(d);
            value += w * kv.g;
            let sh = d.sinh();
            for j in 0..len {
                u[j] = (c * ys[j] - p[j]) / sh;
            }
            (scale, along, across) = (kv.m, kv.dm, kv.m * c / sh);
        }
        for j in 0..len {
            grad[j] += w * scale * u[j];
        }
        if let (Some(h), Some(f)) = (hess.as_mut(), frame) {
            for (aj, e) in a.iter_mut().zip(f.vectors()) {
                *aj = mink(&u, e.as_slice());
            }
            for r in 0..k {
                h[(r, r)] += w * across;
                for c in 0..k {
                    h[(r, c)] += w * (along - across) * a[r] * a[c];
                }
            }
        }
    }
    let mut grad = DVector::from_vec(grad);
    crate::hypgeom::project_tangent(y, &mut grad);
    Eval { value, grad, hess }
}

/// `Σ_ideal w B(y, θ) + Σ_interior w G(d(y, p))`, the Busemann average of the
/// measure with each interior atom smeared by its visual measure, up to an
/// additive constant that does not depend on `y`.
pub fn busemann_average(beta: &AtomicMeasure, y: &HPoint, profile: &VisualKernelProfile) -> Result<f64, BarycenterError> {
    check(beta, y, profile)?;
    Ok(evaluate(beta, y, profile, None).value)
}

/// Riemannian gradient of [`busemann_average`] at `y`.
pub fn busemann_average_grad(
    beta: &AtomicMeasure,
    y: &HPoint,
    profile: &VisualKernelProfile,
) -> Result<Tangent, BarycenterError> {
    check(beta, y, profile)?;
    Ok(evaluate(beta, y, profile, None).grad)
}

/// Riemannian Hessian of [`busemann_average`] in the given frame.
pub fn busemann_average_hessian(
    beta: &AtomicMeasure,
    frame: &Frame,
    profile: &VisualKernelProfile,
) -> Result<DMatrix<f64>, BarycenterError> {
    check(beta, frame.base(), profile)?;
    Ok(evaluate(beta, frame.base(), profile, Some(frame)).hess.expect("frame given"))
}

/// `true` when the measure is two boundary atoms of equal weight.
pub fn is_two_equal_deltas(beta: &AtomicMeasure) -> bool {
    let live: Vec<usize> = (0..beta.len()).filter(|&i| beta.weight(i) > 0.0).collect();
    live.len() == 2
        && live.iter().all(|&i| beta.is_ideal(i))
        && (beta.weight(live[0]) - beta.weight(live[1])).abs() <= 1e-12 * beta.mass()
}

/// Lorentz-weighted average of the atoms (rays for ideal atoms), pushed to
/// the hyperboloid; the basepoint if the average is not timelike.
pub fn initial_point(beta: &AtomicMeasure) -> HPoint {
    let n = beta.dim() + 1;
    let mut v = vec![0.0; n];
    for i in 0..beta.len() {
        let w = beta.weight(i);
        for (a, b) in v.iter_mut().zip(beta.location_slice(i)) {
            *a += w * b;
        }
    }
    let q = -mink(&v, &v);
    if q > 0.0 && v[0] > 0.0 && q.is_finite() {
        let s = q.sqrt();
        HPoint::from_coords(v.iter().map(|a| a / s).collect()).unwrap_or_else(|_| HPoint::origin(beta.dim()))
    } else {
        HPoint::origin(beta.dim())
    }
}

/// Minimizes the Busemann average with a line-searched Newton (or gradient) method.
pub fn solve_barycenter(
    beta: &AtomicMeasure,
    profile: &VisualKernelProfile,
    opts: &SolverOptions,
) -> Result<BarycenterReport, BarycenterError> {
    let o = HPoint::origin(beta.dim());
    check(beta, &o, profile)?;
    if is_two_equal_deltas(beta) {
        return Err(BarycenterError::DegenerateTwoDeltas);
    }
    let mut y = opts.init.clone().unwrap_or_else(|| initial_point(beta));
    if y.dim() != beta.dim() {
        return Err(BarycenterError::DimensionMismatch { expected: beta.dim(), got: y.dim() });
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev_gn = f64::INFINITY;
    loop {
        let frame = Frame::standard(&y, y.dim());
        let want_hess = opts.method == Method::Newton;
        let ev = evaluate(beta, &y, profile, want_hess.then_some(&frame));
        let g = frame.coordinates(&ev.grad);
        let gn = g.norm();
        trace.push(ev.value);
        let newton = match (&ev.hess, gn <= opts.tol.max(gradient_floor(&y))) {
            (Some(h), false) => h.clone().cholesky().map(|c| -c.solve(&g)),
            _ => None,
        };
        // Rounding in the gradient can stall Newton a hair away from the
        // minimizer: the step is negligible and the gradient stops shrinking.
        let stalled = newton.as_ref().is_some_and(|p| p.norm() <= STALL_STEP * y.as_slice()[0] && gn > 0.5 * prev_gn);
        prev_gn = gn;
        if gn <= opts.tol.max(gradient_floor(&y)) || stalled {
            let convexity_ok = convexity_spot_check(beta, &y, profile, &frame);
            return Ok(BarycenterReport {
                point: Some(y),
                grad_norm: gn,
                iterations,
                escaped: false,
                escape_direction: None,
                degenerate: false,
                objective: ev.value,
                objective_trace: trace,
                convexity_ok,
            });
        }
        if gn > opts.escape_grad && dist(&o, &y) > opts.escape_radius.min(PRECISION_RADIUS) {
            return Ok(BarycenterReport {
                escape_direction: radial_projection(&y),
                point: None,
                grad_norm: gn,
                iterations,
                escaped: true,
                degenerate: false,
                objective: ev.value,
                objective_trace: trace,
                convexity_ok: false,
            });
        }
        if iterations >= opts.max_iter {
            return Err(BarycenterError::MaxIterExceeded { iterations, grad_norm: gn });
        }
        let mut dirs = Vec::with_capacity(2);
        if let Some(p) = newton.filter(|p| p.dot(&g) < 0.0 && p.iter().all(|v| v.is_finite())) {
            dirs.push(p);
        }
        dirs.push(-g.clone());
        let mut next = None;
        for mut p in dirs {
            let len = p.norm();
            if len > opts.max_step {
                p *= opts.max_step / len;
            }
            if let Some(z) = line_search(beta, profile, &y, &frame, ev.value, &g, &p) {
                next = Some(z);
                break;
            }
        }
        let Some(z) = next else {
            return Err(BarycenterError::Stalled { iterations, grad_norm: gn });
        };
        y = z;
        iterations += 1;
    }
}

/// Newton steps shorter than this times `cosh d(O, y)` count as converged
/// once the gradient stalls.
const STALL_STEP: f64 = 1e-6;

/// Rounding floor of the gradient at `y`: the Busemann and distance
/// gradients cancel terms of size `cosh² d(O, y)`.
pub fn gradient_floor(y: &HPoint) -> f64 {
    let c = y.as_slice()[0];
    16.0 * f64::EPSILON * c * c
}

/// Armijo backtracking from step 1 with factor 1/2 and slope constant 1e-4.
///
/// Near the optimum the predicted decrease falls below the rounding error of
/// the objective. There the sufficient-decrease test is replaced by its
/// derivative form `φ'(t) <= (2c - 1) φ'(0)`, which is equivalent for a
/// quadratic and does not suffer from cancellation.
fn line_search(
    beta: &AtomicMeasure,
    profile: &VisualKernelProfile,
    y: &HPoint,
    frame: &Frame,
    f0: f64,
    g: &DVector<f64>,
    p: &DVector<f64>,
) -> Option<HPoint> {
    const C: f64 = 1e-4;
    let slope = g.dot(p);
    let dir = frame.combine(p.as_slice());
    let len = p.norm();
    let noise = 1e3 * f64::EPSILON * f0.abs().max(1.0);
    let mut t = 1.0;
    while t > 1e-12 {
        let z = exp_map(y, &(&dir * t));
        let ev = evaluate(beta, &z, profile, None);
        if !ev.value.is_finite() {
            t *= 0.5;
            continue;
        }
        if -C * t * slope > noise {
            if ev.value <= f0 + C * t * slope {
                return Some(z);
            }
        } else if ev.value <= f0 + noise {
            // Velocity of s ↦ exp_y(s dir) at s = t.
            let (ch, sh) = ((t * len).cosh(), (t * len).sinh());
            let vel: Vec<f64> = y.as_slice().iter().zip(dir.iter()).map(|(a, b)| len * sh * a + ch * b).collect();
            if mink(ev.grad.as_slice(), &vel) <= (2.0 * C - 1.0) * slope {
                return Some(z);
            }
        }
        t *= 0.5;
    }
    None
}

/// Directional derivatives along a fixed geodesic through `y` must not decrease.
fn convexity_spot_check(beta: &AtomicMeasure, y: &HPoint, profile: &VisualKernelProfile, frame: &Frame) -> bool {
    let coeffs: Vec<f64> = (0..frame.len()).map(|i| 0.5f64.powi(i as i32)).collect();
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let v = frame.combine(&coeffs.iter().map(|c| c / norm).collect::<Vec<_>>());
    let slopes: Vec<f64> = [-0.2, -0.1, 0.0, 0.1, 0.2]
        .iter()
        .map(|&t: &f64| {
            let ys = y.as_slice();
            let point: Vec<f64> = ys.iter().zip(v.iter()).map(|(a, b)| t.cosh() * a + t.sinh() * b).collect();
            let vel: Vec<f64> = ys.iter().zip(v.iter()).map(|(a, b)| t.sinh() * a + t.cosh() * b).collect();
            let z = HPoint::from_raw(point);
            mink(evaluate(beta, &z, profile, None).grad.as_slice(), &vel)
        })
        .collect();
    slopes.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}
