use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nonelementary_check, MapError, Representation};
use crate::barycenter::{solve_barycenter, BarycenterError, BarycenterReport, SolverOptions, VisualKernelProfile};
use crate::group_orbit::GroupBall;
use crate::hypgeom::{chordal, dist, dist_raw, HPoint, IdealPoint};
use crate::measure::{normalizer, orbit_weights, AtomicMeasure};

/// The finite target measure `b_x^s` before visual smoothing: atoms
/// `ρ(γ) D(q)` with weights `exp(-s d(x, γO)) σ(q) / c(s)`, ball-major.
pub fn target_measure(ball: &GroupBall, rep: &Representation, x: &HPoint, s: f64) -> Result<AtomicMeasure, MapError> {
    check_inputs(ball, rep, x, s)?;
    let targets = Targets::new(ball, rep)?;
    Ok(targets.measure(ball, x, s, PLAIN))
}

fn check_inputs(ball: &GroupBall, rep: &Representation, x: &HPoint, s: f64) -> Result<(), MapError> {
    if !(s > 0.0) {
        return Err(MapError::InvalidArgument(format!("exponent s = {s} must be positive")));
    }
    if x.dim() != ball.dim() {
        return Err(MapError::InvalidArgument(format!("point in H^{} for a group acting on H^{}", x.dim(), ball.dim())));
    }
    if ball.is_empty() {
        return Err(MapError::InvalidArgument("empty group ball".into()));
    }
    if rep.dim_k() != ball.dim() {
        return Err(MapError::RepresentationIncomplete("representation source dimension differs from the ball".into()));
    }
    Ok(())
}

/// Target points `ρ(γ) D(q)` for every ball element and smearing sample.
#[derive(Clone, Debug)]
struct Targets {
    dim_n: usize,
    coords: Vec<f64>,
    sigma: Vec<f64>,
}

impl Targets {
    fn new(ball: &GroupBall, rep: &Representation) -> Result<Self, MapError> {
        let images = rep.images_over(ball)?;
        let nn = rep.dim_n() + 1;
        let samples = rep.sigma_or_default();
        let sigma: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        let per: Vec<Vec<f64>> = (0..ball.len())
            .into_par_iter()
            .map(|i| {
                let m = &images[i * nn * nn..(i + 1) * nn * nn];
                let mut out = Vec::with_capacity(samples.len() * nn);
                for q in &samples {
                    let d = q.target.as_slice();
                    let v: Vec<f64> = (0..nn).map(|r| (0..nn).map(|c| m[c * nn + r] * d[c]).sum()).collect();
                    out.extend_from_slice(HPoint::from_raw(v).as_slice());
                }
                out
            })
            .collect();
        Ok(Targets { dim_n: rep.dim_n(), coords: per.concat(), sigma })
    }

    fn measure(&self, ball: &GroupBall, x: &HPoint, s: f64, cut: Cut) -> AtomicMeasure {
        let per = self.sigma.len();
        let stride = (self.dim_n + 1) * per;
        match cut {
            Cut::Ball { shell_from, factor } => {
                let mut base = orbit_weights(ball, x, s);
                let first = ball.radii().partition_point(|&q| q <= shell_from);
                for w in &mut base[first..] {
                    *w *= factor;
                }
                let mut raw = Vec::with_capacity(base.len() * per);
                for w in &base {
                    raw.extend(self.sigma.iter().map(|q| w * q));
                }
                let count = raw.len();
                AtomicMeasure::from_parts(self.dim_n, self.coords.clone(), vec![false; count], raw, normalizer(ball, s))
            }
            Cut::Local(r) => {
                // Orbit points farther than |x| + r from O cannot be within r of x.
                let reach = dist_raw(x.as_slice(), HPoint::origin(x.dim()).as_slice()) + r;
                let end = ball.radii().partition_point(|&q| q <= reach);
                let xs = x.as_slice();
                let mut raw = Vec::new();
                let mut coords = Vec::new();
                for i in 0..end {
                    let d = dist_raw(xs, ball.orbit_slice(i));
                    if d <= r {
                        let w = (-s * d).exp();
                        raw.extend(self.sigma.iter().map(|q| w * q));
                        coords.extend_from_slice(&self.coords[i * stride..(i + 1) * stride]);
                    }
                }
                let count = raw.len();
                AtomicMeasure::from_parts(self.dim_n, coords, vec![false; count], raw, normalizer(ball, s))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Cut {
    /// Orbit points of radius above `shell_from` carry weight times `factor`.
    Ball { shell_from: f64, factor: f64 },
    Local(f64),
}

const PLAIN: Cut = Cut::Ball { shell_from: f64::INFINITY, factor: 1.0 };

/// How the infinite orbit sum is cut down to the finite group ball.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    /// Every element of the ball, nothing else.
    #[default]
    Ball,
    /// Orbit points within `radius` of the evaluation point. Points far from
    /// `O` then see a balanced orbit, provided `radius + d(O, x) ≤ R_max`.
    Local { radius: f64 },
    /// Every element of the ball, with the outer shell `R_max - width < r ≤ R_max`
    /// standing in for the missing orbit beyond `R_max`. With orbit growth
    /// `e^{δ̂ r}` the shell weights are scaled by `1 / (1 - e^{-(s - δ̂) width})`.
    ShellTail { width: f64 },
}

/// One evaluation `F_ε(x) = bar(b_x^s)` with `s = (1 + ε) δ̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalMapEval {
    pub x: HPoint,
    /// Absent when the barycenter escaped or is undefined.
    pub value: Option<HPoint>,
    pub report: BarycenterReport,
    pub s: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub target_measure_mass: f64,
}

/// An `ε`-natural map for a fixed ball, representation and kernel profile,
/// with target points precomputed once.
#[derive(Clone, Debug)]
pub struct NaturalMap<'a> {
    ball: &'a GroupBall,
    rep: &'a Representation,
    profile: &'a VisualKernelProfile,
    epsilon: f64,
    delta_hat: f64,
    solver: SolverOptions,
    warm_start: bool,
    truncation: Truncation,
    targets: Targets,
}

impl<'a> NaturalMap<'a> {
    /// Rejects representations whose image looks elementary.
    pub fn new(
        ball: &'a GroupBall,
        rep: &'a Representation,
        profile: &'a VisualKernelProfile,
        epsilon: f64,
        delta_hat: f64,
    ) -> Result<Self, MapError> {
        if !(epsilon > 0.0) || !(delta_hat > 0.0) {
            return Err(MapError::InvalidArgument(format!("need ε > 0 and δ̂ > 0, got {epsilon}, {delta_hat}")));
        }
        check_inputs(ball, rep, &HPoint::origin(ball.dim()), delta_hat)?;
        if profile.dim_n() != rep.dim_n() {
            return Err(MapError::InvalidArgument(format!(
                "kernel profile for H^{} but the representation targets H^{}",
                profile.dim_n(),
                rep.dim_n()
            )));
        }
        let verdict = nonelementary_check(rep);
        if verdict.is_elementary_suspected() {
            return Err(MapError::ElementaryImage(format!("{verdict:?}")));
        }
        let targets = Targets::new(ball, rep)?;
        Ok(NaturalMap {
            ball,
            rep,
            profile,
            epsilon,
            delta_hat,
            solver: SolverOptions::default(),
            warm_start: false,
            truncation: Truncation::Ball,
            targets,
        })
    }

    pub fn with_solver(mut self, opts: SolverOptions) -> Self {
        self.solver = opts;
        self
    }

    /// Starts each solve at `D(O)` moved by the nearest orbit element's image
    /// instead of the Lorentz average of the atoms.
    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Result<Self, MapError> {
        let ok = match truncation {
            Truncation::Ball => true,
            Truncation::Local { radius } => radius > 0.0 && radius <= self.ball.r_max(),
            Truncation::ShellTail { width } => width > 0.0 && width < self.ball.r_max(),
        };
        if !ok {
            return Err(MapError::InvalidArgument(format!("{truncation:?} does not fit a ball of radius {}", self.ball.r_max())));
        }
        self.truncation = truncation;
        Ok(self)
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    fn cut(&self) -> Cut {
        match self.truncation {
            Truncation::Ball => PLAIN,
            Truncation::Local { radius } => Cut::Local(radius),
            Truncation::ShellTail { width } => Cut::Ball {
                shell_from: self.ball.r_max() - width,
                factor: 1.0 / (-((self.s() - self.delta_hat) * width)).exp_m1().abs(),
            },
        }
    }

    pub fn s(&self) -> f64 {
        (1.0 + self.epsilon) * self.delta_hat
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta_hat(&self) -> f64 {
        self.delta_hat
    }

    pub fn ball(&self) -> &GroupBall {
        self.ball
    }

    pub fn representation(&self) -> &Representation {
        self.rep
    }

    pub fn profile(&self) -> &VisualKernelProfile {
        self.profile
    }

    pub fn dim_k(&self) -> usize {
        self.ball.dim()
    }

    pub fn dim_n(&self) -> usize {
        self.rep.dim_n()
    }

    pub fn target_measure(&self, x: &HPoint) -> AtomicMeasure {
        self.targets.measure(self.ball, x, self.s(), self.cut())
    }

    /// Target measure at `O` restricted to orbit points `γO` within chordal
    /// `radius` of `omega` in the ball model, renormalized to mass 1.
    pub fn shadow_measure(&self, omega: &IdealPoint, radius: f64) -> Result<AtomicMeasure, MapError> {
        if omega.dim() != self.dim_k() {
            return Err(MapError::InvalidArgument("boundary point in the wrong dimension".into()));
        }
        let t = &self.targets;
        let per = t.sigma.len();
        let stride = (t.dim_n + 1) * per;
        let s = self.s();
        let mut raw = Vec::new();
        let mut coords = Vec::new();
        for i in 0..self.ball.len() {
            let o = self.ball.orbit_slice(i);
            let b: Vec<f64> = o[1..].iter().map(|v| v / (1.0 + o[0])).collect();
            if chordal(&b, omega.direction()) < radius {
                let w = (-s * self.ball.radius(i)).exp();
                raw.extend(t.sigma.iter().map(|q| w * q));
                coords.extend_from_slice(&t.coords[i * stride..(i + 1) * stride]);
            }
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(MapError::InvalidArgument(format!("no orbit point within chordal {radius} of the boundary point")));
        }
        let count = raw.len();
        Ok(AtomicMeasure::from_parts(t.dim_n, coords, vec![false; count], raw, total))
    }

    /// Solves the barycenter problem at `x`; escapes and degenerate measures are
    /// flagged in the report, solver failures are errors.
    pub fn eval(&self, x: &HPoint) -> Result<NaturalMapEval, MapError> {
        if x.dim() != self.dim_k() {
            return Err(MapError::InvalidArgument(format!("point in H^{} for a map from H^{}", x.dim(), self.dim_k())));
        }
        let beta = self.target_measure(x);
        let mut opts = self.solver.clone();
        if self.warm_start {
            opts.init = Some(self.warm_point(x));
        }
        let report = match solve_barycenter(&beta, self.profile, &opts) {
            Ok(r) => r,
            Err(BarycenterError::DegenerateTwoDeltas) => BarycenterReport::degenerate(),
            Err(e) => return Err(e.into()),
        };
        Ok(NaturalMapEval {
            x: x.clone(),
            value: report.point.clone(),
            report,
            s: self.s(),
            epsilon: self.epsilon,
            r_max: self.ball.r_max(),
            target_measure_mass: beta.mass(),
        })
    }

    fn warm_point(&self, x: &HPoint) -> HPoint {
        let xs = x.as_slice();
        let nearest = (0..self.ball.len())
            .min_by(|&i, &j| {
                dist_raw(xs, self.ball.orbit_slice(i))
                    .total_cmp(&dist_raw(xs, self.ball.orbit_slice(j)))
            })
            .unwrap_or(0);
        self.rep.image_of_word(self.ball.word(nearest)).apply(self.rep.d0())
    }

    /// `F_ε(x)`, failing when the barycenter is not an interior point.
    pub fn point(&self, x: &HPoint) -> Result<HPoint, MapError> {
        let e = self.eval(x)?;
        e.value.ok_or_else(|| {
            MapError::EvaluationFailed(if e.report.escaped {
                format!("barycenter escaped (gradient norm {:.3})", e.report.grad_norm)
            } else {
                "barycenter undefined for two equal boundary atoms".into()
            })
        })
    }

    /// Evaluations at many points, in parallel, in input order.
    pub fn eval_many(&self, xs: &[HPoint]) -> Vec<Result<NaturalMapEval, MapError>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }

    /// `max d(F(γx), ρ(γ) F(x))` over the given ball elements.
    pub fn equivariance_residual(&self, x: &HPoint, gammas: &[usize]) -> Result<f64, MapError> {
        let fx = self.point(x)?;
        let mut worst: f64 = 0.0;
        for &i in gammas {
            let g = self.ball.isometry(i);
            let fgx = self.point(&g.apply(x))?;
            let rho = self.rep.image_of_word(self.ball.word(i));
            worst = worst.max(dist(&fgx, &rho.apply(&fx)));
        }
        Ok(worst)
    }
}

/// Convenience wrapper building a [`NaturalMap`] for a single evaluation.
pub fn natural_map_eval(
    x: &HPoint,
    ball: &GroupBall,
    rep: &Representation,
    epsilon: f64,
    delta_hat: f64,
    profile: &VisualKernelProfile,
) -> Result<NaturalMapEval, MapError> {
    NaturalMap::new(ball, rep, profile, epsilon, delta_hat)?.eval(x)
}

/// Result of evaluating `F_ε(x)` for a decreasing list of `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSweep {
    pub evals: Vec<NaturalMapEval>,
    /// `d(F_{ε_{i+1}}(x), F_{ε_i}(x))`.
    pub increments: Vec<f64>,
    /// `exp(-(s - δ̂) R_max)` for the smallest `ε`.
    pub truncation_factor: f64,
    pub truncation_dominates: bool,
}

pub fn epsilon_sweep(
    x: &HPoint,
    ball: &GroupBall,
    rep: &Representation,
    epsilons: &[f64],
    delta_hat: f64,
    profile: &VisualKernelProfile,
) -> Result<EpsilonSweep, MapError> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(MapError::InvalidArgument("ε list must be positive and strictly decreasing".into()));
    }
    let mut evals = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        evals.push(NaturalMap::new(ball, rep, profile, eps, delta_hat)?.eval(x)?);
    }
    let increments = evals
        .windows(2)
        .map(|w| match (&w[0].value, &w[1].value) {
            (Some(a), Some(b)) => dist(a, b),
            _ => f64::NAN,
        })
        .collect();
    let smallest = *epsilons.last().expect("nonempty");
    let truncation_factor = (-(smallest * delta_hat) * ball.r_max()).exp();
    let truncation_dominates = truncation_factor > 0.1;
    if truncation_dominates {
        log::warn!("ε = {smallest}: exp(-(s - δ̂) R_max) = {truncation_factor:.3} > 0.1, truncation dominates");
    }
    Ok(EpsilonSweep { evals, increments, truncation_factor, truncation_dominates })
}
