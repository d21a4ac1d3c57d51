//! Boundary maps: limits of natural maps along rays, cone convergence of
//! orbit-measure averages, and convergence over families of representations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barycenter::{solve_barycenter, BarycenterError};
use crate::group_orbit::GroupBall;
use crate::hypgeom::{chordal, chordal_ideal, radial_projection, ray_point, to_ball, IdealPoint};
use crate::measure::{ps_measure, MeasureError};
use crate::natural_map::{ElementaryVerdict, MapError, NaturalMap, Representation};

pub use crate::natural_map::nonelementary_check;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("invalid ray schedule: {0}")]
    InvalidSchedule(String),
    #[error("ray toward {:?} did not settle; last increment {last_increment:.3e}", .eval.omega.direction())]
    NotConverged { eval: Box<CTEval>, last_increment: f64 },
    #[error("representation {index} of the family looks elementary: {verdict:?}")]
    ElementaryImageSuspected { index: usize, verdict: ElementaryVerdict },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Barycenter(#[from] BarycenterError),
}

/// Times along the ray from `O` toward `omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySchedule {
    pub omega: IdealPoint,
    pub times: Vec<f64>,
    /// Chordal tolerance on consecutive image increments.
    pub stop_tol: f64,
}

/// Consecutive sub-tolerance increments needed to declare convergence.
pub const SETTLE_COUNT: usize = 3;

impl RaySchedule {
    /// Times `1, 2, …, 12` and tolerance `1e-3`.
    pub fn new(omega: IdealPoint) -> Self {
        RaySchedule { omega, times: (1..=12).map(f64::from).collect(), stop_tol: 1e-3 }
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self, BoundaryError> {
        if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BoundaryError::InvalidSchedule("times must be positive and increasing".into()));
        }
        self.times = times;
        Ok(self)
    }

    pub fn with_stop_tol(mut self, tol: f64) -> Result<Self, BoundaryError> {
        if !(tol > 0.0) {
            return Err(BoundaryError::InvalidSchedule(format!("stop tolerance {tol} must be positive")));
        }
        self.stop_tol = tol;
        Ok(self)
    }

    pub fn with_omega(&self, omega: IdealPoint) -> Self {
        RaySchedule { omega, ..self.clone() }
    }
}

/// One probe of the ray: `F_ε(γ_ω(t))` in ball coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayStep {
    pub t: f64,
    pub image: Vec<f64>,
    /// Chordal distance to the previous probe; absent for the first.
    pub increment: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CTEval {
    pub omega: IdealPoint,
    pub image: Option<IdealPoint>,
    pub trace: Vec<RayStep>,
    pub converged: bool,
}

impl CTEval {
    /// CSV rows `t, image coordinates…, increment`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.trace.first().map_or(0, |s| s.image.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("b{i}")));
        header.push("increment".into());
        out.write_record(&header)?;
        for s in &self.trace {
            let mut row = vec![format!("{:?}", s.t)];
            row.extend(s.image.iter().map(|v| format!("{v:?}")));
            row.push(s.increment.map_or(String::new(), |v| format!("{v:?}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `F̄_ε(ω)` as the limit of `F_ε` along the ray toward `ω`.
///
/// Probing stops once the last [`SETTLE_COUNT`] increments are all below
/// `stop_tol`; the image is then the radial projection of the last value.
/// Otherwise the whole trace comes back inside [`BoundaryError::NotConverged`].
pub fn ct_eval(schedule: &RaySchedule, map: &NaturalMap) -> Result<CTEval, BoundaryError> {
    if schedule.omega.dim() != map.dim_k() {
        return Err(BoundaryError::InvalidArgument(format!(
            "boundary point of H^{} for a map from H^{}",
            schedule.omega.dim(),
            map.dim_k()
        )));
    }
    let mut trace: Vec<RayStep> = Vec::with_capacity(schedule.times.len());
    let mut last = None;
    let mut settled = 0;
    for &t in &schedule.times {
        let y = map.point(&ray_point(&schedule.omega, t))?;
        let image = to_ball(&y);
        let increment = trace.last().map(|p| chordal(&p.image, &image));
        settled = match increment {
            Some(d) if d < schedule.stop_tol => settled + 1,
            _ => 0,
        };
        trace.push(RayStep { t, image, increment });
        last = Some(y);
        if settled >= SETTLE_COUNT {
            break;
        }
    }
    let converged = settled >= SETTLE_COUNT;
    let image = if converged { last.as_ref().and_then(radial_projection) } else { None };
    let eval = CTEval { omega: schedule.omega.clone(), image, trace, converged };
    if !eval.converged {
        let last_increment = eval.trace.last().and_then(|s| s.increment).unwrap_or(f64::NAN);
        return Err(BoundaryError::NotConverged { eval: Box::new(eval), last_increment });
    }
    Ok(eval)
}

/// `ct_eval` at many boundary points, in parallel, in input order.
pub fn ct_eval_many(schedule: &RaySchedule, omegas: &[IdealPoint], map: &NaturalMap) -> Vec<Result<CTEval, BoundaryError>> {
    omegas.par_iter().map(|w| ct_eval(&schedule.with_omega(w.clone()), map)).collect()
}

/// Cross-check of `F̄_ε(ω)` from the shadow of `ω`: the target measure at
/// `O` restricted to orbit points within chordal `radius` of `ω`,
/// renormalized, then its barycenter (or escape direction) projected to the
/// boundary.
pub fn shadow_ct_eval(omega: &IdealPoint, map: &NaturalMap, radius: f64) -> Result<IdealPoint, BoundaryError> {
    if !(radius > 0.0) {
        return Err(BoundaryError::InvalidArgument(format!("shadow radius {radius} must be positive")));
    }
    let beta = map.shadow_measure(omega, radius)?;
    let report = solve_barycenter(&beta, map.profile(), &crate::barycenter::SolverOptions::default())?;
    let direction = match (&report.point, &report.escape_direction) {
        (Some(p), _) => radial_projection(p),
        (None, Some(d)) => Some(d.clone()),
        _ => None,
    };
    direction.ok_or_else(|| BoundaryError::InvalidArgument("shadow barycenter has no direction".into()))
}

/// How orbit-measure averages are compared with `f(ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeAverage {
    /// `∫ f dμ_x` as is; for `f ≡ 1` this is the mass `c_x(s) / c_O(s)`.
    Raw,
    /// `∫ f dμ_x / μ_x(1)`.
    Normalized,
}

/// `|∫ f dμ_{γ_ω(t)} − f(ω)|` for each time of the schedule.
pub fn ps_average_cone_test<F>(
    f: F,
    schedule: &RaySchedule,
    ball: &GroupBall,
    s: f64,
    average: ConeAverage,
) -> Result<Vec<(f64, f64)>, BoundaryError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if schedule.omega.dim() != ball.dim() {
        return Err(BoundaryError::InvalidArgument("boundary point and group act on different spaces".into()));
    }
    let target = f(schedule.omega.direction());
    schedule
        .times
        .par_iter()
        .map(|&t| {
            let mu = ps_measure(ball, &ray_point(&schedule.omega, t), s)?;
            let mut avg = mu.test_integral(&f);
            if average == ConeAverage::Normalized {
                avg /= mu.mass();
            }
            Ok((t, (avg - target).abs()))
        })
        .collect()
}

/// Per-member errors of a convergence experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub index: usize,
    /// Chordal `d(f_i(ω), f(ω))` per sample; `NaN` where either ray failed to settle.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub samples: Vec<IdealPoint>,
    /// Boundary values of the limit representation; `None` where the ray failed to settle.
    pub limit: Vec<Option<IdealPoint>>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean).collect()
    }

    /// Long format `member, sample, error`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["member", "sample", "chordal_error"])?;
        for r in &self.rows {
            for (j, e) in r.errors.iter().enumerate() {
                out.write_record([r.index.to_string(), j.to_string(), format!("{e:?}")])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Settings shared by every map of a convergence experiment.
#[derive(Clone, Debug)]
pub struct ExperimentSetup<'a> {
    pub ball: &'a GroupBall,
    pub profile: &'a crate::barycenter::VisualKernelProfile,
    pub epsilon: f64,
    pub delta_hat: f64,
    pub truncation: crate::natural_map::Truncation,
    pub schedule: RaySchedule,
}

/// Boundary maps of each `ρ_i` compared pointwise with those of `limit`.
///
/// Every member is screened by [`nonelementary_check`] first.
pub fn ct_converge_experiment(
    family: &[Representation],
    limit: &Representation,
    samples: &[IdealPoint],
    setup: &ExperimentSetup,
) -> Result<ConvergenceTable, BoundaryError> {
    for (index, rep) in family.iter().enumerate() {
        let verdict = nonelementary_check(rep);
        if verdict.is_elementary_suspected() {
            return Err(BoundaryError::ElementaryImageSuspected { index, verdict });
        }
    }
    let boundary = |rep: &Representation| -> Result<Vec<Option<IdealPoint>>, BoundaryError> {
        let map = NaturalMap::new(setup.ball, rep, setup.profile, setup.epsilon, setup.delta_hat)?
            .with_truncation(setup.truncation)?;
        ct_eval_many(&setup.schedule, samples, &map)
            .into_iter()
            .map(|r| match r {
                Ok(e) => Ok(e.image),
                Err(BoundaryError::NotConverged { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    };
    let reference = boundary(limit)?;
    let mut rows = Vec::with_capacity(family.len());
    for (index, rep) in family.iter().enumerate() {
        let values = boundary(rep)?;
        let errors: Vec<f64> = values
            .iter()
            .zip(&reference)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => chordal_ideal(a, b),
                _ => f64::NAN,
            })
            .collect();
        let good: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
        let failures = errors.len() - good.len();
        let mean = if good.is_empty() { f64::NAN } else { good.iter().sum::<f64>() / good.len() as f64 };
        let max = good.iter().copied().fold(f64::NAN, f64::max);
        rows.push(ConvergenceRow { index, errors, mean, max, failures });
    }
    Ok(ConvergenceTable { samples: samples.to_vec(), limit: reference, rows })
}
