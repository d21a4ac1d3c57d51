//! Executes scenario tasks in order and writes their artifacts.

use std::cell::{OnceCell, RefCell};
use std::error::Error;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use psnat_core::barycenter::{solve_barycenter, SolverOptions, VisualKernelProfile};
use psnat_core::boundary_maps::{ct_converge_experiment, ct_eval, BoundaryError, CTEval, ExperimentSetup, RaySchedule};
use psnat_core::group_orbit::{enumerate_ball, estimate_exponent, write_counting_csv, GroupBall, GroupSpec};
use psnat_core::hypgeom::{from_ball, ray_point, to_ball, Frame, HPoint, IdealPoint};
use psnat_core::measure::{ps_measure, truncation_report, AtomicMeasure};
use psnat_core::natural_map::{
    differential, dirichlet_sample, jac_p, jacobian_bound, volume_estimate, NaturalMap, Representation,
};

use crate::scenario::{compose_moves, Move, PointSet, Scenario, TaskSpec};
use crate::CliError;

type TaskResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory for cached kernel profiles.
    pub cache_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), cache_dir: std::env::var_os("PSNAT_CACHE").map(PathBuf::from) }
    }
}

/// Files written by a run, relative to the output directory, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub artifacts: Vec<PathBuf>,
}

/// Which prior results a task consumed; recorded in its sidecar.
#[derive(Default)]
struct Used {
    ball: bool,
    delta: bool,
    s: Option<f64>,
}

struct Output {
    files: Vec<String>,
    result: Value,
}

/// Shared state of one run: the ball, `δ̂` and kernel profile are built on
/// first use and reused by later tasks.
pub struct Session<'a> {
    scenario: &'a Scenario,
    spec: GroupSpec,
    rep: Representation,
    opts: RunOptions,
    ball: OnceCell<(GroupBall, String)>,
    delta: RefCell<Option<(f64, String)>>,
    profile: OnceCell<VisualKernelProfile>,
    current: RefCell<String>,
}

impl<'a> Session<'a> {
    pub fn new(scenario: &'a Scenario, opts: RunOptions) -> Result<Self, CliError> {
        let spec = scenario.group_spec()?;
        let rep = scenario.representation(&spec)?;
        let delta = scenario.params.delta_hat.map(|d| (d, "params".to_string()));
        Ok(Session {
            scenario,
            spec,
            rep,
            opts,
            ball: OnceCell::new(),
            delta: RefCell::new(delta),
            profile: OnceCell::new(),
            current: RefCell::new(String::new()),
        })
    }

    /// Runs every task of the scenario.
    pub fn run_all(&self) -> Result<RunReport, CliError> {
        let tasks: Vec<(usize, String, TaskSpec)> =
            self.scenario.task.iter().enumerate().map(|(i, (n, t))| (i, n.clone(), t.clone())).collect();
        self.run_tasks(&tasks)
    }

    /// Runs the scenario's tasks of one kind, or a default task of that kind
    /// when the scenario has none.
    pub fn run_kind(&self, kind: &str) -> Result<RunReport, CliError> {
        let mut tasks: Vec<(usize, String, TaskSpec)> = self
            .scenario
            .task
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| t.kind() == kind)
            .map(|(i, (n, t))| (i, n.clone(), t.clone()))
            .collect();
        if tasks.is_empty() {
            let t = TaskSpec::default_for(kind)
                .ok_or_else(|| CliError::Validation(format!("no {kind} task in the scenario and no default")))?;
            tasks.push((self.scenario.task.len(), kind.to_string(), t));
        }
        self.run_tasks(&tasks)
    }

    fn run_tasks(&self, tasks: &[(usize, String, TaskSpec)]) -> Result<RunReport, CliError> {
        std::fs::create_dir_all(&self.opts.out_dir)
            .map_err(|e| CliError::Validation(format!("output directory {}: {e}", self.opts.out_dir.display())))?;
        let mut report = RunReport::default();
        for (index, name, task) in tasks {
            log::info!("task {index} ({name}, {})", task.kind());
            *self.current.borrow_mut() = name.clone();
            let mut used = Used::default();
            let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
            rng.set_stream(*index as u64);
            let fail = |e: Box<dyn Error + Send + Sync>| CliError::Task { index: *index, name: name.clone(), message: e.to_string() };
            let out = self.execute(name, task, &mut used, &mut rng).map_err(fail)?;
            let meta = self.sidecar(*index, name, task, &used, &out);
            let meta_name = format!("{}.meta.json", out.files[0]);
            write_json(&self.opts.out_dir.join(&meta_name), &meta).map_err(fail)?;
            report.artifacts.extend(out.files.iter().map(PathBuf::from));
            report.artifacts.push(PathBuf::from(meta_name));
        }
        Ok(report)
    }

    pub fn ball(&self) -> TaskResult<&GroupBall> {
        if self.ball.get().is_none() {
            let b = enumerate_ball(&self.spec, &self.scenario.params.ball_options())?;
            let _ = self.ball.set((b, self.current.borrow().clone()));
        }
        Ok(&self.ball.get().expect("set above").0)
    }

    pub fn delta_hat(&self) -> TaskResult<f64> {
        if let Some((d, _)) = &*self.delta.borrow() {
            return Ok(*d);
        }
        let est = estimate_exponent(self.ball()?, self.scenario.params.window)?;
        *self.delta.borrow_mut() = Some((est.delta_hat, format!("fit in {}", self.current.borrow())));
        Ok(est.delta_hat)
    }

    pub fn profile(&self) -> TaskResult<&VisualKernelProfile> {
        if self.profile.get().is_none() {
            let p = self.build_profile(self.rep.dim_n())?;
            let _ = self.profile.set(p);
        }
        Ok(self.profile.get().expect("set above"))
    }

    fn build_profile(&self, dim: usize) -> TaskResult<VisualKernelProfile> {
        Ok(VisualKernelProfile::cached(self.opts.cache_dir.as_deref(), dim, self.scenario.params.profile_samples)?)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.scenario.params.tol, max_iter: self.scenario.params.max_iter, ..SolverOptions::default() }
    }

    fn natural_map(&self, used: &mut Used) -> TaskResult<NaturalMap<'_>> {
        let p = &self.scenario.params;
        let (ball, delta, profile) = (self.ball()?, self.delta_hat()?, self.profile()?);
        used.ball = true;
        used.delta = true;
        used.s = Some((1.0 + p.epsilon) * delta);
        Ok(NaturalMap::new(ball, &self.rep, profile, p.epsilon, delta)?.with_solver(self.solver()).with_truncation(p.truncation)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.opts.out_dir.join(name)
    }

    fn create(&self, name: &str) -> TaskResult<BufWriter<File>> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(BufWriter::new(File::create(path)?))
    }

    fn execute(&self, name: &str, task: &TaskSpec, used: &mut Used, rng: &mut ChaCha8Rng) -> TaskResult<Output> {
        let file = |ext: &str| task.out().map_or_else(|| format!("{name}.{ext}"), str::to_string);
        let p = &self.scenario.params;
        match task {
            TaskSpec::Orbit { counts, .. } => {
                let ball = self.ball()?;
                used.ball = true;
                let main = file("csv");
                ball.write_csv(self.create(&main)?)?;
                let counts_file = sibling(&main, "counts", "csv");
                write_counting_csv(ball, *counts, self.create(&counts_file)?)?;
                Ok(Output { files: vec![main, counts_file], result: json!({ "elements": ball.len() }) })
            }
            TaskSpec::Exponent { .. } => {
                let est = estimate_exponent(self.ball()?, p.window)?;
                used.ball = true;
                *self.delta.borrow_mut() = Some((est.delta_hat, name.to_string()));
                let main = file("json");
                write_json(&self.path(&main), &est)?;
                Ok(Output { files: vec![main], result: json!({ "delta_hat": est.delta_hat }) })
            }
            TaskSpec::Profile { dim, .. } => {
                let dim = dim.unwrap_or(self.rep.dim_n());
                let prof = if dim == self.rep.dim_n() { self.profile()?.clone() } else { self.build_profile(dim)? };
                let main = file("csv");
                prof.write_csv(self.create(&main)?)?;
                Ok(Output { files: vec![main], result: json!({ "dim": dim, "grid": prof.values().len() }) })
            }
            TaskSpec::Psmeasure { point, .. } => {
                let ball = self.ball()?;
                used.ball = true;
                let x = match point {
                    Some(b) => from_ball(b)?,
                    None => HPoint::origin(ball.dim()),
                };
                let s = match p.s {
                    Some(s) => s,
                    None => {
                        used.delta = true;
                        (1.0 + p.epsilon) * self.delta_hat()?
                    }
                };
                used.s = Some(s);
                let mu = ps_measure(ball, &x, s)?;
                let main = file("csv");
                mu.write_csv(self.create(&main)?)?;
                Ok(Output { files: vec![main], result: json!({ "atoms": mu.len(), "mass": mu.mass() }) })
            }
            TaskSpec::Barycenter { atoms, .. } => {
                let beta = AtomicMeasure::read_csv(File::open(atoms).map_err(|e| format!("{atoms}: {e}"))?)?;
                let prof = if beta.dim() == self.rep.dim_n() { self.profile()?.clone() } else { self.build_profile(beta.dim())? };
                let report = solve_barycenter(&beta, &prof, &self.solver())?;
                let main = file("json");
                write_json(&self.path(&main), &report)?;
                let point = report.point.as_ref().map(|y| y.as_slice().to_vec());
                Ok(Output { files: vec![main], result: json!({ "point": point, "escaped": report.escaped }) })
            }
            TaskSpec::Natmap { at, .. } => {
                let map = self.natural_map(used)?;
                let xs = self.points(at, rng)?;
                let evals = map.eval_many(&xs);
                let main = file("csv");
                let mut w = self.create(&main)?;
                let (k, n) = (map.dim_k(), map.dim_n());
                let mut header: Vec<String> = (1..=k).map(|i| format!("b{i}")).collect();
                header.extend((0..=n).map(|i| format!("y{i}")));
                header.extend(["grad_norm", "iterations", "escaped"].map(String::from));
                writeln!(w, "{}", header.join(","))?;
                let mut failed = 0;
                for (x, e) in xs.iter().zip(evals) {
                    let e = e?;
                    let mut row: Vec<String> = to_ball(x).iter().map(fmt).collect();
                    match &e.value {
                        Some(y) => row.extend(y.as_slice().iter().map(fmt)),
                        None => {
                            failed += 1;
                            row.extend((0..=n).map(|_| String::new()))
                        }
                    }
                    row.extend([fmt(&e.report.grad_norm), e.report.iterations.to_string(), e.report.escaped.to_string()]);
                    writeln!(w, "{}", row.join(","))?;
                }
                w.flush()?;
                Ok(Output { files: vec![main], result: json!({ "points": xs.len(), "undefined": failed }) })
            }
            TaskSpec::Jacobian { at, p: order, .. } => {
                let map = self.natural_map(used)?;
                let xs = self.points(at, rng)?;
                let k = map.dim_k();
                let order = order.unwrap_or(k);
                let bound = jacobian_bound(map.delta_hat(), map.epsilon(), order);
                let f = |x: &HPoint| map.point(x);
                let jac: Vec<TaskResult<f64>> = {
                    use rayon::prelude::*;
                    xs.par_iter()
                        .map(|x| {
                            let (df, _) = differential(&f, &Frame::standard(x, k), p.h)?;
                            Ok(jac_p(&df, order)?)
                        })
                        .collect()
                };
                let main = file("csv");
                let mut w = self.create(&main)?;
                let mut header: Vec<String> = (1..=k).map(|i| format!("b{i}")).collect();
                header.push(format!("jac{order}"));
                writeln!(w, "{}", header.join(","))?;
                let mut values = Vec::with_capacity(xs.len());
                for (x, j) in xs.iter().zip(jac) {
                    let j = j?;
                    values.push(j);
                    let mut row: Vec<String> = to_ball(x).iter().map(fmt).collect();
                    row.push(fmt(&j));
                    writeln!(w, "{}", row.join(","))?;
                }
                w.flush()?;
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                Ok(Output { files: vec![main], result: json!({ "p": order, "bound": bound, "max": max, "min": min }) })
            }
            TaskSpec::Volume { samples, radius, .. } => {
                let map = self.natural_map(used)?;
                let domain = dirichlet_sample(map.ball(), *radius, *samples, rng)?;
                let volume = volume_estimate(|x| map.point(x), &domain.weighted(), p.h)?;
                let main = file("json");
                let result = json!({
                    "volume": volume,
                    "domain_volume": domain.volume(),
                    "samples": domain.points.len(),
                    "candidates": domain.candidates,
                    "radius": radius,
                });
                write_json(&self.path(&main), &result)?;
                Ok(Output { files: vec![main], result })
            }
            TaskSpec::Ctmap { omegas, times, stop_tol, .. } => {
                let map = self.natural_map(used)?;
                let points = spread_ideal(map.dim_k(), *omegas)?;
                let schedule = schedule(&points[0], times, *stop_tol)?;
                let evals: Vec<Result<CTEval, BoundaryError>> = {
                    use rayon::prelude::*;
                    points.par_iter().map(|w| ct_eval(&schedule.with_omega(w.clone()), &map)).collect()
                };
                let main = file("csv");
                let mut files = vec![main.clone()];
                let mut w = self.create(&main)?;
                let (k, n) = (map.dim_k(), map.dim_n());
                let mut header = vec!["index".to_string()];
                header.extend((1..=k).map(|i| format!("omega{i}")));
                header.extend((1..=n).map(|i| format!("image{i}")));
                header.extend(["converged", "steps"].map(String::from));
                writeln!(w, "{}", header.join(","))?;
                let mut unsettled = 0;
                for (j, (omega, e)) in points.iter().zip(evals).enumerate() {
                    let eval = match e {
                        Ok(e) => e,
                        Err(BoundaryError::NotConverged { eval, .. }) => {
                            unsettled += 1;
                            *eval
                        }
                        Err(e) => return Err(e.into()),
                    };
                    let trace = sibling(&main, &format!("trace{j:03}"), "csv");
                    eval.write_csv(self.create(&trace)?)?;
                    files.push(trace);
                    let mut row = vec![j.to_string()];
                    row.extend(omega.direction().iter().map(fmt));
                    match &eval.image {
                        Some(im) => row.extend(im.direction().iter().map(fmt)),
                        None => row.extend((0..n).map(|_| String::new())),
                    }
                    row.extend([eval.converged.to_string(), eval.trace.len().to_string()]);
                    writeln!(w, "{}", row.join(","))?;
                }
                w.flush()?;
                Ok(Output { files, result: json!({ "omegas": points.len(), "unsettled": unsettled }) })
            }
            TaskSpec::Converge { members, conjugate, samples, times, .. } => {
                let ball = self.ball()?;
                let (delta, profile) = (self.delta_hat()?, self.profile()?);
                used.ball = true;
                used.delta = true;
                used.s = Some((1.0 + p.epsilon) * delta);
                let family = (1..=*members)
                    .map(|i| {
                        let scale = 0.5f64.powi(i as i32);
                        let moves: Vec<Move> = conjugate.iter().map(|m| scale_move(m, scale)).collect::<Result<_, _>>()?;
                        Ok(self.rep.conjugated(&compose_moves(&moves, self.rep.dim_n())?))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let points = spread_ideal(ball.dim(), *samples)?;
                let setup = ExperimentSetup {
                    ball,
                    profile,
                    epsilon: p.epsilon,
                    delta_hat: delta,
                    truncation: p.truncation,
                    schedule: schedule(&points[0], times, None)?,
                };
                let table = ct_converge_experiment(&family, &self.rep, &points, &setup)?;
                let main = file("csv");
                table.write_csv(self.create(&main)?)?;
                Ok(Output { files: vec![main], result: json!({ "means": table.means() }) })
            }
        }
    }

    fn points(&self, at: &PointSet, rng: &mut ChaCha8Rng) -> TaskResult<Vec<HPoint>> {
        let k = self.spec.dim();
        let mut xs = Vec::with_capacity(at.points.len() + at.count);
        for b in &at.points {
            if b.len() != k {
                return Err(format!("point {b:?} is not in dimension {k}").into());
            }
            xs.push(from_ball(b)?);
        }
        if at.count > 0 {
            if at.dirichlet {
                xs.extend(dirichlet_sample(self.ball()?, at.radius, at.count, rng)?.points);
            } else {
                for _ in 0..at.count {
                    let u: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let theta = IdealPoint::from_direction(&u)?;
                    xs.push(ray_point(&theta, at.radius * rng.random::<f64>()));
                }
            }
        }
        if xs.is_empty() {
            return Err("no sample points: give points or a positive count".into());
        }
        Ok(xs)
    }

    fn sidecar(&self, index: usize, name: &str, task: &TaskSpec, used: &Used, out: &Output) -> Value {
        let mut meta = json!({
            "task": name,
            "index": index,
            "kind": task.kind(),
            "spec": task,
            "params": self.scenario.params,
            "seed": self.scenario.seed,
            "stream": index,
            "group": {
                "dim": self.spec.dim(),
                "generators": self.spec.generators().iter().map(|g| g.label.clone()).collect::<Vec<_>>(),
            },
            "outputs": out.files,
            "result": out.result,
            "versions": { "psnat-core": psnat_core::VERSION, "psnat-cli": env!("CARGO_PKG_VERSION") },
        });
        if used.ball {
            if let Some((ball, source)) = self.ball.get() {
                meta["ball"] = json!({
                    "R_max": ball.r_max(),
                    "elements": ball.len(),
                    "complete": ball.is_complete(),
                    "near_collisions": ball.near_collisions(),
                    "built_in": source,
                });
            }
        }
        if used.delta {
            if let Some((d, source)) = &*self.delta.borrow() {
                meta["delta_hat"] = json!({ "value": d, "source": source });
            }
        }
        if let (Some(s), Some((ball, _)), Some((d, _))) = (used.s, self.ball.get(), &*self.delta.borrow()) {
            meta["truncation"] = serde_json::to_value(truncation_report(ball, s, *d)).unwrap_or(Value::Null);
        }
        meta
    }
}

/// `count` well-spread points of `S^{k-1}`: equal angles on the circle and a
/// Fibonacci lattice on the sphere.
pub fn spread_ideal(k: usize, count: usize) -> TaskResult<Vec<IdealPoint>> {
    if count == 0 {
        return Err("need at least one boundary point".into());
    }
    let dirs: Vec<Vec<f64>> = match k {
        2 => (0..count)
            .map(|j| {
                let a = std::f64::consts::TAU * (j as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * j as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => return Err(format!("boundary sampling is only implemented for H^2 and H^3, not H^{k}").into()),
    };
    Ok(dirs.iter().map(|d| IdealPoint::from_direction(d)).collect::<Result<_, _>>()?)
}

fn schedule(omega: &IdealPoint, times: &Option<Vec<f64>>, stop_tol: Option<f64>) -> TaskResult<RaySchedule> {
    let mut s = RaySchedule::new(omega.clone());
    if let Some(t) = times {
        s = s.with_times(t.clone())?;
    }
    if let Some(tol) = stop_tol {
        s = s.with_stop_tol(tol)?;
    }
    Ok(s)
}

fn scale_move(m: &Move, scale: f64) -> Result<Move, CliError> {
    match *m {
        Move::Boost { axis, t } => Ok(Move::Boost { axis, t: t * scale }),
        Move::Rotation { i, j, angle } => Ok(Move::Rotation { i, j, angle: angle * scale }),
        Move::Matrix { .. } => Err(CliError::Validation("converge families need boost or rotation moves".into())),
    }
}

/// `dir/stem_tag.ext` next to `main`.
fn sibling(main: &str, tag: &str, ext: &str) -> String {
    let p = Path::new(main);
    let stem = p.file_stem().map_or_else(|| main.to_string(), |s| s.to_string_lossy().into_owned());
    let name = format!("{stem}_{tag}.{ext}");
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => d.join(name).to_string_lossy().into_owned(),
        None => name,
    }
}

fn fmt(v: &f64) -> String {
    format!("{v:?}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> TaskResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
