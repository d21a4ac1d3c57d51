//! Scenario files: TOML with `[group]`, `[representation]`, `[params]` and
//! an ordered list of `[task.NAME]` sections.

use std::path::Path;

use indexmap::IndexMap;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use psnat_core::group_orbit::{presets, BallOptions, GroupSpec};
use psnat_core::hypgeom::{HPoint, Isometry, Sl2Matrix};
use psnat_core::natural_map::{Representation, SigmaTarget, Truncation};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub group: GroupSection,
    #[serde(default)]
    pub representation: RepresentationSection,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub task: IndexMap<String, TaskSpec>,
}

/// Exactly one of `preset`, `sl2` or `matrices`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    pub preset: Option<String>,
    /// 2x2 generators lifted to `H^2` (real) or `H^3` (when any `im` is given).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sl2: Vec<Sl2Generator>,
    /// Lorentz matrices, row-major.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<MatrixGenerator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sl2Generator {
    pub label: String,
    pub re: [[f64; 2]; 2],
    pub im: Option<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixGenerator {
    pub label: String,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    #[default]
    Identity,
    /// `H^2 → H^3` through the equatorial plane.
    Equatorial,
    Matrices,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationSection {
    #[serde(default)]
    pub kind: RepresentationKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<MatrixGenerator>,
    /// Hyperboloid coordinates of `D(O)`; the target basepoint when absent.
    pub d0: Option<Vec<f64>>,
    /// Applied left to right: the representation is conjugated by
    /// `M_1 ∘ M_2 ∘ …`, i.e. the last move acts first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conjugate: Vec<Move>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma: Vec<SigmaSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSample {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    pub weight: f64,
}

/// An elementary isometry, in the dimension it is applied in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Move {
    Boost { axis: usize, t: f64 },
    Rotation { i: usize, j: usize, angle: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

impl Move {
    pub fn isometry(&self, dim: usize) -> Result<Isometry, CliError> {
        match *self {
            Move::Boost { axis, t } => {
                if axis == 0 || axis > dim {
                    return Err(CliError::Validation(format!("boost axis {axis} outside 1..={dim}")));
                }
                Ok(Isometry::boost(dim, axis, t))
            }
            Move::Rotation { i, j, angle } => {
                if i == 0 || j == 0 || i > dim || j > dim || i == j {
                    return Err(CliError::Validation(format!("rotation plane ({i}, {j}) invalid in dimension {dim}")));
                }
                Ok(Isometry::rotation(dim, i, j, angle))
            }
            Move::Matrix { ref rows } => {
                let g = Isometry::from_rows(rows).map_err(|e| CliError::Validation(format!("conjugating matrix: {e}")))?;
                if g.dim() != dim {
                    return Err(CliError::Validation(format!("conjugating matrix acts on H^{}, expected H^{dim}", g.dim())));
                }
                Ok(g)
            }
        }
    }
}

/// Composes moves left to right: the result applies the last move first.
pub fn compose_moves(moves: &[Move], dim: usize) -> Result<Isometry, CliError> {
    let mut a = Isometry::identity(dim);
    for m in moves {
        a = a.compose(&m.isometry(dim)?);
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "R_max", alias = "r_max")]
    pub r_max: f64,
    pub cap: Option<usize>,
    pub slack: Option<f64>,
    /// Radius of short elements added as extra generators during enumeration.
    pub closure: Option<f64>,
    pub dedup_tol: Option<f64>,
    pub epsilon: f64,
    /// Exponent of the orbit measures; `(1 + ε) δ̂` when absent.
    pub s: Option<f64>,
    /// Skips the exponent fit when given.
    pub delta_hat: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub tol: f64,
    pub max_iter: usize,
    pub profile_samples: usize,
    pub truncation: Truncation,
    /// Finite-difference step.
    pub h: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            r_max: 8.0,
            cap: None,
            slack: None,
            closure: None,
            dedup_tol: None,
            epsilon: 0.2,
            s: None,
            delta_hat: None,
            window: None,
            tol: 1e-9,
            max_iter: 500,
            profile_samples: 20_000,
            truncation: Truncation::Ball,
            h: 1e-4,
        }
    }
}

impl Params {
    pub fn ball_options(&self) -> BallOptions {
        let mut o = BallOptions::new(self.r_max);
        if let Some(c) = self.cap {
            o = o.with_cap(c);
        }
        if let Some(s) = self.slack {
            o = o.with_slack(s);
        }
        if let Some(r) = self.closure {
            o = o.with_closure(r);
        }
        if let Some(t) = self.dedup_tol {
            o.dedup_tol = t;
        }
        o
    }
}

/// Sample points: explicit ball-model coordinates, or `count` seeded uniform
/// points in the hyperbolic ball of radius `radius`, optionally restricted
/// to the Dirichlet domain at `O`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSet {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub count: usize,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default)]
    pub dirichlet: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// Ball CSV plus the counting function on `counts` radii.
    Orbit {
        out: Option<String>,
        #[serde(default = "default_counts")]
        counts: usize,
    },
    Exponent {
        out: Option<String>,
    },
    Profile {
        out: Option<String>,
        /// Target dimension; the representation's when absent.
        dim: Option<usize>,
    },
    Psmeasure {
        out: Option<String>,
        /// Ball-model coordinates; `O` when absent.
        point: Option<Vec<f64>>,
    },
    Barycenter {
        out: Option<String>,
        atoms: String,
    },
    Natmap {
        out: Option<String>,
        #[serde(flatten)]
        at: PointSet,
    },
    Jacobian {
        out: Option<String>,
        #[serde(flatten)]
        at: PointSet,
        /// Order of the Jacobian; the source dimension when absent.
        p: Option<usize>,
    },
    Volume {
        out: Option<String>,
        samples: usize,
        radius: f64,
    },
    Ctmap {
        out: Option<String>,
        /// Number of boundary points, evenly spread.
        omegas: usize,
        times: Option<Vec<f64>>,
        stop_tol: Option<f64>,
    },
    Converge {
        out: Option<String>,
        /// `A_i` conjugates by the moves with every parameter scaled by `2^{-i}`, `i = 1..=members`.
        members: usize,
        conjugate: Vec<Move>,
        samples: usize,
        times: Option<Vec<f64>>,
    },
}

fn default_counts() -> usize {
    100
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Orbit { .. } => "orbit",
            TaskSpec::Exponent { .. } => "exponent",
            TaskSpec::Profile { .. } => "profile",
            TaskSpec::Psmeasure { .. } => "psmeasure",
            TaskSpec::Barycenter { .. } => "barycenter",
            TaskSpec::Natmap { .. } => "natmap",
            TaskSpec::Jacobian { .. } => "jacobian",
            TaskSpec::Volume { .. } => "volume",
            TaskSpec::Ctmap { .. } => "ctmap",
            TaskSpec::Converge { .. } => "converge",
        }
    }

    pub fn out(&self) -> Option<&str> {
        match self {
            TaskSpec::Orbit { out, .. }
            | TaskSpec::Exponent { out }
            | TaskSpec::Profile { out, .. }
            | TaskSpec::Psmeasure { out, .. }
            | TaskSpec::Barycenter { out, .. }
            | TaskSpec::Natmap { out, .. }
            | TaskSpec::Jacobian { out, .. }
            | TaskSpec::Volume { out, .. }
            | TaskSpec::Ctmap { out, .. }
            | TaskSpec::Converge { out, .. } => out.as_deref(),
        }
    }

    /// Default task of a kind, as used by the single-command entry points.
    pub fn default_for(kind: &str) -> Option<TaskSpec> {
        Some(match kind {
            "orbit" => TaskSpec::Orbit { out: None, counts: default_counts() },
            "exponent" => TaskSpec::Exponent { out: None },
            "profile" => TaskSpec::Profile { out: None, dim: None },
            "psmeasure" => TaskSpec::Psmeasure { out: None, point: None },
            "natmap" => TaskSpec::Natmap { out: None, at: PointSet { count: 16, ..PointSet::default() } },
            "jacobian" => TaskSpec::Jacobian { out: None, at: PointSet { count: 16, ..PointSet::default() }, p: None },
            "volume" => TaskSpec::Volume { out: None, samples: 1000, radius: 2.0 },
            "ctmap" => TaskSpec::Ctmap { out: None, omegas: 16, times: None, stop_tol: None },
            _ => return None,
        })
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, CliError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            CliError::Parse { line, column, message: e.message().to_string() }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let p = &self.params;
        let bad = |msg: String| Err(CliError::Validation(msg));
        if !(p.r_max > 0.0) {
            return bad(format!("params.R_max must be positive, got {}", p.r_max));
        }
        if !(p.epsilon > 0.0) {
            return bad(format!("params.epsilon must be positive, got {}", p.epsilon));
        }
        if p.s.is_some_and(|s| !(s > 0.0)) || p.delta_hat.is_some_and(|d| !(d > 0.0)) {
            return bad("params.s and params.delta_hat must be positive".into());
        }
        if !(1e-5..=1e-2).contains(&p.h) {
            return bad(format!("params.h = {} outside [1e-5, 1e-2]", p.h));
        }
        if p.profile_samples < 10_000 {
            return bad("params.profile_samples must be at least 10000".into());
        }
        for (name, t) in &self.task {
            if let Some(out) = t.out() {
                if Path::new(out).is_absolute() || out.contains("..") {
                    return bad(format!("task {name}: output path {out:?} must stay inside the output directory"));
                }
            }
        }
        self.group_spec()?;
        Ok(())
    }

    pub fn group_spec(&self) -> Result<GroupSpec, CliError> {
        let g = &self.group;
        let given = [g.preset.is_some(), !g.sl2.is_empty(), !g.matrices.is_empty()];
        if given.iter().filter(|&&b| b).count() != 1 {
            return Err(CliError::Validation("[group] needs exactly one of preset, sl2 or matrices".into()));
        }
        if let Some(name) = &g.preset {
            return match name.as_str() {
                "sanov" => Ok(presets::sanov()),
                "figure_eight" => Ok(presets::figure_eight()),
                "sanov_in_h3" => Ok(presets::sanov_in_h3()),
                other => Err(CliError::Validation(format!("unknown group preset {other:?}"))),
            };
        }
        if !g.sl2.is_empty() {
            let complex = g.sl2.iter().any(|s| s.im.is_some());
            let gens = g
                .sl2
                .iter()
                .map(|s| {
                    let m = if complex {
                        let im = s.im.unwrap_or([[0.0; 2]; 2]);
                        Sl2Matrix::Complex([0, 1].map(|i| [0, 1].map(|j| Complex64::new(s.re[i][j], im[i][j]))))
                    } else {
                        Sl2Matrix::Real(s.re)
                    };
                    (s.label.clone(), m)
                })
                .collect();
            return GroupSpec::from_sl2(gens).map_err(|e| CliError::Validation(e.to_string()));
        }
        let mut gens = Vec::with_capacity(g.matrices.len());
        for m in &g.matrices {
            let iso = Isometry::from_rows(&m.rows)
                .map_err(|e| CliError::Validation(format!("generator {}: {e}", m.label)))?;
            gens.push((m.label.clone(), iso));
        }
        let dim = gens[0].1.dim();
        GroupSpec::new(dim, gens).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn representation(&self, spec: &GroupSpec) -> Result<Representation, CliError> {
        let r = &self.representation;
        let invalid = |e: psnat_core::natural_map::MapError| CliError::Validation(format!("[representation] {e}"));
        let base = match r.kind {
            RepresentationKind::Identity => Representation::identity(spec),
            RepresentationKind::Equatorial => Representation::equatorial(spec).map_err(invalid)?,
            RepresentationKind::Matrices => {
                let mut images = Vec::with_capacity(r.images.len());
                for m in &r.images {
                    let g = Isometry::from_rows(&m.rows)
                        .map_err(|e| CliError::Validation(format!("image of {}: {e}", m.label)))?;
                    images.push((m.label.clone(), g));
                }
                let dim_n = images.first().map_or(spec.dim(), |(_, g)| g.dim());
                Representation::new(spec, images, HPoint::origin(dim_n)).map_err(invalid)?
            }
        };
        let dim_n = base.dim_n();
        let base = match &r.d0 {
            Some(v) => {
                let d0 = HPoint::from_coords(v.clone()).map_err(|e| CliError::Validation(format!("d0: {e}")))?;
                let images = spec.generators().iter().map(|g| g.label.clone()).zip(base.images().iter().cloned()).collect();
                Representation::new(spec, images, d0).map_err(invalid)?
            }
            None => base,
        };
        let base = if r.sigma.is_empty() {
            base
        } else {
            let mut sigma = Vec::with_capacity(r.sigma.len());
            for s in &r.sigma {
                let pt = |v: &Vec<f64>| HPoint::from_coords(v.clone()).map_err(|e| CliError::Validation(format!("sigma: {e}")));
                sigma.push(SigmaTarget { source: pt(&s.source)?, target: pt(&s.target)?, weight: s.weight });
            }
            base.with_sigma(sigma).map_err(invalid)?
        };
        if r.conjugate.is_empty() {
            Ok(base)
        } else {
            Ok(base.conjugated(&compose_moves(&r.conjugate, dim_n)?))
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}
