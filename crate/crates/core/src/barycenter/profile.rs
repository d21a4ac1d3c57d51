use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::BarycenterError;

pub const DEFAULT_STEP: f64 = 0.05;
pub const DEFAULT_RADIUS: f64 = 25.0;

/// Geometric panels in the polar angle; the last one reaches down to `π e^{-40}`.
const PANELS: usize = 40;

/// Radial profile of the visual-measure smoothing in `H^n`.
///
/// For `y` at distance `r` from `p`, the `ν_p`-average of the Busemann
/// gradients at `y` is `m(r)` times the unit vector pointing away from `p`,
/// and the `ν_p`-average of `B(y, ·) - B(p, ·)` is `G(r)` with `G' = m`.
/// `m` is tabulated on a uniform grid and interpolated by a monotone cubic;
/// `G` is the exact integral of that cubic, so the two are consistent to
/// rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualKernelProfile {
    dim_n: usize,
    samples: usize,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    integral: Vec<f64>,
}

/// `(G(r), m(r), m'(r))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelValue {
    pub g: f64,
    pub m: f64,
    pub dm: f64,
}

impl VisualKernelProfile {
    /// Tabulates `m` with `samples` polar-angle quadrature nodes per radius
    /// on the default grid (step 0.05 up to 25).
    pub fn build(dim_n: usize, samples: usize) -> Result<Self, BarycenterError> {
        Self::build_on_grid(dim_n, samples, DEFAULT_STEP, DEFAULT_RADIUS)
    }

    pub fn build_on_grid(dim_n: usize, samples: usize, step: f64, r_max: f64) -> Result<Self, BarycenterError> {
        if dim_n < 2 {
            return Err(BarycenterError::InvalidProfile(format!("dimension {dim_n} < 2")));
        }
        if samples < 10_000 {
            return Err(BarycenterError::InvalidProfile(format!("{samples} quadrature samples < 10^4")));
        }
        if !(step > 0.0) || !(r_max > step) {
            return Err(BarycenterError::InvalidProfile(format!("bad grid step {step} / radius {r_max}")));
        }
        let count = (r_max / step).round() as usize + 1;
        let rule = PolarRule::new(dim_n, samples);
        let mut values: Vec<f64> = (0..count).into_par_iter().map(|j| rule.m(j as f64 * step).min(1.0)).collect();
        values[0] = 0.0;
        for j in 1..count {
            values[j] = values[j].max(values[j - 1]);
        }
        Self::from_values(dim_n, samples, step, values)
    }

    /// Builds the interpolant from tabulated values of `m` on `0, step, 2 step, ...`.
    pub fn from_values(dim_n: usize, samples: usize, step: f64, values: Vec<f64>) -> Result<Self, BarycenterError> {
        if values.len() < 3 {
            return Err(BarycenterError::InvalidProfile("fewer than three grid values".into()));
        }
        if values[0] != 0.0 || values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(BarycenterError::InvalidProfile("values must start at 0 and increase within [0, 1]".into()));
        }
        let slopes = pchip_slopes(&values, step);
        let mut integral = vec![0.0; values.len()];
        for j in 1..values.len() {
            let (a, b, da, db) = (values[j - 1], values[j], slopes[j - 1], slopes[j]);
            integral[j] = integral[j - 1] + step * (a + b) / 2.0 + step * step * (da - db) / 12.0;
        }
        Ok(VisualKernelProfile { dim_n, samples, step, values, slopes, integral })
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Last grid radius; `m` is held constant beyond it.
    pub fn r_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| j as f64 * self.step).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn m(&self, r: f64) -> f64 {
        self.eval(r).m
    }

    pub fn g(&self, r: f64) -> f64 {
        self.eval(r).g
    }

    pub fn eval(&self, r: f64) -> KernelValue {
        let last = self.values.len() - 1;
        let r = r.max(0.0);
        if r >= self.r_max() {
            let m = self.values[last];
            return KernelValue { g: self.integral[last] + m * (r - self.r_max()), m, dm: 0.0 };
        }
        let j = ((r / self.step) as usize).min(last - 1);
        let h = self.step;
        let t = (r - j as f64 * h) / h;
        let (a, b, da, db) = (self.values[j], self.values[j + 1], self.slopes[j], self.slopes[j + 1]);
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let m = (2.0 * t3 - 3.0 * t2 + 1.0) * a
            + (t3 - 2.0 * t2 + t) * h * da
            + (-2.0 * t3 + 3.0 * t2) * b
            + (t3 - t2) * h * db;
        let dm = ((6.0 * t2 - 6.0 * t) * a
            + (3.0 * t2 - 4.0 * t + 1.0) * h * da
            + (-6.0 * t2 + 6.0 * t) * b
            + (3.0 * t2 - 2.0 * t) * h * db)
            / h;
        let g = self.integral[j]
            + h * ((t4 / 2.0 - t3 + t) * a
                + (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0) * h * da
                + (-t4 / 2.0 + t3) * b
                + (t4 / 4.0 - t3 / 3.0) * h * db);
        KernelValue { g, m, dm }
    }

    /// CSV with columns `r, m`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BarycenterError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r", "m"])?;
        for (j, v) in self.values.iter().enumerate() {
            out.write_record([(j as f64 * self.step).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, dim_n: usize, samples: usize) -> Result<Self, BarycenterError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, BarycenterError> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|e| BarycenterError::InvalidProfile(format!("bad profile row: {e}")))
            };
            radii.push(num(0)?);
            values.push(num(1)?);
        }
        if radii.len() < 3 {
            return Err(BarycenterError::InvalidProfile("profile file has fewer than three rows".into()));
        }
        let step = radii[1] - radii[0];
        let uniform = radii.iter().enumerate().all(|(j, &r)| (r - j as f64 * step).abs() < 1e-9);
        if radii[0] != 0.0 || !uniform {
            return Err(BarycenterError::InvalidProfile("profile grid must be uniform from 0".into()));
        }
        Self::from_values(dim_n, samples, step, values)
    }

    /// Cache file name for a `(dim_n, samples)` key.
    pub fn cache_file(dir: &Path, dim_n: usize, samples: usize) -> PathBuf {
        dir.join(format!("visual_profile_n{dim_n}_s{samples}.csv"))
    }

    /// Loads the profile from `dir` if cached, otherwise builds and stores it.
    pub fn cached(dir: Option<&Path>, dim_n: usize, samples: usize) -> Result<Self, BarycenterError> {
        let Some(dir) = dir else { return Self::build(dim_n, samples) };
        let path = Self::cache_file(dir, dim_n, samples);
        if let Ok(f) = std::fs::File::open(&path) {
            match Self::read_csv(f, dim_n, samples) {
                Ok(p) => return Ok(p),
                Err(e) => log::warn!("ignoring unreadable profile cache {}: {e}", path.display()),
            }
        }
        let p = Self::build(dim_n, samples)?;
        std::fs::create_dir_all(dir)?;
        let tmp = path.with_extension("csv.tmp");
        p.write_csv(std::fs::File::create(&tmp)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(p)
    }
}

/// Quadrature over the polar angle `α` between `θ` and the axis through `y`,
/// with density `sin^{n-2} α` on `[0, π]`.
///
/// Composite Simpson on panels `[π e^{-k-1}, π e^{-k}]` resolves the spike of
/// width `e^{-r}` that the integrand develops near `α = 0` for large `r`.
struct PolarRule {
    /// `(sin(α/2), weight · sin^{n-2} α)`, weights normalized to sum to 1.
    nodes: Vec<(f64, f64)>,
}

impl PolarRule {
    fn new(dim_n: usize, samples: usize) -> Self {
        let per = ((samples / (PANELS + 1)).max(10) / 2) * 2;
        let mut nodes = Vec::with_capacity((PANELS + 1) * (per + 1));
        let mut hi = std::f64::consts::PI;
        for k in 0..=PANELS {
            let lo = if k == PANELS { 0.0 } else { std::f64::consts::PI * (-(k as f64) - 1.0).exp() };
            let h = (hi - lo) / per as f64;
            for i in 0..=per {
                let c = if i == 0 || i == per {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let a = lo + i as f64 * h;
                nodes.push(((a / 2.0).sin(), c * h / 3.0 * a.sin().powi(dim_n as i32 - 2)));
            }
            hi = lo;
        }
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        for n in &mut nodes {
            n.1 /= total;
        }
        PolarRule { nodes }
    }

    /// `E[(sinh r - cosh r cos α) / (cosh r - sinh r cos α)]`, written with
    /// `1 - cos α = 2 sin²(α/2)` to avoid cancellation.
    fn m(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let (ch, sh, em) = (r.cosh(), r.sinh(), (-r).exp());
        self.nodes
            .iter()
            .map(|&(s, w)| {
                let s2 = 2.0 * s * s;
                w * (ch * s2 - em) / (sh * s2 + em)
            })
            .sum()
    }
}

/// Fritsch–Carlson slopes for a uniform grid.
fn pchip_slopes(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let del: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (del[k - 1], del[k]);
        if a * b > 0.0 {
            d[k] = 2.0 / (1.0 / a + 1.0 / b);
        }
    }
    let edge = |d0: f64, d1: f64| -> f64 {
        let e = (3.0 * d0 - d1) / 2.0;
        if e.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && e.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            e
        }
    };
    d[0] = edge(del[0], del[1]);
    d[n - 1] = edge(del[n - 2], del[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pchip_reproduces_linear_data() {
        let v: Vec<f64> = (0..10).map(|j| j as f64 * 0.1).collect();
        let p = VisualKernelProfile::from_values(2, 10_000, 0.5, v).unwrap();
        for r in [0.0, 0.3, 1.7, 4.4] {
            let k = p.eval(r);
            assert!((k.m - 0.2 * r).abs() < 1e-14);
            assert!((k.dm - 0.2).abs() < 1e-14);
            assert!((k.g - 0.1 * r * r).abs() < 1e-14);
        }
        assert_eq!(p.eval(10.0).dm, 0.0);
    }

    #[test]
    fn rejects_non_monotone_values() {
        assert!(VisualKernelProfile::from_values(2, 10_000, 0.1, vec![0.0, 0.5, 0.4]).is_err());
        assert!(VisualKernelProfile::from_values(2, 10_000, 0.1, vec![0.1, 0.5, 0.6]).is_err());
    }

    #[test]
    fn polar_rule_weights_match_sphere_moments() {
        // E[cos^2 α] = 1/n for the uniform measure on S^{n-1}.
        for n in 2..=4 {
            let rule = PolarRule::new(n, 20_000);
            let m2: f64 = rule.nodes.iter().map(|&(s, w)| w * (1.0 - 2.0 * s * s).powi(2)).sum();
            assert!((m2 - 1.0 / n as f64).abs() < 1e-10, "n = {n}: {m2}");
        }
    }
}
