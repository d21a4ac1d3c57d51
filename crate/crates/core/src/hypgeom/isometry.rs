use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mink, GeomError, HPoint, IdealPoint, Location, Tangent};

/// A time-orientation-preserving Lorentz transformation of `R^{1,d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Isometry {
    m: DMatrix<f64>,
}

impl Isometry {
    /// Validates `GᵀJG = J` (Frobenius, 1e-9 relative to `max(1, |G|²)`) and `G_00 > 0`.
    pub fn new(m: DMatrix<f64>) -> Result<Self, GeomError> {
        if m.nrows() != m.ncols() || m.nrows() < 2 {
            return Err(GeomError::InvalidIsometry(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|a| !a.is_finite()) {
            return Err(GeomError::InvalidIsometry("non-finite entry".into()));
        }
        let g = Isometry { m };
        let defect = g.lorentz_defect();
        let scale = g.m.norm_squared().max(1.0);
        if defect > 1e-9 * scale {
            return Err(GeomError::InvalidIsometry(format!("|GᵀJG - J| = {defect:e}")));
        }
        if g.m[(0, 0)] <= 0.0 {
            return Err(GeomError::InvalidIsometry("G_00 <= 0 swaps the sheets".into()));
        }
        Ok(g)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GeomError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(GeomError::InvalidIsometry("matrix rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Isometry { m }
    }

    pub fn identity(dim: usize) -> Self {
        Isometry { m: DMatrix::identity(dim + 1, dim + 1) }
    }

    /// Translation of length `t` along the geodesic through `O` in direction `e_axis`.
    pub fn boost(dim: usize, axis: usize, t: f64) -> Self {
        assert!(axis >= 1 && axis <= dim, "boost axis out of range");
        let mut m = DMatrix::identity(dim + 1, dim + 1);
        m[(0, 0)] = t.cosh();
        m[(axis, axis)] = t.cosh();
        m[(0, axis)] = t.sinh();
        m[(axis, 0)] = t.sinh();
        Isometry { m }
    }

    /// Rotation by `angle` in the spatial `(i, j)` plane, fixing `O`.
    pub fn rotation(dim: usize, i: usize, j: usize, angle: f64) -> Self {
        assert!(i >= 1 && j >= 1 && i <= dim && j <= dim && i != j);
        let mut m = DMatrix::identity(dim + 1, dim + 1);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        Isometry { m }
    }

    /// The pure translation taking `O` to `x` along the geodesic joining them.
    pub fn translation_to(x: &HPoint) -> Self {
        let xs = x.as_slice();
        let n = xs.len();
        let m = DMatrix::from_fn(n, n, |i, j| match (i, j) {
            (0, 0) => xs[0],
            (0, j) => xs[j],
            (i, 0) => xs[i],
            (i, j) => (if i == j { 1.0 } else { 0.0 }) + xs[i] * xs[j] / (1.0 + xs[0]),
        });
        Isometry { m }
    }

    /// Haar-random rotation about `O` followed by a translation of length in `[0, max_translation)`.
    pub fn random(dim: usize, max_translation: f64, rng: &mut impl Rng) -> Self {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..dim {
            if r[(j, j)] < 0.0 {
                for i in 0..dim {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        let mut rot = DMatrix::identity(dim + 1, dim + 1);
        rot.view_mut((1, 1), (dim, dim)).copy_from(&q);
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let t = rng.random_range(0.0..max_translation.max(1e-12));
        let target = super::ray_point(&IdealPoint::from_direction(&dir).expect("gaussian"), t);
        Isometry::translation_to(&target).compose(&Isometry { m: rot })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry { m: &self.m * &other.m }
    }

    /// `J Gᵀ J`.
    pub fn inverse(&self) -> Isometry {
        let mut m = self.m.transpose();
        let n = m.nrows();
        for i in 1..n {
            m[(0, i)] = -m[(0, i)];
            m[(i, 0)] = -m[(i, 0)];
        }
        Isometry { m }
    }

    pub fn apply(&self, x: &HPoint) -> HPoint {
        HPoint::from_raw(self.apply_vec(x.as_slice()))
    }

    pub fn apply_ideal(&self, t: &IdealPoint) -> IdealPoint {
        IdealPoint::from_ray_unchecked(self.apply_vec(t.as_slice()))
    }

    pub fn apply_location(&self, loc: &Location) -> Location {
        match loc {
            Location::Interior(p) => Location::Interior(self.apply(p)),
            Location::Ideal(t) => Location::Ideal(self.apply_ideal(t)),
        }
    }

    /// Differential acting on an ambient tangent vector.
    pub fn apply_tangent(&self, v: &Tangent) -> Tangent {
        &self.m * v
    }

    pub(crate) fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.m.nrows();
        (0..n).map(|i| (0..n).map(|j| self.m[(i, j)] * v[j]).sum()).collect()
    }

    /// `|GᵀJG - J|_F`.
    pub fn lorentz_defect(&self) -> f64 {
        let n = self.m.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ci: Vec<f64> = self.m.column(i).iter().copied().collect();
                let cj: Vec<f64> = self.m.column(j).iter().copied().collect();
                let want = if i == j { if i == 0 { -1.0 } else { 1.0 } } else { 0.0 };
                let e = mink(&ci, &cj) - want;
                s += e * e;
            }
        }
        s.sqrt()
    }

    pub fn frobenius_distance(&self, other: &Isometry) -> f64 {
        (&self.m - &other.m).norm()
    }

    /// Translation length `log ρ(G)` with `ρ` the spectral radius; zero for
    /// elliptic and parabolic elements.
    pub fn translation_length(&self) -> f64 {
        let ev = self.m.clone().complex_eigenvalues();
        let lmax = ev.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        lmax.max(1.0).ln()
    }
}

impl From<Isometry> for Vec<Vec<f64>> {
    fn from(g: Isometry) -> Self {
        (0..g.m.nrows()).map(|i| g.m.row(i).iter().copied().collect()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Isometry {
    type Error = GeomError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Isometry::from_rows(&rows)
    }
}
