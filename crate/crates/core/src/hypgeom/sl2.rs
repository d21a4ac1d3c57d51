//! `SL(2,R) → SO⁺(2,1)` and `SL(2,C) → SO⁺(3,1)`.
//!
//! A point of `H^2` is the real symmetric form `[[x0+x2, x1], [x1, x0-x2]]`
//! and a point of `H^3` the Hermitian form `[[x0+x3, x1+i x2], [x1-i x2, x0-x3]]`;
//! a matrix `A` acts by `X -> A X A*`. With this choice the action on the upper
//! half-space (last coordinate vertical, see `to_half_space`) is the usual
//! Möbius action, and real matrices preserve the slice `x2 = 0` of `H^3`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GeomError, HPoint, IdealPoint, Isometry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sl2Matrix {
    Real([[f64; 2]; 2]),
    Complex([[Complex64; 2]; 2]),
}

impl Sl2Matrix {
    pub fn det(&self) -> Complex64 {
        match self {
            Sl2Matrix::Real(m) => Complex64::new(m[0][0] * m[1][1] - m[0][1] * m[1][0], 0.0),
            Sl2Matrix::Complex(m) => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        }
    }

    pub fn to_complex(&self) -> [[Complex64; 2]; 2] {
        match self {
            Sl2Matrix::Real(m) => m.map(|r| r.map(|a| Complex64::new(a, 0.0))),
            Sl2Matrix::Complex(m) => *m,
        }
    }

    pub fn mul(&self, other: &Sl2Matrix) -> Sl2Matrix {
        match (self, other) {
            (Sl2Matrix::Real(a), Sl2Matrix::Real(b)) => Sl2Matrix::Real(mul2(a, b)),
            _ => Sl2Matrix::Complex(mul2(&self.to_complex(), &other.to_complex())),
        }
    }

    pub fn neg(&self) -> Sl2Matrix {
        match self {
            Sl2Matrix::Real(a) => Sl2Matrix::Real(a.map(|r| r.map(|v| -v))),
            Sl2Matrix::Complex(a) => Sl2Matrix::Complex(a.map(|r| r.map(|v| -v))),
        }
    }

    /// Dimension of the hyperbolic space the lift acts on.
    pub fn target_dim(&self) -> usize {
        match self {
            Sl2Matrix::Real(_) => 2,
            Sl2Matrix::Complex(_) => 3,
        }
    }
}

fn mul2<T: Copy + std::ops::Mul<Output = T> + std::ops::Add<Output = T>>(
    a: &[[T; 2]; 2],
    b: &[[T; 2]; 2],
) -> [[T; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Lifts a determinant-one 2x2 matrix to an isometry of `H^2` (real) or `H^3` (complex).
pub fn lift_sl2(m: &Sl2Matrix) -> Result<Isometry, GeomError> {
    let det = m.det();
    if (det - Complex64::new(1.0, 0.0)).norm() >= 1e-9 {
        return Err(GeomError::NonUnitDeterminant { det: det.re });
    }
    let mat = match m {
        Sl2Matrix::Real(a) => {
            let form = |x: &[f64]| [[x[0] + x[2], x[1]], [x[1], x[0] - x[2]]];
            DMatrix::from_fn(3, 3, |i, j| {
                let mut e = [0.0; 3];
                e[j] = 1.0;
                let x = form(&e);
                let at = [[a[0][0], a[1][0]], [a[0][1], a[1][1]]];
                let y = mul2(&mul2(a, &x), &at);
                match i {
                    0 => 0.5 * (y[0][0] + y[1][1]),
                    1 => y[0][1],
                    _ => 0.5 * (y[0][0] - y[1][1]),
                }
            })
        }
        Sl2Matrix::Complex(a) => {
            let c = |re: f64, im: f64| Complex64::new(re, im);
            let form = |x: &[f64]| [[c(x[0] + x[3], 0.0), c(x[1], x[2])], [c(x[1], -x[2]), c(x[0] - x[3], 0.0)]];
            let astar = [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]];
            DMatrix::from_fn(4, 4, |i, j| {
                let mut e = [0.0; 4];
                e[j] = 1.0;
                let y = mul2(&mul2(a, &form(&e)), &astar);
                match i {
                    0 => 0.5 * (y[0][0] + y[1][1]).re,
                    1 => y[0][1].re,
                    2 => y[0][1].im,
                    _ => 0.5 * (y[0][0] - y[1][1]).re,
                }
            })
        }
    };
    Isometry::new(mat)
}

/// Coordinate map `H^2 -> H^3`, `(x0, x1, x2) -> (x0, x1, 0, x2)`, compatible with `SL(2,R) ⊂ SL(2,C)`.
const EMBED_INDEX: [usize; 3] = [0, 1, 3];

/// Extends an isometry of `H^2` to `H^3` preserving the embedded plane.
pub fn embed_isometry(g: &Isometry) -> Result<Isometry, GeomError> {
    if g.dim() != 2 {
        return Err(GeomError::DimensionMismatch { expected: 2, got: g.dim() });
    }
    let mut m = DMatrix::identity(4, 4);
    for (a, &i) in EMBED_INDEX.iter().enumerate() {
        for (b, &j) in EMBED_INDEX.iter().enumerate() {
            m[(i, j)] = g.matrix()[(a, b)];
        }
    }
    Ok(Isometry::from_matrix_unchecked(m))
}

pub fn embed_point(x: &HPoint) -> HPoint {
    let s = x.as_slice();
    HPoint::from_raw(vec![s[0], s[1], 0.0, s[2]])
}

pub fn embed_ideal(t: &IdealPoint) -> IdealPoint {
    let s = t.as_slice();
    IdealPoint::from_ray_unchecked(vec![s[0], s[1], 0.0, s[2]])
}
