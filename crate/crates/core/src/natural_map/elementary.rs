use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Representation;
use crate::hypgeom::{chordal_ideal, mink, HPoint, IdealPoint, Isometry};

/// Dynamical type of an isometry, with its fixed points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IsometryType {
    Identity,
    /// Fixes an interior point.
    Elliptic { fixed: HPoint },
    /// Fixes exactly one boundary point.
    Parabolic { fixed: IdealPoint },
    /// Translates along the geodesic from `repelling` to `attracting`.
    Loxodromic { attracting: IdealPoint, repelling: IdealPoint, length: f64 },
}

impl IsometryType {
    pub fn boundary_fixed_points(&self) -> Vec<IdealPoint> {
        match self {
            IsometryType::Parabolic { fixed } => vec![fixed.clone()],
            IsometryType::Loxodromic { attracting, repelling, .. } => vec![attracting.clone(), repelling.clone()],
            _ => Vec::new(),
        }
    }
}

/// Rounding splits the unipotent Jordan block of a parabolic into eigenvalues
/// `1 ± O(u^{1/3})`, with `u` the unit roundoff times the matrix size; shorter
/// translation lengths are not trusted.
fn loxodromic_min(g: &Isometry) -> f64 {
    1e-6f64.max(100.0 * (f64::EPSILON * g.matrix().norm()).cbrt())
}

/// Classifies `g` from its translation length and the kernel of `g - I`.
pub fn classify(g: &Isometry) -> IsometryType {
    let n = g.dim() + 1;
    let m = g.matrix();
    if (m - DMatrix::<f64>::identity(n, n)).norm() < 1e-10 {
        return IsometryType::Identity;
    }
    let length = g.translation_length();
    if length > loxodromic_min(g) {
        let attracting = power_iteration(m);
        let repelling = power_iteration(g.inverse().matrix());
        return IsometryType::Loxodromic { attracting, repelling, length };
    }
    // Fixed vectors: kernel of g - I, then the Minkowski form restricted to it.
    let a = m - DMatrix::<f64>::identity(n, n);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let scale = 1.0 + m.norm();
    let kernel: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] < 1e-7 * scale)
        .map(|i| vt.row(i).transpose())
        .collect();
    if kernel.is_empty() {
        // Only reachable through rounding; treat the nearest fixed vector as a point.
        let i = svd.singular_values.imin();
        return classify_vector(vt.row(i).transpose());
    }
    let k = kernel.len();
    let form = DMatrix::from_fn(k, k, |i, j| mink(kernel[i].as_slice(), kernel[j].as_slice()));
    let eig = SymmetricEigen::new(form);
    // A timelike fixed vector means elliptic; otherwise the radical holds the fixed null vector.
    let (imin, vmin) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| {
        if v < acc.1 {
            (i, v)
        } else {
            acc
        }
    });
    let combine = |c: DVector<f64>| -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for (ki, ci) in kernel.iter().zip(c.iter()) {
            v += ki * *ci;
        }
        v
    };
    if vmin < -1e-6 {
        return classify_vector(combine(eig.eigenvectors.column(imin).into_owned()));
    }
    let iabs = eig.eigenvalues.iamin();
    classify_vector(combine(eig.eigenvectors.column(iabs).into_owned()))
}

fn classify_vector(mut v: DVector<f64>) -> IsometryType {
    if v[0] < 0.0 {
        v = -v;
    }
    let q = mink(v.as_slice(), v.as_slice());
    if q < -1e-6 * v.norm_squared() {
        let s = (-q).sqrt();
        let p: Vec<f64> = v.iter().map(|a| a / s).collect();
        match HPoint::from_coords(p) {
            Ok(fixed) => IsometryType::Elliptic { fixed },
            Err(_) => IsometryType::Identity,
        }
    } else {
        let p: Vec<f64> = v.iter().map(|a| a / v[0]).collect();
        match IdealPoint::from_direction(&p[1..]) {
            Ok(fixed) => IsometryType::Parabolic { fixed },
            Err(_) => IsometryType::Identity,
        }
    }
}

/// Dominant eigenvector of a loxodromic Lorentz matrix, as a boundary point.
fn power_iteration(m: &DMatrix<f64>) -> IdealPoint {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    for _ in 0..2000 {
        let mut w = m * &v;
        let s = w[0];
        w /= s;
        let change = (&w - &v).norm();
        v = w;
        if change < 1e-15 {
            break;
        }
    }
    IdealPoint::from_direction(&v.as_slice()[1..]).expect("lightlike limit has nonzero spatial part")
}

/// Outcome of the heuristic non-elementarity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ElementaryVerdict {
    Nonelementary,
    /// All generator images fix a common boundary point.
    FixedPoint { point: IdealPoint },
    /// All generator images preserve a pair of boundary points.
    InvariantPair { a: IdealPoint, b: IdealPoint },
    /// All generator images fix a common interior point.
    FixedInteriorPoint { point: HPoint },
    Inconclusive { reason: String },
}

impl ElementaryVerdict {
    pub fn is_elementary_suspected(&self) -> bool {
        matches!(
            self,
            ElementaryVerdict::FixedPoint { .. }
                | ElementaryVerdict::InvariantPair { .. }
                | ElementaryVerdict::FixedInteriorPoint { .. }
        )
    }
}

const SAME_POINT: f64 = 1e-6;

/// Looks for a boundary point, boundary pair or interior point fixed by all generator images.
pub fn nonelementary_check(rep: &Representation) -> ElementaryVerdict {
    let types: Vec<IsometryType> = rep.images().iter().map(classify).collect();
    let live: Vec<(&Isometry, &IsometryType)> =
        rep.images().iter().zip(&types).filter(|(_, t)| **t != IsometryType::Identity).collect();
    if live.is_empty() {
        return ElementaryVerdict::FixedInteriorPoint { point: HPoint::origin(rep.dim_n()) };
    }
    let fixes = |g: &Isometry, p: &IdealPoint| chordal_ideal(&g.apply_ideal(p), p) < SAME_POINT;

    for (_, t) in &live {
        if let IsometryType::Loxodromic { attracting, repelling, .. } = t {
            let preserved = live.iter().all(|(g, _)| {
                let (ga, gb) = (g.apply_ideal(attracting), g.apply_ideal(repelling));
                let same = chordal_ideal(&ga, attracting) < SAME_POINT && chordal_ideal(&gb, repelling) < SAME_POINT;
                let swapped = chordal_ideal(&ga, repelling) < SAME_POINT && chordal_ideal(&gb, attracting) < SAME_POINT;
                same || swapped
            });
            if preserved {
                return ElementaryVerdict::InvariantPair { a: attracting.clone(), b: repelling.clone() };
            }
        }
    }
    // Candidate boundary points: fixed points of any non-elliptic image.
    let candidates: Vec<IdealPoint> = live.iter().flat_map(|(_, t)| t.boundary_fixed_points()).collect();
    for p in &candidates {
        if live.iter().all(|(g, _)| fixes(g, p)) {
            return ElementaryVerdict::FixedPoint { point: p.clone() };
        }
    }
    let elliptic: Vec<&HPoint> = live
        .iter()
        .filter_map(|(_, t)| if let IsometryType::Elliptic { fixed } = t { Some(fixed) } else { None })
        .collect();
    if elliptic.len() == live.len() {
        let p = elliptic[0];
        if live.iter().all(|(g, _)| crate::hypgeom::dist(&g.apply(p), p) < 1e-8) {
            return ElementaryVerdict::FixedInteriorPoint { point: p.clone() };
        }
        return ElementaryVerdict::Inconclusive { reason: "all generator images are elliptic".into() };
    }
    ElementaryVerdict::Nonelementary
}
