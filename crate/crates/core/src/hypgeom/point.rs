use serde::{Deserialize, Serialize};

use super::{mink, GeomError};

/// A point of `H^d` on the upper sheet of the hyperboloid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct HPoint(Vec<f64>);

/// A boundary point, stored as the lightlike ray `(1, u)` with `|u| = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct IdealPoint(Vec<f64>);

/// Where an atom sits in the closed ball `H ∪ ∂H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "coords", rename_all = "lowercase")]
pub enum Location {
    Interior(HPoint),
    Ideal(IdealPoint),
}

impl HPoint {
    /// The basepoint `O = (1, 0, ..., 0)`.
    pub fn origin(dim: usize) -> Self {
        let mut v = vec![0.0; dim + 1];
        v[0] = 1.0;
        HPoint(v)
    }

    /// Validates ambient coordinates and renormalizes them onto the sheet.
    pub fn from_coords(v: Vec<f64>) -> Result<Self, GeomError> {
        if v.len() < 2 || v.iter().any(|a| !a.is_finite()) {
            return Err(GeomError::InvalidPoint(format!("{v:?}")));
        }
        let q = mink(&v, &v);
        if v[0] <= 0.0 || (q + 1.0).abs() > 1e-6 * v[0] * v[0] {
            return Err(GeomError::InvalidPoint(format!("<x,x> = {q}, x0 = {}", v[0])));
        }
        Ok(Self::from_raw(v))
    }

    /// Rescales any future timelike vector so that `<x,x> = -1`.
    ///
    /// Far from `O` the form `x0^2 - |x_s|^2` cancels catastrophically, so
    /// vectors already near the sheet only get `x0` recomputed from the
    /// spatial part.
    pub(crate) fn from_raw(mut v: Vec<f64>) -> Self {
        let q = -mink(&v, &v);
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        let near = (q - 1.0).abs() <= 1e-6 * v[0] * v[0];
        let s = if near || q <= 0.0 { 1.0 } else { q.sqrt() };
        for a in v.iter_mut() {
            *a *= sign / s;
        }
        let r2: f64 = v[1..].iter().map(|a| a * a).sum();
        v[0] = (1.0 + r2).sqrt();
        HPoint(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn time(&self) -> f64 {
        self.0[0]
    }
}

impl From<HPoint> for Vec<f64> {
    fn from(p: HPoint) -> Self {
        p.0
    }
}

impl TryFrom<Vec<f64>> for HPoint {
    type Error = GeomError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        HPoint::from_coords(v)
    }
}

impl IdealPoint {
    /// The boundary point in the direction `u` (need not be unit length).
    pub fn from_direction(u: &[f64]) -> Result<Self, GeomError> {
        let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(GeomError::InvalidPoint(format!("zero direction {u:?}")));
        }
        let mut v = Vec::with_capacity(u.len() + 1);
        v.push(1.0);
        v.extend(u.iter().map(|a| a / n));
        Ok(IdealPoint(v))
    }

    /// Validates a future lightlike vector and normalizes it.
    pub fn from_ray(v: Vec<f64>) -> Result<Self, GeomError> {
        if v.len() < 2 || v.iter().any(|a| !a.is_finite()) || v[0] <= 0.0 {
            return Err(GeomError::InvalidPoint(format!("ray {v:?}")));
        }
        let q = mink(&v, &v);
        if q.abs() > 1e-6 * v[0] * v[0] {
            return Err(GeomError::InvalidPoint(format!("ray not lightlike: <v,v> = {q}")));
        }
        Ok(Self::from_ray_unchecked(v))
    }

    /// Normalizes `ray_0 = 1` and projects out any lightlike defect.
    pub(crate) fn from_ray_unchecked(v: Vec<f64>) -> Self {
        Self::from_direction(&v[1..]).expect("nonzero spatial part")
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Unit spatial direction; equal to the ball-model coordinates.
    pub fn direction(&self) -> &[f64] {
        &self.0[1..]
    }
}

impl From<IdealPoint> for Vec<f64> {
    fn from(p: IdealPoint) -> Self {
        p.0
    }
}

impl TryFrom<Vec<f64>> for IdealPoint {
    type Error = GeomError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        IdealPoint::from_ray(v)
    }
}

impl Location {
    pub fn dim(&self) -> usize {
        match self {
            Location::Interior(p) => p.dim(),
            Location::Ideal(t) => t.dim(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Location::Interior(p) => p.as_slice(),
            Location::Ideal(t) => t.as_slice(),
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, Location::Ideal(_))
    }
}

impl From<HPoint> for Location {
    fn from(p: HPoint) -> Self {
        Location::Interior(p)
    }
}

impl From<IdealPoint> for Location {
    fn from(t: IdealPoint) -> Self {
        Location::Ideal(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_sheet() {
        assert!(HPoint::from_coords(vec![1.0, 1.0]).is_err());
        assert!(HPoint::from_coords(vec![-1.0, 0.0]).is_err());
        assert!(IdealPoint::from_ray(vec![1.0, 0.5]).is_err());
        assert!(IdealPoint::from_direction(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn renormalizes() {
        let t: f64 = 0.7;
        let p = HPoint::from_coords(vec![t.cosh() * (1.0 + 1e-9), t.sinh(), 0.0]).unwrap();
        assert!((mink(p.as_slice(), p.as_slice()) + 1.0).abs() < 1e-14);
        let r = IdealPoint::from_ray(vec![2.0, 2.0 * 0.6, 2.0 * 0.8]).unwrap();
        assert_eq!(r.as_slice()[0], 1.0);
        assert!(mink(r.as_slice(), r.as_slice()).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        let p = HPoint::origin(2);
        let s = serde_json::to_string(&Location::Interior(p.clone())).unwrap();
        let back: Location = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Location::Interior(p));
    }
}
