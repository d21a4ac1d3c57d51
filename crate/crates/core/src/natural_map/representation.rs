use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MapError;
use crate::group_orbit::{GroupBall, GroupSpec};
use crate::hypgeom::{dist, embed_isometry, HPoint, Isometry};

/// A sample of the smearing measure: a source point, its image and a weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaTarget {
    pub source: HPoint,
    pub target: HPoint,
    pub weight: f64,
}

/// A homomorphism from a group acting on `H^k` into `Isom(H^n)`, with the
/// value `D(O)` of an equivariant map and optional smearing data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    source: GroupSpec,
    dim_n: usize,
    images: Vec<Isometry>,
    d0: HPoint,
    sigma: Option<Vec<SigmaTarget>>,
}

impl Representation {
    /// Images are given by generator label. Images of automatically added
    /// inverses may be omitted and are then computed.
    pub fn new(source: &GroupSpec, images: Vec<(String, Isometry)>, d0: HPoint) -> Result<Self, MapError> {
        let dim_n = d0.dim();
        let mut slots: Vec<Option<Isometry>> = vec![None; source.generators().len()];
        for (label, g) in images {
            let i = source
                .label_index(&label)
                .ok_or_else(|| MapError::InvalidRepresentation(format!("no generator labelled {label:?}")))?;
            if g.dim() != dim_n {
                return Err(MapError::InvalidRepresentation(format!(
                    "image of {label} acts on H^{} but D0 lies in H^{dim_n}",
                    g.dim()
                )));
            }
            slots[i] = Some(g);
        }
        for i in 0..slots.len() {
            if slots[i].is_none() {
                let j = source.generators()[i].inverse;
                if let Some(g) = slots[j].clone() {
                    slots[i] = Some(g.inverse());
                }
            }
        }
        let mut out = Vec::with_capacity(slots.len());
        for (i, s) in slots.into_iter().enumerate() {
            out.push(s.ok_or_else(|| MapError::RepresentationIncomplete(source.generators()[i].label.clone()))?);
        }
        let id = Isometry::identity(dim_n);
        for (i, g) in source.generators().iter().enumerate() {
            let prod = out[i].compose(&out[g.inverse]);
            let scale = 1.0 + out[i].matrix().norm_squared();
            if prod.frobenius_distance(&id) > 1e-9 * scale {
                return Err(MapError::InvalidRepresentation(format!(
                    "images of {} and its inverse do not multiply to the identity",
                    g.label
                )));
            }
        }
        Ok(Representation { source: source.clone(), dim_n, images: out, d0, sigma: None })
    }

    /// The inclusion `γ ↦ γ` with `D(O) = O`.
    pub fn identity(source: &GroupSpec) -> Self {
        let images = source.generators().iter().map(|g| g.g.clone()).collect();
        Representation {
            source: source.clone(),
            dim_n: source.dim(),
            images,
            d0: HPoint::origin(source.dim()),
            sigma: None,
        }
    }

    /// The inclusion of a group acting on `H^2` into `Isom(H^3)` through the equatorial plane.
    pub fn equatorial(source: &GroupSpec) -> Result<Self, MapError> {
        let images = source
            .generators()
            .iter()
            .map(|g| embed_isometry(&g.g).map_err(|e| MapError::InvalidRepresentation(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Representation { source: source.clone(), dim_n: 3, images, d0: HPoint::origin(3), sigma: None })
    }

    /// Attaches smearing samples; weights must sum to 1 within 1e-12.
    pub fn with_sigma(mut self, sigma: Vec<SigmaTarget>) -> Result<Self, MapError> {
        let total: f64 = sigma.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-12 || sigma.iter().any(|s| !(s.weight >= 0.0)) {
            return Err(MapError::InvalidRepresentation(format!("sigma weights sum to {total}")));
        }
        for s in &sigma {
            if s.source.dim() != self.source.dim() || s.target.dim() != self.dim_n {
                return Err(MapError::InvalidRepresentation("sigma sample in the wrong dimension".into()));
            }
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    /// `A ρ A⁻¹` with `D(O)` and the sigma targets moved by `A`.
    pub fn conjugated(&self, a: &Isometry) -> Self {
        let ainv = a.inverse();
        Representation {
            source: self.source.clone(),
            dim_n: self.dim_n,
            images: self.images.iter().map(|g| a.compose(g).compose(&ainv)).collect(),
            d0: a.apply(&self.d0),
            sigma: self.sigma.as_ref().map(|s| {
                s.iter()
                    .map(|t| SigmaTarget { source: t.source.clone(), target: a.apply(&t.target), weight: t.weight })
                    .collect()
            }),
        }
    }

    pub fn source(&self) -> &GroupSpec {
        &self.source
    }

    pub fn dim_k(&self) -> usize {
        self.source.dim()
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn d0(&self) -> &HPoint {
        &self.d0
    }

    pub fn sigma(&self) -> Option<&[SigmaTarget]> {
        self.sigma.as_deref()
    }

    /// Smearing samples, defaulting to a single unit atom at `O ↦ D(O)`.
    pub fn sigma_or_default(&self) -> Vec<SigmaTarget> {
        self.sigma.clone().unwrap_or_else(|| {
            vec![SigmaTarget { source: HPoint::origin(self.dim_k()), target: self.d0.clone(), weight: 1.0 }]
        })
    }

    /// Image of generator `i` (including inverses).
    pub fn image(&self, i: usize) -> &Isometry {
        &self.images[i]
    }

    pub fn images(&self) -> &[Isometry] {
        &self.images
    }

    /// `ρ(w)` as the left-to-right product of generator images.
    pub fn image_of_word(&self, word: &[u16]) -> Isometry {
        word.iter().fold(Isometry::identity(self.dim_n), |acc, &i| acc.compose(&self.images[i as usize]))
    }

    /// Column-major matrices `ρ(γ)` for every element of the ball, in ball order.
    pub fn images_over(&self, ball: &GroupBall) -> Result<Vec<f64>, MapError> {
        if ball.spec().generators().len() != self.images.len() || ball.dim() != self.dim_k() {
            return Err(MapError::RepresentationIncomplete("ball was built from a different group".into()));
        }
        let n = self.dim_n + 1;
        let mut out = Vec::with_capacity(ball.len() * n * n);
        let mut acc = DMatrix::<f64>::identity(n, n);
        for i in 0..ball.len() {
            acc.fill_with_identity();
            for &g in ball.word(i) {
                acc = &acc * self.images[g as usize].matrix();
            }
            out.extend_from_slice(acc.as_slice());
        }
        Ok(out)
    }

    /// Largest displacement `d(ρ(g) D(O), D(O))` over the generators.
    pub fn d0_displacement(&self) -> f64 {
        self.images.iter().map(|g| dist(&g.apply(&self.d0), &self.d0)).fold(0.0, f64::max)
    }
}
