use super::AtomicMeasure;
use crate::hypgeom::{HPoint, IdealPoint, Isometry};

/// Weighted pairs `(source in H^k, target in H^n ∪ ∂H^n)`.
///
/// The source marginal is kept as an [`AtomicMeasure`], so it shares raw
/// weights and normalizer with the measure it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductAtoms {
    source: AtomicMeasure,
    dim_n: usize,
    targets: Vec<f64>,
    target_ideal: Vec<bool>,
}

impl ProductAtoms {
    pub(crate) fn from_source(source: AtomicMeasure, dim_n: usize, targets: Vec<f64>, target_ideal: Vec<bool>) -> Self {
        debug_assert_eq!(targets.len(), source.len() * (dim_n + 1));
        ProductAtoms { source, dim_n, targets, target_ideal }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn dim_k(&self) -> usize {
        self.source.dim()
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.source.weight(i)
    }

    pub fn source_slice(&self, i: usize) -> &[f64] {
        self.source.location_slice(i)
    }

    pub fn target_slice(&self, i: usize) -> &[f64] {
        let n = self.dim_n + 1;
        &self.targets[i * n..(i + 1) * n]
    }

    /// Projection to the first factor.
    pub fn source_marginal(&self) -> &AtomicMeasure {
        &self.source
    }

    /// Projection to the second factor.
    pub fn target_marginal(&self) -> AtomicMeasure {
        AtomicMeasure::from_parts(
            self.dim_n,
            self.targets.clone(),
            self.target_ideal.clone(),
            self.source.raw_weights().to_vec(),
            self.source.normalizer(),
        )
    }

    /// Pushforward under `(g, h)` acting on the two factors.
    pub fn push_forward(&self, g: &Isometry, h: &Isometry) -> ProductAtoms {
        let n = self.dim_n + 1;
        let mut targets = Vec::with_capacity(self.targets.len());
        for i in 0..self.len() {
            let v = h.apply_vec(&self.targets[i * n..(i + 1) * n]);
            if self.target_ideal[i] {
                targets.extend_from_slice(IdealPoint::from_ray_unchecked(v).as_slice());
            } else {
                targets.extend_from_slice(HPoint::from_raw(v).as_slice());
            }
        }
        ProductAtoms {
            source: self.source.push_forward(g),
            dim_n: self.dim_n,
            targets,
            target_ideal: self.target_ideal.clone(),
        }
    }
}
