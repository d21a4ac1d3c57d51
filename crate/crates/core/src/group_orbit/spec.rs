use serde::{Deserialize, Serialize};

use super::OrbitError;
use crate::hypgeom::{lift_sl2, Isometry, Sl2Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub label: String,
    pub g: Isometry,
    /// 2x2 matrix the generator was lifted from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Sl2Matrix>,
    /// Index of the inverse generator in the same list.
    pub inverse: usize,
}

/// A finitely generated subgroup of `Isom(H^k)`, closed under inverses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    dim: usize,
    generators: Vec<Generator>,
}

/// Label used for the automatically added inverse of `label`.
pub fn inverse_label(label: &str) -> String {
    let mut chars = label.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_lowercase() => c.to_uppercase().collect(),
        (Some(c), None) if c.is_uppercase() => c.to_lowercase().collect(),
        _ => match label.strip_suffix("^-1") {
            Some(base) => base.to_string(),
            None => format!("{label}^-1"),
        },
    }
}

impl GroupSpec {
    /// Builds the generating set, appending inverses that are not already present.
    ///
    /// A supplied generator counts as the inverse of another when their product is
    /// the identity within 1e-9; involutions are their own inverse.
    pub fn new(dim: usize, gens: Vec<(String, Isometry)>) -> Result<Self, OrbitError> {
        Self::build(dim, gens.into_iter().map(|(l, g)| (l, g, None)).collect())
    }

    /// Lifts 2x2 generators (real to `H^2`, complex to `H^3`).
    pub fn from_sl2(gens: Vec<(String, Sl2Matrix)>) -> Result<Self, OrbitError> {
        let mut dim = None;
        let mut lifted = Vec::with_capacity(gens.len());
        for (label, m) in gens {
            let g = lift_sl2(&m).map_err(|e| OrbitError::InvalidGenerator { label: label.clone(), reason: e.to_string() })?;
            if *dim.get_or_insert(g.dim()) != g.dim() {
                return Err(OrbitError::InvalidGenerator {
                    label,
                    reason: "mixes real and complex matrices".into(),
                });
            }
            lifted.push((label, g, Some(m)));
        }
        let dim = dim.ok_or(OrbitError::NoGenerators)?;
        Self::build(dim, lifted)
    }

    fn build(dim: usize, gens: Vec<(String, Isometry, Option<Sl2Matrix>)>) -> Result<Self, OrbitError> {
        if gens.is_empty() {
            return Err(OrbitError::NoGenerators);
        }
        let id = Isometry::identity(dim);
        let mut out: Vec<Generator> = Vec::new();
        for (label, g, source) in gens {
            if g.dim() != dim {
                return Err(OrbitError::InvalidGenerator {
                    label,
                    reason: format!("acts on H^{} instead of H^{dim}", g.dim()),
                });
            }
            if out.iter().any(|x| x.label == label) {
                return Err(OrbitError::InvalidGenerator { label, reason: "duplicate label".into() });
            }
            out.push(Generator { label, g, source, inverse: usize::MAX });
        }
        let n = out.len();
        for i in 0..n {
            if out[i].inverse != usize::MAX {
                continue;
            }
            let partner = (i..n).find(|&j| {
                out[j].inverse == usize::MAX && out[i].g.compose(&out[j].g).frobenius_distance(&id) < 1e-9
            });
            match partner {
                Some(j) => {
                    out[i].inverse = j;
                    out[j].inverse = i;
                }
                None => {
                    let label = inverse_label(&out[i].label);
                    if out.iter().any(|x| x.label == label) {
                        return Err(OrbitError::InvalidGenerator {
                            label,
                            reason: "label reserved for an automatic inverse".into(),
                        });
                    }
                    let source = out[i].source.as_ref().map(inverse_sl2);
                    let j = out.len();
                    out[i].inverse = j;
                    out.push(Generator { label, g: out[i].g.inverse(), source, inverse: i });
                }
            }
        }
        Ok(GroupSpec { dim, generators: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.label == label)
    }

    /// Formats a word of generator indices; single-character labels are concatenated.
    pub fn format_word(&self, word: &[u16]) -> String {
        let short = self.generators.iter().all(|g| g.label.chars().count() == 1);
        let sep = if short { "" } else { " " };
        word.iter().map(|&i| self.generators[i as usize].label.as_str()).collect::<Vec<_>>().join(sep)
    }

    /// Parses a word written by [`format_word`](Self::format_word).
    pub fn parse_word(&self, s: &str) -> Result<Vec<u16>, OrbitError> {
        let short = self.generators.iter().all(|g| g.label.chars().count() == 1);
        let tokens: Vec<String> = if short {
            s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
        } else {
            s.split_whitespace().map(String::from).collect()
        };
        tokens
            .iter()
            .map(|t| self.label_index(t).map(|i| i as u16).ok_or_else(|| OrbitError::UnknownLabel(t.clone())))
            .collect()
    }

    /// Evaluates a word as the left-to-right product of its generators.
    pub fn evaluate(&self, word: &[u16]) -> Isometry {
        word.iter().fold(Isometry::identity(self.dim), |acc, &i| acc.compose(&self.generators[i as usize].g))
    }
}

fn inverse_sl2(m: &Sl2Matrix) -> Sl2Matrix {
    match m {
        Sl2Matrix::Real(a) => Sl2Matrix::Real([[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]),
        Sl2Matrix::Complex(a) => Sl2Matrix::Complex([[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]),
    }
}
