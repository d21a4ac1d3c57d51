use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::hypgeom::{HPoint, IdealPoint, Isometry, Location};

/// Finitely many weighted atoms in the closed ball `H^d ∪ ∂H^d`.
///
/// Weights are stored as raw values together with a common normalizer, so
/// a measure normalized by its own raw total has mass exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    dim: usize,
    coords: Vec<f64>,
    ideal: Vec<bool>,
    raw: Vec<f64>,
    normalizer: f64,
}

impl AtomicMeasure {
    pub fn new(dim: usize) -> Self {
        AtomicMeasure { dim, coords: Vec::new(), ideal: Vec::new(), raw: Vec::new(), normalizer: 1.0 }
    }

    pub fn from_atoms(dim: usize, atoms: impl IntoIterator<Item = (Location, f64)>) -> Result<Self, MeasureError> {
        let mut m = AtomicMeasure::new(dim);
        for (loc, w) in atoms {
            m.push(loc, w)?;
        }
        Ok(m)
    }

    /// Builds a measure from ambient coordinates without validation.
    pub(crate) fn from_parts(dim: usize, coords: Vec<f64>, ideal: Vec<bool>, raw: Vec<f64>, normalizer: f64) -> Self {
        debug_assert_eq!(coords.len(), ideal.len() * (dim + 1));
        debug_assert_eq!(raw.len(), ideal.len());
        AtomicMeasure { dim, coords, ideal, raw, normalizer }
    }

    pub fn push(&mut self, loc: Location, weight: f64) -> Result<(), MeasureError> {
        if loc.dim() != self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, got: loc.dim() });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(MeasureError::InvalidWeight(weight));
        }
        self.coords.extend_from_slice(loc.as_slice());
        self.ideal.push(loc.is_ideal());
        self.raw.push(weight * self.normalizer);
        Ok(())
    }

    /// A single unit atom.
    pub fn dirac(loc: Location) -> Self {
        let dim = loc.dim();
        AtomicMeasure::from_atoms(dim, [(loc, 1.0)]).expect("unit weight")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.raw[i] / self.normalizer
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw.iter().map(move |r| r / self.normalizer)
    }

    /// Ambient coordinates of atom `i` (an interior point or a normalized ray).
    pub fn location_slice(&self, i: usize) -> &[f64] {
        let n = self.dim + 1;
        &self.coords[i * n..(i + 1) * n]
    }

    pub fn is_ideal(&self, i: usize) -> bool {
        self.ideal[i]
    }

    pub fn location(&self, i: usize) -> Location {
        let v = self.location_slice(i).to_vec();
        if self.ideal[i] {
            Location::Ideal(IdealPoint::from_ray_unchecked(v))
        } else {
            Location::Interior(HPoint::from_raw(v))
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = (Location, f64)> + '_ {
        (0..self.len()).map(move |i| (self.location(i), self.weight(i)))
    }

    /// Total mass `Σ raw / normalizer`, summed in atom order.
    pub fn mass(&self) -> f64 {
        self.raw.iter().sum::<f64>() / self.normalizer
    }

    /// Pushforward by an isometry: atoms move, weights are unchanged.
    pub fn push_forward(&self, g: &Isometry) -> AtomicMeasure {
        let n = self.dim + 1;
        let mut coords = Vec::with_capacity(self.coords.len());
        for i in 0..self.len() {
            let v = g.apply_vec(self.location_slice(i));
            if self.ideal[i] {
                coords.extend_from_slice(IdealPoint::from_ray_unchecked(v).as_slice());
            } else {
                coords.extend_from_slice(HPoint::from_raw(v).as_slice());
            }
        }
        debug_assert_eq!(coords.len(), self.len() * n);
        AtomicMeasure { coords, ..self.clone() }
    }

    /// Same atoms with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> AtomicMeasure {
        AtomicMeasure { raw: self.raw.iter().map(|r| r * factor).collect(), ..self.clone() }
    }

    /// Same atoms and weights with a new normalizer; the raw weights are rescaled.
    pub fn renormalized(&self, normalizer: f64) -> AtomicMeasure {
        let raw = self.weights().map(|w| w * normalizer).collect();
        AtomicMeasure { raw, normalizer, ..self.clone() }
    }

    /// `Σ w_i f(b_i)` with `b_i` the ball-model coordinates of atom `i`.
    pub fn test_integral(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut b = vec![0.0; self.dim];
        let mut sum = 0.0;
        for i in 0..self.len() {
            ball_coords(self.location_slice(i), self.ideal[i], &mut b);
            sum += self.weight(i) * f(&b);
        }
        sum
    }

    /// Ball-model coordinates of atom `i`.
    pub fn ball_coords(&self, i: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        ball_coords(self.location_slice(i), self.ideal[i], &mut b);
        b
    }

    /// CSV with columns `kind, b1..bd, weight, x0..xd`.
    ///
    /// The ambient columns make the file reload exactly; the ball columns are for plotting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MeasureError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["kind".to_string()];
        header.extend((1..=self.dim).map(|i| format!("b{i}")));
        header.push("weight".into());
        header.extend((0..=self.dim).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![if self.ideal[i] { "ideal" } else { "interior" }.to_string()];
            row.extend(self.ball_coords(i).iter().map(|v| v.to_string()));
            row.push(self.weight(i).to_string());
            row.extend(self.location_slice(i).iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv). Files without ambient
    /// columns (`kind, b1..bd, weight`) are accepted and converted from ball coordinates.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, MeasureError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let nb = header.iter().filter(|h| h.starts_with('b')).count();
        if nb == 0 {
            return Err(MeasureError::Parse("no ball coordinate columns".into()));
        }
        let col = |name: &str| header.iter().position(|h| h == name);
        let kind_col = col("kind").ok_or_else(|| MeasureError::Parse("missing kind column".into()))?;
        let weight_col = col("weight").ok_or_else(|| MeasureError::Parse("missing weight column".into()))?;
        let b_cols: Vec<usize> = (1..=nb).map(|i| col(&format!("b{i}"))).collect::<Option<_>>().ok_or_else(|| {
            MeasureError::Parse("ball coordinate columns must be b1..bd".into())
        })?;
        let x_cols: Option<Vec<usize>> = (0..=nb).map(|i| col(&format!("x{i}"))).collect();
        let mut m = AtomicMeasure::new(nb);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64, MeasureError> {
                rec.get(c)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| MeasureError::Parse(format!("row {}: {e}", line + 2)))
            };
            let ideal = match rec.get(kind_col).unwrap_or("").trim() {
                "ideal" => true,
                "interior" => false,
                other => return Err(MeasureError::Parse(format!("row {}: unknown kind {other:?}", line + 2))),
            };
            let loc = match &x_cols {
                Some(xc) => {
                    let v = xc.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
                    if ideal {
                        Location::Ideal(IdealPoint::from_ray(v)?)
                    } else {
                        Location::Interior(HPoint::from_coords(v)?)
                    }
                }
                None => {
                    let b = b_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
                    if ideal {
                        Location::Ideal(IdealPoint::from_direction(&b)?)
                    } else {
                        Location::Interior(crate::hypgeom::from_ball(&b)?)
                    }
                }
            };
            m.push(loc, num(weight_col)?)?;
        }
        Ok(m)
    }
}

pub(crate) fn ball_coords(v: &[f64], ideal: bool, out: &mut [f64]) {
    let den = if ideal { v[0] } else { 1.0 + v[0] };
    for (o, x) in out.iter_mut().zip(&v[1..]) {
        *o = x / den;
    }
}

/// Optional context attached to serialized measures.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRecord {
    dim: usize,
    normalizer: f64,
    #[serde(default)]
    meta: MeasureMeta,
    atoms: Vec<AtomRecord>,
}

#[derive(Serialize, Deserialize)]
struct AtomRecord {
    #[serde(flatten)]
    location: Location,
    raw: f64,
}

impl AtomicMeasure {
    pub fn to_json(&self, meta: &MeasureMeta) -> serde_json::Value {
        let rec = MeasureRecord {
            dim: self.dim,
            normalizer: self.normalizer,
            meta: meta.clone(),
            atoms: (0..self.len()).map(|i| AtomRecord { location: self.location(i), raw: self.raw[i] }).collect(),
        };
        serde_json::to_value(rec).expect("finite values serialize")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<(Self, MeasureMeta), MeasureError> {
        let rec: MeasureRecord = serde_json::from_value(v.clone()).map_err(|e| MeasureError::Parse(e.to_string()))?;
        let mut m = AtomicMeasure::new(rec.dim);
        for a in rec.atoms {
            if a.location.dim() != rec.dim {
                return Err(MeasureError::DimensionMismatch { expected: rec.dim, got: a.location.dim() });
            }
            m.coords.extend_from_slice(a.location.as_slice());
            m.ideal.push(a.location.is_ideal());
            m.raw.push(a.raw);
        }
        m.normalizer = rec.normalizer;
        Ok((m, rec.meta))
    }
}
