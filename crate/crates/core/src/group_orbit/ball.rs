use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GroupSpec, OrbitError};
use crate::hypgeom::{dist_raw, HPoint, IdealPoint, Isometry};

/// Parameters of a ball enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallOptions {
    pub r_max: f64,
    /// Maximum number of stored elements, including those kept only for expansion.
    pub cap: usize,
    /// Words are extended while every prefix has radius at most `r_max + slack`.
    pub slack: f64,
    pub dedup_tol: f64,
    /// When set, every element of radius at most this value is used as an
    /// extra generator. Breadth-first search through all short elements finds
    /// far elements with much less slack.
    #[serde(default)]
    pub closure_radius: Option<f64>,
}

impl BallOptions {
    pub fn new(r_max: f64) -> Self {
        BallOptions { r_max, cap: 20_000_000, slack: 2.0, dedup_tol: 1e-6, closure_radius: None }
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_closure(mut self, radius: f64) -> Self {
        self.closure_radius = Some(radius);
        self
    }
}

/// The elements `γ` of a group with `d(O, γO) <= r_max`, sorted by radius.
///
/// Matrices are stored flat in column-major order, so the orbit point `γO`
/// is the first column.
#[derive(Clone, Debug)]
pub struct GroupBall {
    spec: GroupSpec,
    r_max: f64,
    slack: f64,
    dedup_tol: f64,
    complete: bool,
    near_collisions: usize,
    mats: Vec<f64>,
    aux: Vec<f64>,
    radii: Vec<f64>,
    word_start: Vec<u32>,
    words: Vec<u16>,
    index: DedupIndex,
}

/// Cell hash over ball-model coordinates of the orbit point.
#[derive(Clone, Debug)]
struct DedupIndex {
    cell: f64,
    margin: f64,
    heads: HashMap<u64, u32>,
    next: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl DedupIndex {
    fn new(margin: f64) -> Self {
        DedupIndex { cell: 1e-4, margin, heads: HashMap::new(), next: Vec::new() }
    }

    fn base_key(&self, orbit: &[f64]) -> Vec<(i64, bool, bool)> {
        let den = 1.0 + orbit[0].abs();
        let m = self.margin / self.cell;
        orbit[1..]
            .iter()
            .map(|x| {
                let u = x / den / self.cell;
                let c = u.floor();
                let f = u - c;
                (c as i64, f < m, f > 1.0 - m)
            })
            .collect()
    }

    fn hash(cells: impl Iterator<Item = i64>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in cells {
            h ^= c as u64;
            h = h.wrapping_mul(0x100_0000_01b3).rotate_left(29);
        }
        h
    }

    /// All cells within `margin` of the point.
    fn probe_keys(&self, orbit: &[f64]) -> Vec<u64> {
        let base = self.base_key(orbit);
        let mut keys = vec![Self::hash(base.iter().map(|b| b.0))];
        let flex: Vec<(usize, i64)> = base
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                if b.1 {
                    Some((i, -1))
                } else if b.2 {
                    Some((i, 1))
                } else {
                    None
                }
            })
            .collect();
        for mask in 1u32..(1 << flex.len()) {
            let mut cells: Vec<i64> = base.iter().map(|b| b.0).collect();
            for (bit, (i, off)) in flex.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    cells[*i] += off;
                }
            }
            keys.push(Self::hash(cells.into_iter()));
        }
        keys
    }

    fn insert(&mut self, orbit: &[f64], id: u32) {
        let key = Self::hash(self.base_key(orbit).into_iter().map(|b| b.0));
        debug_assert_eq!(self.next.len(), id as usize);
        let head = self.heads.entry(key).or_insert(NONE);
        self.next.push(*head);
        *head = id;
    }

    fn candidates<'a>(&'a self, keys: &'a [u64]) -> impl Iterator<Item = u32> + 'a {
        keys.iter().flat_map(move |k| {
            let mut cur = self.heads.get(k).copied().unwrap_or(NONE);
            std::iter::from_fn(move || {
                if cur == NONE {
                    return None;
                }
                let id = cur;
                cur = self.next[id as usize];
                Some(id)
            })
        })
    }
}

/// Fixed generic point used to tell apart elements sharing an orbit point.
fn aux_point(dim: usize) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|i| 1.0 + 0.37 * i as f64 + 0.11 * (i * i) as f64).collect();
    let t = 0.7f64;
    let p = crate::hypgeom::ray_point(&IdealPoint::from_direction(&dir).expect("nonzero"), t);
    p.as_slice().to_vec()
}

fn mat_vec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..n {
            s += m[j * n + i] * v[j];
        }
        *o = s;
    }
}

fn mat_mul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for j in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[k * n + i] * b[j * n + k];
            }
            out[j * n + i] = s;
        }
    }
}

fn orbit_radius(col0: &[f64]) -> f64 {
    col0[1..].iter().map(|x| x * x).sum::<f64>().sqrt().asinh()
}

/// Element storage shared by the enumerator and the finished ball.
struct Store {
    n: usize,
    aux_point: Vec<f64>,
    mats: Vec<f64>,
    aux: Vec<f64>,
    radii: Vec<f64>,
    index: DedupIndex,
}

enum Lookup {
    Found,
    Near(u32, f64),
    Missing,
}

impl Store {
    fn new(dim: usize, tol: f64) -> Self {
        Store {
            n: dim + 1,
            aux_point: aux_point(dim),
            mats: Vec::new(),
            aux: Vec::new(),
            radii: Vec::new(),
            index: DedupIndex::new(10.0 * tol),
        }
    }

    fn len(&self) -> usize {
        self.radii.len()
    }

    fn mat(&self, i: usize) -> &[f64] {
        let s = self.n * self.n;
        &self.mats[i * s..(i + 1) * s]
    }

    fn aux_of(&self, i: usize) -> &[f64] {
        &self.aux[i * self.n..(i + 1) * self.n]
    }

    fn separation(&self, i: usize, mat: &[f64], aux: &[f64]) -> f64 {
        let n = self.n;
        dist_raw(&self.mat(i)[..n], &mat[..n]).max(dist_raw(self.aux_of(i), aux))
    }

    fn lookup(&self, mat: &[f64], aux: &[f64], tol: f64) -> Lookup {
        let keys = self.index.probe_keys(&mat[..self.n]);
        let mut near = None;
        for id in self.index.candidates(&keys) {
            let d = self.separation(id as usize, mat, aux);
            if d < tol {
                return Lookup::Found;
            }
            if d < 10.0 * tol && near.is_none() {
                near = Some((id, d));
            }
        }
        match near {
            Some((id, d)) => Lookup::Near(id, d),
            None => Lookup::Missing,
        }
    }

    fn push(&mut self, mat: &[f64], aux: &[f64], radius: f64) -> u32 {
        let id = self.len() as u32;
        self.mats.extend_from_slice(mat);
        self.aux.extend_from_slice(aux);
        self.radii.push(radius);
        self.index.insert(&mat[..self.n], id);
        id
    }
}

struct Candidate {
    parent: u32,
    gen: u32,
    mat: Vec<f64>,
    aux: Vec<f64>,
    radius: f64,
}

/// Breadth-first enumeration of the group ball.
///
/// Each level right-multiplies the previous level by every generator
/// (skipping the immediate backtrack) and keeps products whose radius is at
/// most `r_max + slack`. Products are formed in parallel; insertion is
/// sequential in a fixed order, so the result does not depend on the thread
/// count.
///
/// A pair of distinct words whose matrices land within `(tol, 10 tol)` of
/// each other is logged as a possible non-discreteness symptom and merged,
/// and the ball's tolerance becomes `10 tol`.
pub fn enumerate_ball(spec: &GroupSpec, opts: &BallOptions) -> Result<GroupBall, OrbitError> {
    if !(opts.r_max > 0.0) || !opts.slack.is_finite() || opts.slack < 0.0 || !(opts.dedup_tol > 0.0) {
        return Err(OrbitError::InvalidArgument(format!(
            "need r_max > 0, slack >= 0, dedup_tol > 0 (got {}, {}, {})",
            opts.r_max, opts.slack, opts.dedup_tol
        )));
    }
    let dim = spec.dim();
    let n = dim + 1;
    let limit = opts.r_max + opts.slack;
    let mut tol = opts.dedup_tol;
    let mut near_collisions = 0usize;

    let mut store = Store::new(dim, opts.dedup_tol);
    let steps = expansion_steps(spec, opts)?;
    let gens: Vec<&[f64]> = steps.iter().map(|s| s.mat.as_slice()).collect();
    let inverse: Vec<u32> = steps.iter().map(|s| s.inverse).collect();
    let mut parent: Vec<u32> = vec![NONE];
    let mut via: Vec<u32> = vec![NONE];

    let id = DMatrix::<f64>::identity(n, n);
    let p = store.aux_point.clone();
    store.push(id.as_slice(), &p, 0.0);

    let mut level = 0..1usize;
    let mut complete = true;
    'outer: while !level.is_empty() {
        let next_start = store.len();
        const CHUNK: usize = 1 << 15;
        let mut start = level.start;
        while start < level.end {
            let end = (start + CHUNK).min(level.end);
            let cands: Vec<Candidate> = (start..end)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let g = store.mat(i).to_vec();
                    let back = via[i];
                    let gens = &gens;
                    let inverse = &inverse;
                    let p = &store.aux_point;
                    (0..gens.len()).filter_map(move |s| {
                        if back != NONE && inverse[back as usize] as usize == s {
                            return None;
                        }
                        let mut m = vec![0.0; n * n];
                        mat_mul(&g, gens[s], n, &mut m);
                        let radius = orbit_radius(&m[..n]);
                        if radius > limit {
                            return None;
                        }
                        let mut aux = vec![0.0; n];
                        mat_vec(&m, n, p, &mut aux);
                        Some(Candidate { parent: i as u32, gen: s as u32, mat: m, aux, radius })
                    })
                })
                .collect();
            for c in cands {
                match store.lookup(&c.mat, &c.aux, tol) {
                    Lookup::Found => {}
                    Lookup::Near(other, d) => {
                        near_collisions += 1;
                        log::warn!(
                            "possible non-discrete group: element {} and a new product are {d:e} apart; \
                             merging with tolerance {:e}",
                            other,
                            10.0 * opts.dedup_tol
                        );
                        tol = 10.0 * opts.dedup_tol;
                    }
                    Lookup::Missing => {
                        if store.len() >= opts.cap {
                            complete = false;
                            break 'outer;
                        }
                        store.push(&c.mat, &c.aux, c.radius);
                        parent.push(c.parent);
                        via.push(c.gen);
                    }
                }
            }
            start = end;
        }
        level = next_start..store.len();
    }

    let ball = finish(spec, opts, store, &parent, &via, &steps, tol, near_collisions, complete);
    if complete {
        Ok(ball)
    } else {
        Err(OrbitError::CapExceeded { cap: opts.cap, partial: Box::new(ball) })
    }
}

/// One right-multiplication used by the search, with its word in the original generators.
struct Step {
    mat: Vec<f64>,
    word: Vec<u16>,
    /// Index of the inverse step, or `NONE`.
    inverse: u32,
}

fn expansion_steps(spec: &GroupSpec, opts: &BallOptions) -> Result<Vec<Step>, OrbitError> {
    let basic = || {
        spec.generators()
            .iter()
            .enumerate()
            .map(|(i, g)| Step { mat: g.g.matrix().as_slice().to_vec(), word: vec![i as u16], inverse: g.inverse as u32 })
            .collect::<Vec<_>>()
    };
    let Some(rc) = opts.closure_radius else {
        return Ok(basic());
    };
    if !(rc > 0.0) {
        return Ok(basic());
    }
    let inner = BallOptions { r_max: rc, closure_radius: None, slack: opts.slack.max(2.0), ..opts.clone() };
    let small = enumerate_ball(spec, &inner)?;
    let mut steps: Vec<Step> = (1..small.len())
        .map(|i| Step { mat: small.matrix_slice(i).to_vec(), word: small.word(i).to_vec(), inverse: NONE })
        .collect();
    // Generators lying outside the closure radius are still needed.
    for (i, g) in spec.generators().iter().enumerate() {
        if small.find(&g.g).is_none() {
            steps.push(Step { mat: g.g.matrix().as_slice().to_vec(), word: vec![i as u16], inverse: NONE });
        }
    }
    for i in 0..steps.len() {
        let n = spec.dim() + 1;
        let g = Isometry::from_matrix_unchecked(DMatrix::from_column_slice(n, n, &steps[i].mat)).inverse();
        steps[i].inverse = steps
            .iter()
            .position(|s| {
                let h = Isometry::from_matrix_unchecked(DMatrix::from_column_slice(n, n, &s.mat));
                h.frobenius_distance(&g) < 1e-6 * (1.0 + g.matrix().norm())
            })
            .map_or(NONE, |j| j as u32);
    }
    Ok(steps)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &GroupSpec,
    opts: &BallOptions,
    store: Store,
    parent: &[u32],
    via: &[u32],
    steps: &[Step],
    tol: f64,
    near_collisions: usize,
    complete: bool,
) -> GroupBall {
    let mut order: Vec<usize> = (0..store.len()).filter(|&i| store.radii[i] <= opts.r_max).collect();
    order.sort_by(|&a, &b| store.radii[a].total_cmp(&store.radii[b]).then(a.cmp(&b)));

    let n = store.n;
    let mut ball = GroupBall::empty(spec.clone(), opts.r_max, opts.slack, tol);
    ball.complete = complete;
    ball.near_collisions = near_collisions;
    let mut word = Vec::new();
    for &i in &order {
        word.clear();
        let mut j = i;
        while parent[j] != NONE {
            word.extend(steps[via[j] as usize].word.iter().rev());
            j = parent[j] as usize;
        }
        word.reverse();
        let mat = store.mat(i);
        ball.push(mat, &store.aux[i * n..(i + 1) * n], store.radii[i], &word);
    }
    ball
}

impl GroupBall {
    fn empty(spec: GroupSpec, r_max: f64, slack: f64, tol: f64) -> Self {
        GroupBall {
            spec,
            r_max,
            slack,
            dedup_tol: tol,
            complete: true,
            near_collisions: 0,
            mats: Vec::new(),
            aux: Vec::new(),
            radii: Vec::new(),
            word_start: vec![0],
            words: Vec::new(),
            index: DedupIndex::new(10.0 * tol),
        }
    }

    fn push(&mut self, mat: &[f64], aux: &[f64], radius: f64, word: &[u16]) {
        let n = self.spec.dim() + 1;
        let id = self.radii.len() as u32;
        self.mats.extend_from_slice(mat);
        self.aux.extend_from_slice(aux);
        self.radii.push(radius);
        self.words.extend_from_slice(word);
        self.word_start.push(self.words.len() as u32);
        self.index.insert(&mat[..n], id);
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn dedup_tolerance(&self) -> f64 {
        self.dedup_tol
    }

    /// False when the enumeration stopped at its element cap.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn near_collisions(&self) -> usize {
        self.near_collisions
    }

    /// Radii `d(O, γO)`, nondecreasing.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    /// Column-major matrix entries of element `i`.
    pub fn matrix_slice(&self, i: usize) -> &[f64] {
        let s = (self.dim() + 1).pow(2);
        &self.mats[i * s..(i + 1) * s]
    }

    pub fn isometry(&self, i: usize) -> Isometry {
        let n = self.dim() + 1;
        Isometry::from_matrix_unchecked(DMatrix::from_column_slice(n, n, self.matrix_slice(i)))
    }

    /// Unnormalized orbit point `γO` (first matrix column).
    pub fn orbit_slice(&self, i: usize) -> &[f64] {
        &self.matrix_slice(i)[..self.dim() + 1]
    }

    pub fn orbit(&self, i: usize) -> HPoint {
        HPoint::from_raw(self.orbit_slice(i).to_vec())
    }

    pub fn orbits(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.orbit_slice(i))
    }

    /// Generator indices of the stored word for element `i`.
    pub fn word(&self, i: usize) -> &[u16] {
        &self.words[self.word_start[i] as usize..self.word_start[i + 1] as usize]
    }

    pub fn word_string(&self, i: usize) -> String {
        self.spec.format_word(self.word(i))
    }

    /// Index of the stored element equal to `g` (within the dedup tolerance).
    pub fn find(&self, g: &Isometry) -> Option<usize> {
        let n = self.dim() + 1;
        if g.dim() != self.dim() {
            return None;
        }
        let mat = g.matrix().as_slice();
        let p = aux_point(self.dim());
        let mut aux = vec![0.0; n];
        mat_vec(mat, n, &p, &mut aux);
        let keys = self.index.probe_keys(&mat[..n]);
        let found = self.index.candidates(&keys).map(|id| id as usize).find(|&id| {
            let d = dist_raw(self.orbit_slice(id), &mat[..n]).max(dist_raw(&self.aux[id * n..(id + 1) * n], &aux));
            d < self.dedup_tol.max(1e-6)
        });
        found
    }

    /// Index of the element represented by `word`, if it lies in the ball.
    pub fn find_word(&self, word: &[u16]) -> Option<usize> {
        self.find(&self.spec.evaluate(word))
    }

    /// Writes `index, word, radius, orbit point in ball coordinates`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "word".into(), "radius".into()];
        header.extend((1..=self.dim()).map(|i| format!("b{i}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let o = self.orbit_slice(i);
            let mut row = vec![i.to_string(), self.word_string(i), self.radius(i).to_string()];
            row.extend(o[1..].iter().map(|x| (x / (1.0 + o[0])).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct BallRecord {
    spec: GroupSpec,
    r_max: f64,
    slack: f64,
    dedup_tolerance: f64,
    complete: bool,
    near_collisions: usize,
    elements: Vec<ElementRecord>,
}

#[derive(Serialize, Deserialize)]
struct ElementRecord {
    word: String,
    radius: f64,
    matrix: Vec<f64>,
}

impl Serialize for GroupBall {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rec = BallRecord {
            spec: self.spec.clone(),
            r_max: self.r_max,
            slack: self.slack,
            dedup_tolerance: self.dedup_tol,
            complete: self.complete,
            near_collisions: self.near_collisions,
            elements: (0..self.len())
                .map(|i| ElementRecord {
                    word: self.word_string(i),
                    radius: self.radius(i),
                    matrix: self.matrix_slice(i).to_vec(),
                })
                .collect(),
        };
        rec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupBall {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let rec = BallRecord::deserialize(d)?;
        let n = rec.spec.dim() + 1;
        let p = aux_point(rec.spec.dim());
        let mut ball = GroupBall::empty(rec.spec, rec.r_max, rec.slack, rec.dedup_tolerance);
        ball.complete = rec.complete;
        ball.near_collisions = rec.near_collisions;
        let mut aux = vec![0.0; n];
        for e in rec.elements {
            if e.matrix.len() != n * n {
                return Err(D::Error::custom("matrix has the wrong size"));
            }
            let word = ball.spec.parse_word(&e.word).map_err(D::Error::custom)?;
            mat_vec(&e.matrix, n, &p, &mut aux);
            ball.push(&e.matrix, &aux, e.radius, &word);
        }
        Ok(ball)
    }
}

impl PartialEq for GroupBall {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.r_max == other.r_max
            && self.slack == other.slack
            && self.dedup_tol == other.dedup_tol
            && self.complete == other.complete
            && self.mats == other.mats
            && self.radii == other.radii
            && self.words == other.words
            && self.word_start == other.word_start
    }
}
