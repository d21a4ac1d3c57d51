//! Groups used in examples, tests and benchmarks.

use num_complex::Complex64;

use super::GroupSpec;
use crate::hypgeom::{embed_isometry, lift_sl2, Isometry, Sl2Matrix};

/// Level-2 congruence subgroup generated by `[[1,2],[0,1]]` and `[[1,0],[2,1]]`.
///
/// A thrice-punctured sphere group: quotient area `2π`, critical exponent 1.
pub fn sanov() -> GroupSpec {
    GroupSpec::from_sl2(sanov_matrices()).expect("valid generators")
}

pub fn sanov_matrices() -> Vec<(String, Sl2Matrix)> {
    vec![
        ("a".into(), Sl2Matrix::Real([[1.0, 2.0], [0.0, 1.0]])),
        ("b".into(), Sl2Matrix::Real([[1.0, 0.0], [2.0, 1.0]])),
    ]
}

/// Hyperbolic volume of the figure-eight knot complement.
pub const FIGURE_EIGHT_VOLUME: f64 = 2.029_883_212_819_307;

/// Riley's parabolic generators `[[1,1],[0,1]]`, `[[1,0],[-ω,1]]` with `ω = e^{2πi/3}`.
pub fn figure_eight() -> GroupSpec {
    GroupSpec::from_sl2(figure_eight_matrices()).expect("valid generators")
}

pub fn figure_eight_matrices() -> Vec<(String, Sl2Matrix)> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let w = c(-0.5, 3f64.sqrt() / 2.0);
    vec![
        ("x".into(), Sl2Matrix::Complex([[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]])),
        ("y".into(), Sl2Matrix::Complex([[c(1.0, 0.0), c(0.0, 0.0)], [-w, c(1.0, 0.0)]])),
    ]
}

/// The Sanov group acting on `H^3` through `SL(2,R) ⊂ SL(2,C)`, preserving the plane `x2 = 0`.
pub fn sanov_in_h3() -> GroupSpec {
    let gens = sanov_matrices()
        .into_iter()
        .map(|(l, m)| {
            let g = lift_sl2(&m).expect("det 1");
            (l, embed_isometry(&g).expect("dimension 2"))
        })
        .collect();
    GroupSpec::new(3, gens).expect("valid generators")
}

/// Infinite cyclic group generated by a translation of length `t` through `O`.
pub fn cyclic_hyperbolic(dim: usize, t: f64) -> GroupSpec {
    GroupSpec::new(dim, vec![("a".into(), Isometry::boost(dim, 1, t))]).expect("valid generator")
}

/// Rotation of order `n` about `O`.
pub fn elliptic(dim: usize, n: u32) -> GroupSpec {
    let g = Isometry::rotation(dim, 1, 2, 2.0 * std::f64::consts::PI / n as f64);
    GroupSpec::new(dim, vec![("r".into(), g)]).expect("valid generator")
}

/// Translations of length `t` along two perpendicular axes through `O`; free and discrete for `t > 1.77`.
pub fn free_boosts(dim: usize, t: f64) -> GroupSpec {
    GroupSpec::new(
        dim,
        vec![("a".into(), Isometry::boost(dim, 1, t)), ("b".into(), Isometry::boost(dim, 2, t))],
    )
    .expect("valid generators")
}
