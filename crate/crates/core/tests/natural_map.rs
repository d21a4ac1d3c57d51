use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use psnat_core::barycenter::{busemann_average_grad, VisualKernelProfile};
use psnat_core::group_orbit::{enumerate_ball, presets, BallOptions, GroupBall, GroupSpec};
use psnat_core::hypgeom::{dist, exp_map, log_map, ray_point, to_ball, Frame, HPoint, IdealPoint, Isometry};
use psnat_core::measure::{ms_measure, AtomicMeasure};
use psnat_core::natural_map::{
    classify, differential, dirichlet_sample, epsilon_sweep, hyperbolic_ball_volume, implicit_residual, jac_p,
    jacobian_bound, lipschitz_estimate, natural_map_eval, nonelementary_check, properly_ends_diagnostic, target_measure,
    volume_estimate, ElementaryVerdict, IsometryType, MapError, NaturalMap, Representation, Truncation,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn profile(n: usize) -> &'static VisualKernelProfile {
    static P: [OnceLock<VisualKernelProfile>; 4] = [const { OnceLock::new() }; 4];
    P[n].get_or_init(|| VisualKernelProfile::build(n, 20_000).unwrap())
}

fn sanov_ball(r: f64) -> &'static GroupBall {
    static B: OnceLock<Vec<(f64, GroupBall)>> = OnceLock::new();
    let all = B.get_or_init(|| {
        [0.5, 6.0, 8.0, 10.0].iter().map(|&r| (r, enumerate_ball(&presets::sanov(), &BallOptions::new(r)).unwrap())).collect()
    });
    &all.iter().find(|(q, _)| *q == r).expect("preset radius").1
}

fn sanov_identity() -> &'static Representation {
    static R: OnceLock<Representation> = OnceLock::new();
    R.get_or_init(|| Representation::identity(&presets::sanov()))
}

fn near_origin(v: &[f64]) -> HPoint {
    let mut t = vec![0.0];
    t.extend_from_slice(v);
    exp_map(&HPoint::origin(v.len()), &DVector::from_vec(t))
}

fn generators(ball: &GroupBall) -> Vec<usize> {
    (1..ball.len()).filter(|&i| ball.word(i).len() == 1).collect()
}

#[test]
fn trivial_ball_has_a_single_target_atom_at_d0() {
    let ball = sanov_ball(0.5);
    assert_eq!(ball.len(), 1);
    let a = Isometry::boost(3, 2, 0.7);
    let rep = Representation::equatorial(&presets::sanov()).unwrap().conjugated(&a);
    let beta = target_measure(ball, &rep, &near_origin(&[0.1, 0.2]), 1.2).unwrap();
    assert_eq!(beta.len(), 1);
    assert!(dist(&HPoint::from_coords(beta.location_slice(0).to_vec()).unwrap(), &a.apply(&HPoint::origin(3))) < 1e-12);
}

#[test]
fn identity_targets_are_the_orbit() {
    let ball = sanov_ball(6.0);
    let beta = target_measure(ball, sanov_identity(), &HPoint::origin(2), 1.1).unwrap();
    assert_eq!(beta.len(), ball.len());
    for i in 0..ball.len() {
        let d: f64 = beta.location_slice(i).iter().zip(ball.orbit_slice(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-9 * ball.orbit_slice(i)[0], "atom {i}");
    }
}

#[test]
fn target_atoms_match_right_to_left_word_products() {
    let ball = sanov_ball(6.0);
    let a = Isometry::boost(3, 1, 0.4).compose(&Isometry::rotation(3, 2, 3, 0.3));
    let rep = Representation::equatorial(&presets::sanov()).unwrap().conjugated(&a);
    let beta = target_measure(ball, &rep, &HPoint::origin(2), 1.1).unwrap();
    for i in (0..ball.len()).step_by(7) {
        let mut p = rep.d0().clone();
        for &g in ball.word(i).iter().rev() {
            p = rep.image(g as usize).apply(&p);
        }
        let q = HPoint::from_coords(beta.location_slice(i).to_vec()).unwrap();
        assert!(dist(&p, &q) < 1e-8, "word {}", ball.word_string(i));
    }
}

#[test]
fn target_mass_matches_smeared_orbit_measure() {
    let ball = sanov_ball(6.0);
    let x = near_origin(&[0.3, -0.4]);
    let beta = target_measure(ball, sanov_identity(), &x, 1.3).unwrap();
    let sigma = AtomicMeasure::dirac(psnat_core::hypgeom::Location::Interior(HPoint::origin(2)));
    let ms = ms_measure(ball, &x, 1.3, &sigma).unwrap();
    assert!((beta.mass() - ms.mass()).abs() < 1e-12);
}

#[test]
fn identity_map_fixes_the_basepoint() {
    // Oracle: the orbit is centrally symmetric (z ↦ -1/z normalizes the group),
    // so atoms pair with their antipodes at equal weight and the gradient at O vanishes.
    let ball = sanov_ball(8.0);
    let mut pts: Vec<Vec<f64>> = (0..ball.len()).map(|i| to_ball(&ball.orbit(i))).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    for i in 0..ball.len() {
        let p = to_ball(&ball.orbit(i));
        let q = [-p[0], -p[1]];
        let j = pts.partition_point(|a| a[0] < q[0] - 1e-9);
        assert!(pts[j..].iter().take_while(|a| a[0] <= q[0] + 1e-9).any(|a| (a[1] - q[1]).abs() < 1e-9), "no antipode for {i}");
    }
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    let o = HPoint::origin(2);
    let g = busemann_average_grad(&map.target_measure(&o), &o, profile(2)).unwrap();
    assert!(g.norm() < 1e-12);
    let e = map.eval(&o).unwrap();
    assert!(dist(e.value.as_ref().unwrap(), &o) < 1e-6);
    assert!(!e.report.escaped);
}

#[test]
fn equivariance_residual_shrinks_with_the_ball() {
    let rep = sanov_identity().clone();
    let x = near_origin(&[0.3, 0.2]);
    let res = |r: f64| {
        let ball = sanov_ball(r);
        let map = NaturalMap::new(ball, &rep, profile(2), 0.2, 1.0).unwrap();
        map.equivariance_residual(&x, &generators(ball)).unwrap()
    };
    let (r6, r10) = (res(6.0), res(10.0));
    assert!(r10 < r6, "{r10} vs {r6}");
    assert!(r6 < 0.3, "{r6}");
    assert!(r10 < 0.05, "{r10}");
}

#[test]
fn conjugating_the_representation_moves_the_map() {
    let ball = sanov_ball(6.0);
    let rep = sanov_identity().clone();
    let a = Isometry::boost(2, 1, 0.6).compose(&Isometry::rotation(2, 1, 2, 1.1));
    let conj = rep.conjugated(&a);
    let f = NaturalMap::new(ball, &rep, profile(2), 0.2, 1.0).unwrap();
    let g = NaturalMap::new(ball, &conj, profile(2), 0.2, 1.0).unwrap();
    for v in [[0.0, 0.0], [0.4, -0.1], [-0.2, 0.7]] {
        let x = near_origin(&v);
        assert!(dist(&g.point(&x).unwrap(), &a.apply(&f.point(&x).unwrap())) < 1e-7);
    }
}

#[test]
fn differential_of_simple_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = near_origin(&[0.3, -0.2, 0.5]);
    let frame = Frame::random(&x, 3, &mut rng);

    let (d, _) = differential(|p: &HPoint| Ok(p.clone()), &frame, 1e-3).unwrap();
    for s in d.singular_values().iter() {
        assert!((s - 1.0).abs() < 1e-5);
    }

    let c = near_origin(&[1.0, 0.0, 0.0]);
    let (d, _) = differential(|_: &HPoint| Ok(c.clone()), &frame, 1e-3).unwrap();
    assert!(d.norm() < 1e-6);

    let g = Isometry::random(3, 2.0, &mut rng);
    let (d, gx) = differential(|p: &HPoint| Ok(g.apply(p)), &frame, 1e-4).unwrap();
    for s in d.singular_values().iter() {
        assert!((s - 1.0).abs() < 1e-6);
    }
    // First-order agreement: the geodesic image and its linearization differ by O(h³).
    let out = Frame::standard(&gx, 3);
    let v = frame.vectors()[0].clone();
    let err = |h: f64| {
        let moved = g.apply(&exp_map(&x, &(&v * h)));
        let lin = exp_map(&gx, &out.combine(&(&d.column(0) * h).as_slice().to_vec()));
        dist(&moved, &lin)
    };
    assert!(err(1e-2) < 1e-6, "{}", err(1e-2));
}

#[test]
fn differential_rejects_bad_steps() {
    let frame = Frame::standard(&HPoint::origin(2), 2);
    for h in [1e-6, 0.1] {
        assert!(matches!(differential(|p: &HPoint| Ok(p.clone()), &frame, h), Err(MapError::InvalidArgument(_))));
    }
}

#[test]
fn singular_values_do_not_depend_on_the_frame() {
    let ball = sanov_ball(6.0);
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    let x = near_origin(&[0.2, 0.3]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sv = |f: &Frame| {
        let (d, _) = differential(|p| map.point(p), f, 1e-4).unwrap();
        let mut s: Vec<f64> = d.singular_values().iter().copied().collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let a = sv(&Frame::random(&x, 2, &mut rng));
    let b = sv(&Frame::random(&x, 2, &mut rng));
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-4, "{a:?} {b:?}");
    }
    assert!(lipschitz_estimate(|p| map.point(p), &Frame::standard(&x, 2), 1e-3).unwrap() < 2.0);
}

#[test]
fn jacobian_of_fixed_matrices() {
    assert!((jac_p(&DMatrix::identity(3, 3), 3).unwrap() - 1.0).abs() < 1e-15);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5]));
    assert!((jac_p(&d, 2).unwrap() - 2.0).abs() < 1e-14);
    assert!(jac_p(&d, 0).is_err() && jac_p(&d, 4).is_err());
    assert!((jacobian_bound(2.0, 0.1, 3) - 1.331).abs() < 1e-12);
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

#[test]
fn jacobian_is_the_largest_frame_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    use rand::Rng;
    for _ in 0..5 {
        let d = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        for p in 1..=3 {
            let exact = jac_p(&d, p).unwrap();
            let mut best: f64 = 0.0;
            for _ in 0..4000 {
                let u = orthonormal_columns(DMatrix::from_fn(3, p, |_, _| rng.random_range(-1.0..1.0)));
                let w = &d * u;
                let vol = (w.transpose() * &w).determinant().max(0.0).sqrt();
                assert!(vol <= exact * (1.0 + 1e-10));
                best = best.max(vol);
            }
            assert!(best > 0.9 * exact, "p={p}: {best} vs {exact}");
        }
    }
}

proptest! {
    #[test]
    fn jacobian_is_invariant_under_rotations(
        entries in prop::collection::vec(-2.0f64..2.0, 9),
        a in prop::collection::vec(-1.0f64..1.0, 9),
        b in prop::collection::vec(-1.0f64..1.0, 9),
        p in 1usize..=3,
    ) {
        let d = DMatrix::from_vec(3, 3, entries);
        let u = orthonormal_columns(DMatrix::from_vec(3, 3, a) + DMatrix::identity(3, 3) * 3.0);
        let v = orthonormal_columns(DMatrix::from_vec(3, 3, b) + DMatrix::identity(3, 3) * 3.0);
        let j0 = jac_p(&d, p).unwrap();
        let j1 = jac_p(&(&u * &d * v.transpose()), p).unwrap();
        prop_assert!((j0 - j1).abs() <= 1e-10 * (1.0 + j0));
    }
}

#[test]
fn ball_volume_closed_forms() {
    for r in [0.5f64, 2.0, 5.0] {
        let v2 = 2.0 * std::f64::consts::PI * (r.cosh() - 1.0);
        let v3 = std::f64::consts::PI * ((2.0 * r).sinh() - 2.0 * r);
        assert!((hyperbolic_ball_volume(2, r) / v2 - 1.0).abs() < 1e-9);
        assert!((hyperbolic_ball_volume(3, r) / v3 - 1.0).abs() < 1e-9);
    }
}

#[test]
fn dirichlet_sampler_recovers_the_quotient_area() {
    let ball = sanov_ball(8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ds = dirichlet_sample(ball, 4.0, 4000, &mut rng).unwrap();
    assert_eq!(ds.points.len(), 4000);
    // Four cusps cut off beyond radius 4 remove a few percent of 2π.
    let ratio = ds.volume() / (2.0 * std::f64::consts::PI);
    assert!((0.9..1.03).contains(&ratio), "{ratio}");
    assert!(ds.points.iter().all(|p| dist(p, &HPoint::origin(2)) <= 4.0 + 1e-12));
    assert!(dirichlet_sample(ball, 4.5, 10, &mut rng).is_err());
}

#[test]
fn volume_of_identity_and_constant_maps() {
    let ball = sanov_ball(6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ds = dirichlet_sample(ball, 3.0, 500, &mut rng).unwrap();
    let samples = ds.weighted();
    let v = volume_estimate(|p: &HPoint| Ok(p.clone()), &samples, 1e-4).unwrap();
    assert!((v / ds.volume() - 1.0).abs() < 0.02);
    let c = near_origin(&[0.5, 0.5]);
    assert!(volume_estimate(|_: &HPoint| Ok(c.clone()), &samples, 1e-4).unwrap().abs() < 1e-6);
    let doubled: Vec<(HPoint, f64)> = samples.iter().map(|(p, w)| (p.clone(), 2.0 * w)).collect();
    let v2 = volume_estimate(|p: &HPoint| Ok(p.clone()), &doubled, 1e-4).unwrap();
    assert!((v2 - 2.0 * v).abs() < 1e-12 * v.abs());
}

#[test]
fn epsilon_sweep_stays_at_the_basepoint() {
    let ball = sanov_ball(8.0);
    let rep = sanov_identity().clone();
    let o = HPoint::origin(2);
    let sweep = epsilon_sweep(&o, ball, &rep, &[0.5, 0.25, 0.1], 1.0, profile(2)).unwrap();
    for e in &sweep.evals {
        assert!(dist(e.value.as_ref().unwrap(), &o) < 1e-6);
    }
    assert!(sweep.increments.iter().all(|&d| d < 1e-6));
    // e^{-0.1 · 8} ≈ 0.45.
    assert!(sweep.truncation_dominates);

    let x = near_origin(&[0.2, -0.1]);
    let one = epsilon_sweep(&x, ball, &rep, &[0.3], 1.0, profile(2)).unwrap();
    let direct = natural_map_eval(&x, ball, &rep, 0.3, 1.0, profile(2)).unwrap();
    assert_eq!(one.evals[0], direct);
    assert!(one.increments.is_empty());

    assert!(epsilon_sweep(&o, ball, &rep, &[0.1, 0.2], 1.0, profile(2)).is_err());
    assert!(epsilon_sweep(&o, ball, &rep, &[0.2, 0.0], 1.0, profile(2)).is_err());
}

#[test]
fn implicit_equation_residual_vanishes_with_the_step() {
    let ball = sanov_ball(6.0);
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    for v in [[0.3, 0.2], [-0.5, 0.1]] {
        let frame = Frame::standard(&near_origin(&v), 2);
        let coarse = implicit_residual(&map, &frame, 1e-2).unwrap();
        let fine = implicit_residual(&map, &frame, 1e-3).unwrap();
        assert!(coarse < 1e-3, "{coarse}");
        assert!(fine < coarse / 10.0, "{fine} vs {coarse}");
    }
}

fn cyclic_images(source: &GroupSpec, gens: &[Isometry]) -> Representation {
    let images = source.generators().iter().filter(|g| g.label.chars().all(|c| c.is_lowercase())).map(|g| g.label.clone());
    Representation::new(source, images.zip(gens.iter().cloned()).collect(), HPoint::origin(gens[0].dim())).unwrap()
}

#[test]
fn elementarity_verdicts() {
    let sanov = presets::sanov();
    assert_eq!(nonelementary_check(sanov_identity()), ElementaryVerdict::Nonelementary);
    assert_eq!(nonelementary_check(&Representation::equatorial(&sanov).unwrap()), ElementaryVerdict::Nonelementary);
    // Both generators are parabolic with distinct fixed points.
    let fixed: Vec<IdealPoint> = sanov_identity()
        .images()
        .iter()
        .take(2)
        .map(|g| match classify(g) {
            IsometryType::Parabolic { fixed } => fixed,
            t => panic!("{t:?}"),
        })
        .collect();
    assert!(psnat_core::hypgeom::chordal_ideal(&fixed[0], &fixed[1]) > 1.0);

    let t = Isometry::boost(3, 1, 0.8);
    let boosts = cyclic_images(&sanov, &[t.clone(), t.compose(&t).compose(&t)]);
    assert!(matches!(nonelementary_check(&boosts), ElementaryVerdict::InvariantPair { .. }));

    // Parabolics fixing the same point: conjugates of translations of the upper half-space.
    let p1 = psnat_core::hypgeom::lift_sl2(&psnat_core::hypgeom::Sl2Matrix::Real([[1.0, 1.0], [0.0, 1.0]])).unwrap();
    let p2 = psnat_core::hypgeom::lift_sl2(&psnat_core::hypgeom::Sl2Matrix::Real([[1.0, 3.0], [0.0, 1.0]])).unwrap();
    let para = cyclic_images(&sanov, &[p1, p2]);
    assert!(matches!(nonelementary_check(&para), ElementaryVerdict::FixedPoint { .. }));
    let ball = sanov_ball(6.0);
    assert!(matches!(NaturalMap::new(ball, &para, profile(2), 0.2, 1.0), Err(MapError::ElementaryImage(_))));
}

#[test]
fn map_rejects_mismatched_inputs() {
    let ball = sanov_ball(6.0);
    let eq = Representation::equatorial(&presets::sanov()).unwrap();
    assert!(NaturalMap::new(ball, &eq, profile(2), 0.2, 1.0).is_err());
    assert!(NaturalMap::new(ball, sanov_identity(), profile(2), 0.0, 1.0).is_err());
    let fig8 = enumerate_ball(&presets::figure_eight(), &BallOptions::new(2.0)).unwrap();
    assert!(matches!(
        target_measure(&fig8, sanov_identity(), &HPoint::origin(3), 1.0),
        Err(MapError::InvalidArgument(_)) | Err(MapError::RepresentationIncomplete(_))
    ));
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    assert!(map.eval(&HPoint::origin(3)).is_err());
    assert!(map.clone().with_truncation(Truncation::Local { radius: 7.0 }).is_err());
}

#[test]
fn truncation_variants() {
    let ball = sanov_ball(8.0);
    let rep = sanov_identity().clone();
    let o = HPoint::origin(2);
    let plain = NaturalMap::new(ball, &rep, profile(2), 0.2, 1.0).unwrap();
    let local = plain.clone().with_truncation(Truncation::Local { radius: 8.0 }).unwrap();
    let (a, b) = (plain.target_measure(&o), local.target_measure(&o));
    assert_eq!(a.len(), b.len());
    for i in 0..a.len() {
        assert!((a.weight(i) - b.weight(i)).abs() <= 1e-14 * a.weight(i).max(1e-300));
    }

    let shell = plain.clone().with_truncation(Truncation::ShellTail { width: 1.0 }).unwrap();
    let c = shell.target_measure(&o);
    let factor = 1.0 / (1.0 - (-0.2f64).exp());
    for i in 0..a.len() {
        let expect = if ball.radius(i) > 7.0 { factor } else { 1.0 };
        assert!((c.weight(i) / a.weight(i) - expect).abs() < 1e-12);
    }

    // With the orbit cut around each point, equivariance is exact up to the solver.
    let x = near_origin(&[0.2, 0.1]);
    let local = plain.with_truncation(Truncation::Local { radius: 5.0 }).unwrap();
    assert!(local.equivariance_residual(&x, &generators(ball)).unwrap() < 1e-6);
}

#[test]
fn shadow_measure_is_a_probability() {
    let ball = sanov_ball(8.0);
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    let w = IdealPoint::from_direction(&[0.6, 0.8]).unwrap();
    let m = map.shadow_measure(&w, 0.2).unwrap();
    assert!((m.mass() - 1.0).abs() < 1e-12);
    assert!(m.len() > 10);
    assert!(map.shadow_measure(&w, 1e-9).is_err());
}

#[test]
fn map_along_a_cusp_ray_heads_to_the_cusp() {
    let ball = sanov_ball(8.0);
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    let a = ball.find_word(&[0]).unwrap();
    let report = properly_ends_diagnostic(&map, a, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(report.approaching, "{:?}", report.chordal);
    assert!(report.chordal[3] < report.chordal[0]);
    let b = ball.find_word(&[0, 1]).unwrap();
    assert!(properly_ends_diagnostic(&map, b, &[1.0]).is_err());
}

#[test]
fn points_far_out_still_converge() {
    let ball = sanov_ball(10.0);
    let map = NaturalMap::new(ball, sanov_identity(), profile(2), 0.2, 1.0).unwrap();
    let w = IdealPoint::from_direction(&[0.3, -1.0]).unwrap();
    for t in [6.0, 8.0, 9.0] {
        let x = ray_point(&w, t);
        let e = map.eval(&x).unwrap();
        let y = e.value.unwrap();
        let v = log_map(&HPoint::origin(2), &y);
        let dir: Vec<f64> = v.as_slice()[1..].to_vec();
        let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
        let cos = (dir[0] * w.direction()[0] + dir[1] * w.direction()[1]) / norm;
        assert!(cos > 0.99, "t={t}: {cos}");
    }
}
