use std::sync::OnceLock;

use psnat_core::barycenter::{
    busemann_average, busemann_average_grad, busemann_average_hessian, solve_barycenter, BarycenterError, Method,
    SolverOptions, VisualKernelProfile,
};
use psnat_core::hypgeom::{
    busemann_grad, chordal_ideal, dist, exp_map, mink, ray_point, tangent_norm, Frame, HPoint, IdealPoint, Isometry,
    Location,
};
use psnat_core::measure::AtomicMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn profile(n: usize) -> &'static VisualKernelProfile {
    static P: [OnceLock<VisualKernelProfile>; 5] = [const { OnceLock::new() }; 5];
    P[n].get_or_init(|| VisualKernelProfile::build(n, 20_000).unwrap())
}

fn ideal(dir: &[f64]) -> IdealPoint {
    IdealPoint::from_direction(dir).unwrap()
}

fn point(dir: &[f64], t: f64) -> HPoint {
    ray_point(&ideal(dir), t)
}

fn random_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / norm).collect()
}

/// Monte-Carlo mean of the Busemann gradient at `y` over `ν_O`, in frame coordinates at `y`.
fn mc_kernel(y: &HPoint, samples: usize, seed: u64) -> Vec<f64> {
    let n = y.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = Frame::standard(y, n);
    let mut acc = vec![0.0; n];
    // Antithetic pairs θ, -θ.
    for _ in 0..samples / 2 {
        let u = random_direction(&mut rng, n);
        let v: Vec<f64> = u.iter().map(|a| -a).collect();
        for d in [u, v] {
            let g = busemann_grad(y, &ideal(&d));
            for (a, c) in acc.iter_mut().zip(frame.coordinates(&g).iter()) {
                *a += c;
            }
        }
    }
    acc.iter().map(|a| a / samples as f64).collect()
}

#[test]
fn profile_matches_closed_forms() {
    let p2 = profile(2);
    let p3 = profile(3);
    for j in 0..=500 {
        let r = j as f64 * 0.05;
        assert!((p2.m(r) - (r / 2.0).tanh()).abs() < 1e-10, "n=2 r={r}");
        let exact3 = if r == 0.0 { 0.0 } else { 1.0 / r.tanh() - r / r.sinh().powi(2) };
        assert!((p3.m(r) - exact3).abs() < 1e-10, "n=3 r={r}");
    }
    for r in [0.013, 0.37, 1.234, 3.3333, 7.77, 19.01, 30.0] {
        assert!((p2.m(r) - (r / 2.0).tanh()).abs() < 1e-5, "n=2 r={r}");
        assert!((p2.g(r) - 2.0 * (r / 2.0).cosh().ln()).abs() < 1e-5, "n=2 G({r})");
        let exact = 1.0 / r.tanh() - r / r.sinh().powi(2);
        assert!((p3.m(r) - exact).abs() < 1e-5, "n=3 r={r}");
        assert!((p3.g(r) - (r / r.tanh() - 1.0)).abs() < 1e-5, "n=3 G({r})");
    }
}

#[test]
fn profile_invariants() {
    for n in 2..=4 {
        let p = profile(n);
        assert_eq!(p.m(0.0), 0.0);
        assert!(p.values().windows(2).all(|w| w[1] >= w[0]));
        assert!(p.m(p.r_max()) > 0.999);
        assert!((p.r_max() - 25.0).abs() < 1e-12);
        for r in [0.1, 1.0, 5.0] {
            // Higher dimension: more of ν_O sits behind O, so the pull is weaker at small r.
            if n > 2 {
                assert!(p.m(r) > profile(n - 1).m(r));
            }
        }
    }
    assert!(VisualKernelProfile::build(1, 20_000).is_err());
    assert!(VisualKernelProfile::build(2, 100).is_err());
}

#[test]
fn profile_agrees_with_monte_carlo_in_three_directions() {
    for n in [2, 3] {
        let p = profile(n);
        for (k, dir) in [vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8], vec![-0.3, 0.5, -0.7]].iter().enumerate() {
            let y = point(&dir[..n], 1.0);
            let v = mc_kernel(&y, 1_000_000, 11 + k as u64);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((norm - p.m(1.0)).abs() < 1e-3, "n={n} dir {k}: {norm} vs {}", p.m(1.0));
            // The mean points away from O: along the first frame vector, which is the radial direction.
            let radial = Frame::standard(&y, n).coordinates(&exp_map_dir(&y));
            let dot: f64 = v.iter().zip(radial.iter()).map(|(a, b)| a * b).sum();
            assert!(dot > 0.99 * norm);
        }
        let far = mc_far_radial(n, 25.0, 1_000_000, 5);
        assert!(far >= 0.999, "{far}");
        assert!((far - p.m(25.0)).abs() < 1e-3);
    }
}

/// Monte-Carlo radial component of the mean Busemann gradient at distance `r`
/// from the basepoint, via the aberration formula for the angle `α'` under
/// which `y` sees a boundary point seen from `O` at angle `α`:
/// `cos α' = (cos α - tanh r) / (1 - tanh r cos α)`, rewritten without cancellation.
/// Hyperboloid coordinates cannot resolve `r = 25`.
fn mc_far_radial(n: usize, r: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one_minus_tanh = 2.0 / ((2.0 * r).exp() + 1.0);
    let tanh = r.tanh();
    let mut acc = 0.0;
    for _ in 0..samples {
        let u = random_direction(&mut rng, n);
        let half = (1.0 - u[0]) / 2.0; // sin²(α/2)
        let cos_seen = (one_minus_tanh - 2.0 * half) / (one_minus_tanh + 2.0 * tanh * half);
        acc -= cos_seen;
    }
    acc / samples as f64
}

/// Unit tangent at `y` pointing away from the basepoint.
fn exp_map_dir(y: &HPoint) -> psnat_core::hypgeom::Tangent {
    let o = HPoint::origin(y.dim());
    let mut v = psnat_core::hypgeom::log_map(y, &o);
    let n = tangent_norm(&v);
    v /= -n;
    v
}

#[test]
fn circle_grid_and_monte_carlo_agree_in_dimension_two() {
    let y = point(&[1.0, 0.0], 1.0);
    let frame = Frame::standard(&y, 2);
    let k = 100_000;
    let mut grid = [0.0; 2];
    for j in 0..k {
        let a = (j as f64 + 0.5) * std::f64::consts::TAU / k as f64;
        let c = frame.coordinates(&busemann_grad(&y, &ideal(&[a.cos(), a.sin()])));
        grid[0] += c[0] / k as f64;
        grid[1] += c[1] / k as f64;
    }
    let mc = mc_kernel(&y, 1_000_000, 99);
    let g = (grid[0] * grid[0] + grid[1] * grid[1]).sqrt();
    let m = (mc[0] * mc[0] + mc[1] * mc[1]).sqrt();
    assert!((g - m).abs() < 1e-3, "{g} vs {m}");
    assert!((g - profile(2).m(1.0)).abs() < 1e-9);
}

#[test]
fn profile_csv_round_trip_and_cache() {
    let p = profile(2);
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let back = VisualKernelProfile::read_csv(buf.as_slice(), 2, 20_000).unwrap();
    assert_eq!(&back, p);

    let dir = tempfile::tempdir().unwrap();
    let a = VisualKernelProfile::cached(Some(dir.path()), 2, 10_000).unwrap();
    assert!(VisualKernelProfile::cache_file(dir.path(), 2, 10_000).exists());
    let b = VisualKernelProfile::cached(Some(dir.path()), 2, 10_000).unwrap();
    assert_eq!(a, b);
}

#[test]
fn smeared_interior_atom_is_its_own_barycenter() {
    for (n, dir, t) in [(2, vec![0.3, 0.9], 1.5), (3, vec![1.0, -1.0, 0.5], 4.0), (3, vec![0.0, 0.0, 1.0], 0.0)] {
        let p = point(&dir, t);
        let beta = AtomicMeasure::dirac(p.clone().into());
        let g = busemann_average_grad(&beta, &p, profile(n)).unwrap();
        assert_eq!(tangent_norm(&g), 0.0);
        let rep = solve_barycenter(&beta, profile(n), &SolverOptions::default()).unwrap();
        assert!(dist(rep.point.as_ref().unwrap(), &p) < 1e-8);
        let far = SolverOptions { init: Some(point(&[1.0; 3][..n], 3.0)), ..Default::default() };
        let rep = solve_barycenter(&beta, profile(n), &far).unwrap();
        assert!(dist(rep.point.as_ref().unwrap(), &p) < 1e-8);
        assert!(rep.convexity_ok);
    }
}

#[test]
fn single_boundary_atom_has_unit_gradient_and_escapes() {
    let theta = ideal(&[0.6, 0.8]);
    let beta = AtomicMeasure::dirac(theta.clone().into());
    for y in [HPoint::origin(2), point(&[1.0, 0.0], 2.0)] {
        let g = busemann_average_grad(&beta, &y, profile(2)).unwrap();
        assert!((tangent_norm(&g) - 1.0).abs() < 1e-12);
    }
    let rep = solve_barycenter(&beta, profile(2), &SolverOptions::default()).unwrap();
    assert!(rep.escaped && rep.point.is_none());
    assert!(chordal_ideal(rep.escape_direction.as_ref().unwrap(), &theta) < 1e-6);
}

#[test]
fn unequal_boundary_pair_escapes_toward_heavier_atom() {
    let t1 = ideal(&[1.0, 0.0]);
    let t2 = ideal(&[-0.2, 1.0]);
    let beta = AtomicMeasure::from_atoms(2, [(t1.clone().into(), 0.4), (t2.clone().into(), 0.6)]).unwrap();
    for method in [Method::Newton, Method::GradientDescent] {
        let rep = solve_barycenter(&beta, profile(2), &SolverOptions { method, ..Default::default() }).unwrap();
        assert!(rep.escaped);
        assert!(rep.grad_norm > 0.1);
        let d = rep.escape_direction.unwrap();
        assert!(chordal_ideal(&d, &t2) < 1e-6, "{method:?}: {d:?}");
    }
}

#[test]
fn equal_boundary_pair_is_degenerate() {
    let beta = AtomicMeasure::from_atoms(3, [
        (ideal(&[1.0, 0.0, 0.0]).into(), 0.5),
        (ideal(&[0.0, 1.0, 0.0]).into(), 0.5),
    ])
    .unwrap();
    assert!(matches!(
        solve_barycenter(&beta, profile(3), &SolverOptions::default()),
        Err(BarycenterError::DegenerateTwoDeltas)
    ));
    // A third atom, even a tiny one, restores a barycenter.
    let mut three = beta.clone();
    three.push(ideal(&[0.0, 0.0, 1.0]).into(), 0.1).unwrap();
    three.push(ideal(&[-1.0, -1.0, -1.0]).into(), 0.1).unwrap();
    assert!(solve_barycenter(&three, profile(3), &SolverOptions::default()).unwrap().point.is_some());
}

#[test]
fn zero_mass_is_rejected() {
    let beta = AtomicMeasure::from_atoms(2, [(HPoint::origin(2).into(), 0.0)]).unwrap();
    assert!(matches!(
        solve_barycenter(&beta, profile(2), &SolverOptions::default()),
        Err(BarycenterError::ZeroMass)
    ));
    assert!(matches!(
        busemann_average_grad(&AtomicMeasure::new(2), &HPoint::origin(2), profile(2)),
        Err(BarycenterError::ZeroMass)
    ));
}

#[test]
fn symmetric_boundary_triple_balances_at_origin() {
    let atoms = (0..3).map(|k| {
        let a = k as f64 * std::f64::consts::TAU / 3.0;
        (Location::from(ideal(&[a.cos(), a.sin()])), 1.0 / 3.0)
    });
    let beta = AtomicMeasure::from_atoms(2, atoms).unwrap();
    let o = HPoint::origin(2);
    assert!(tangent_norm(&busemann_average_grad(&beta, &o, profile(2)).unwrap()) < 1e-12);
    let rep = solve_barycenter(&beta, profile(2), &SolverOptions::default()).unwrap();
    assert!(dist(rep.point.as_ref().unwrap(), &o) < 1e-9);
}

fn mixed_measure(n: usize, rng: &mut ChaCha8Rng) -> AtomicMeasure {
    let mut m = AtomicMeasure::new(n);
    for _ in 0..3 {
        m.push(ideal(&random_direction(rng, n)).into(), rng.random_range(0.1..1.0)).unwrap();
    }
    for _ in 0..4 {
        let p = point(&random_direction(rng, n), rng.random_range(0.0..3.0));
        m.push(p.into(), rng.random_range(0.1..1.0)).unwrap();
    }
    m
}

#[test]
fn barycenter_is_isometry_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in [2, 3] {
        let beta = mixed_measure(n, &mut rng);
        let base = solve_barycenter(&beta, profile(n), &SolverOptions::default()).unwrap();
        let b = base.point.unwrap();
        for _ in 0..20 {
            let g = Isometry::random(n, 2.0, &mut rng);
            let moved = solve_barycenter(&beta.push_forward(&g), profile(n), &SolverOptions::default()).unwrap();
            let d = dist(moved.point.as_ref().unwrap(), &g.apply(&b));
            assert!(d < 1e-7, "n={n}: {d:e}");
        }
    }
}

#[test]
fn newton_and_gradient_descent_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [2, 3] {
        let beta = mixed_measure(n, &mut rng);
        let a = solve_barycenter(&beta, profile(n), &SolverOptions::default()).unwrap();
        let gd = SolverOptions { method: Method::GradientDescent, max_iter: 5000, ..Default::default() };
        let b = solve_barycenter(&beta, profile(n), &gd).unwrap();
        assert!(dist(a.point.as_ref().unwrap(), b.point.as_ref().unwrap()) < 1e-8);
        assert!(a.iterations < b.iterations);
        assert!(a.convexity_ok && b.convexity_ok);
    }
}

#[test]
fn objective_decreases_along_accepted_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for method in [Method::Newton, Method::GradientDescent] {
        let beta = mixed_measure(3, &mut rng);
        let opts = SolverOptions { method, max_iter: 5000, init: Some(point(&[1.0, 2.0, -1.0], 6.0)), ..Default::default() };
        let rep = solve_barycenter(&beta, profile(3), &opts).unwrap();
        assert!(rep.objective_trace.len() > 2);
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{method:?}: {} -> {}", w[0], w[1]);
        }
        let f = busemann_average(&beta, rep.point.as_ref().unwrap(), profile(3)).unwrap();
        assert_eq!(f, rep.objective);
    }
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    for n in [2, 3] {
        let beta = mixed_measure(n, &mut rng);
        for _ in 0..5 {
            let y = point(&random_direction(&mut rng, n), rng.random_range(0.0..2.0));
            let frame = Frame::standard(&y, n);
            let grad = frame.coordinates(&busemann_average_grad(&beta, &y, profile(n)).unwrap());
            let hess = busemann_average_hessian(&beta, &frame, profile(n)).unwrap();
            for (i, e) in frame.vectors().iter().enumerate() {
                let plus = exp_map(&y, &(e * h));
                let minus = exp_map(&y, &(e * -h));
                let fd = (busemann_average(&beta, &plus, profile(n)).unwrap()
                    - busemann_average(&beta, &minus, profile(n)).unwrap())
                    / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "grad {i}: {fd} vs {}", grad[i]);
                // Second derivative along the geodesic in direction e_i.
                let f0 = busemann_average(&beta, &y, profile(n)).unwrap();
                let hh = 1e-4;
                let fp = busemann_average(&beta, &exp_map(&y, &(e * hh)), profile(n)).unwrap();
                let fm = busemann_average(&beta, &exp_map(&y, &(e * -hh)), profile(n)).unwrap();
                let second = (fp - 2.0 * f0 + fm) / (hh * hh);
                assert!((second - hess[(i, i)]).abs() < 1e-4 * (1.0 + hess[(i, i)].abs()), "hess {i}");
            }
        }
    }
}

#[test]
fn barycenter_depends_continuously_on_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for n in [2, 3] {
        let beta = mixed_measure(n, &mut rng);
        let b = solve_barycenter(&beta, profile(n), &SolverOptions::default()).unwrap().point.unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let perturbed = AtomicMeasure::from_atoms(
                n,
                beta.atoms().map(|(l, w)| (l, w * (1.0 + 1e-4 * rng.random_range(-1.0..1.0)))),
            )
            .unwrap();
            let c = solve_barycenter(&perturbed, profile(n), &SolverOptions::default()).unwrap().point.unwrap();
            worst = worst.max(dist(&b, &c) / 1e-4);
        }
        assert!(worst < 1e3, "conditioning constant {worst}");
    }
}

#[test]
fn lorentz_average_start_is_inside_hull() {
    let beta = AtomicMeasure::from_atoms(2, [
        (ideal(&[1.0, 0.0]).into(), 0.5),
        (point(&[0.0, 1.0], 2.0).into(), 0.5),
    ])
    .unwrap();
    let y = psnat_core::barycenter::initial_point(&beta);
    assert!((mink(y.as_slice(), y.as_slice()) + 1.0).abs() < 1e-12);
    assert!(y.as_slice()[1] > 0.0 && y.as_slice()[2] > 0.0);
    let _ = exp_map(&y, &busemann_average_grad(&beta, &y, profile(2)).unwrap());
}
