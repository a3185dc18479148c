//! Empirical measures, sliced distance, `J` functionals and the rate function.

use proptest::prelude::*;
use riesz_core::energy::default_truncation;
use riesz_core::equilibrium::{solve_equilibrium, SolverParams};
use riesz_core::fekete::FeketeParams;
use riesz_core::geometry::generate_mesh;
use riesz_core::gibbs::{partition_function_quadrature, BaseMeasure, GibbsSpec};
use riesz_core::ldp::*;
use riesz_core::{CompactSet, DiagonalPolicy, DiscreteMeasure, ExternalField, Mesh, Points, RieszKernel};

fn circle_setup(q: ExternalField) -> (GibbsSpec, Mesh) {
    let set = CompactSet::unit_circle(3).unwrap();
    let mesh = generate_mesh(&set, 30).unwrap();
    let base = BaseMeasure::Discrete { measure: mesh.normalized_measure() };
    (GibbsSpec::new(set, base, RieszKernel::new(0.5, 3).unwrap(), q, 3).unwrap(), mesh)
}

#[test]
fn collinear_supports_against_exact_transport() {
    let line = |xs: &[f64]| Points::from_rows(3, &xs.iter().map(|x| [*x, 0.0, 0.0]).collect::<Vec<_>>()).unwrap();
    let a = DiscreteMeasure::new(line(&[0.0, 1.0, 3.0]), vec![0.2, 0.5, 0.3]).unwrap();
    let b = DiscreteMeasure::new(line(&[0.5, 2.0]), vec![0.6, 0.4]).unwrap();
    // CDF difference integrated by hand
    let exact = 0.2 * 0.5 + 0.4 * 0.5 + 0.1 * 1.0 + 0.3 * 1.0;
    let along = line_wasserstein(&a, &b, &[1.0, 0.0, 0.0]).unwrap();
    assert!((along - exact).abs() < 1e-15, "{along} vs {exact}");
    let sliced = measure_distance(&a, &b, DEFAULT_DIRECTIONS, 3).unwrap();
    assert!(sliced <= exact && exact <= 2.0 * 1.05 * sliced, "{sliced} vs {exact}");
}

fn measure_strategy() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((prop::array::uniform3(-2.0f64..2.0), 0.01f64..1.0), 1..8).prop_map(|atoms| {
        let pts = Points::from_rows(3, &atoms.iter().map(|a| a.0).collect::<Vec<_>>()).unwrap();
        let s: f64 = atoms.iter().map(|a| a.1).sum();
        DiscreteMeasure::new(pts, atoms.iter().map(|a| a.1 / s).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn sliced_distance_is_a_pseudometric(a in measure_strategy(), b in measure_strategy(), c in measure_strategy()) {
        let dirs = Directions::new(3, 32, 7).unwrap();
        let ab = dirs.distance(&a, &b).unwrap();
        prop_assert_eq!(ab, dirs.distance(&b, &a).unwrap());
        let ac = dirs.distance(&a, &c).unwrap();
        let cb = dirs.distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert_eq!(dirs.distance(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn whole_space_j_is_the_partition_function() {
    let p = Points::from_rows(3, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
    let mu = DiscreteMeasure::new(p.clone(), vec![0.5, 0.5]).unwrap();
    let spec = GibbsSpec::new(
        CompactSet::point_cloud(p, 1.0).unwrap(),
        BaseMeasure::Discrete { measure: mu.clone() },
        RieszKernel::new(1.0, 3).unwrap(),
        ExternalField::zero(3),
        2,
    )
    .unwrap();
    let dirs = Directions::new(3, 16, 0).unwrap();
    let j = j_functional_estimate(&MeasureBall::whole_space(mu), &spec, JMode::Exhaustive, &dirs, 0).unwrap();
    assert!((j.log_j - (-2.0 - 2f64.ln()) / 4.0).abs() < 1e-15);
    assert_eq!(j.hits, 4);

    let (spec, mesh) = circle_setup(ExternalField::zero(3));
    let exact = partition_function_quadrature(&spec, &mesh).unwrap().log_z / 9.0;
    let ball = MeasureBall::whole_space(mesh.normalized_measure());
    let ex = j_functional_estimate(&ball, &spec, JMode::Exhaustive, &dirs, 0).unwrap();
    assert!((ex.log_j - exact).abs() < 1e-12);
    let est: Vec<f64> = (0..10)
        .map(|s| j_functional_estimate(&ball, &spec, JMode::MonteCarlo { samples: 5000 }, &dirs, s).unwrap().log_j)
        .collect();
    let m = riesz_core::math::mean(&est);
    let se = (riesz_core::math::variance(&est) / 10.0).sqrt();
    assert!((m - exact).abs() < 3.0 * se, "{m} ± {se} vs {exact}");
}

#[test]
fn constant_shift_covariance() {
    let (spec, _) = circle_setup(ExternalField::expression("x1^2 - x2", 3).unwrap());
    let c = -0.42;
    let shifted = GibbsSpec { q: spec.q.shifted(c), ..spec.clone() };
    let dirs = Directions::new(3, 16, 0).unwrap();
    let set = CompactSet::unit_circle(3).unwrap();
    let mesh = generate_mesh(&set, 30).unwrap();
    let ball = MeasureBall::new(mesh.normalized_measure(), 0.3).unwrap();
    let a = j_functional_estimate(&ball, &spec, JMode::Exhaustive, &dirs, 0).unwrap();
    let b = j_functional_estimate(&ball, &shifted, JMode::Exhaustive, &dirs, 0).unwrap();
    assert!(a.hits > 0 && a.hits == b.hits);
    assert!((b.log_j - (a.log_j - 2.0 * c)).abs() < 1e-12);

    let params = SolverParams { gap_tol: 1e-12, ..Default::default() };
    let ea = solve_equilibrium(&mesh, &spec.kernel, &spec.q, &params).unwrap();
    let eb = solve_equilibrium(&mesh, &spec.kernel, &shifted.q, &params).unwrap();
    let center = mesh.normalized_measure();
    let ra = rate_function(&center, &spec.kernel, &spec.q, &ea).unwrap();
    let rb = rate_function(&center, &spec.kernel, &shifted.q, &eb).unwrap();
    assert!((ra - rb).abs() < 1e-10, "{ra} vs {rb}");
}

#[test]
fn rate_function_vanishes_at_equilibrium_and_is_nonnegative() {
    use rand::Rng;
    let set = CompactSet::unit_circle(3).unwrap();
    let mesh = generate_mesh(&set, 120).unwrap();
    let k = RieszKernel::new(0.5, 3).unwrap();
    let q = ExternalField::expression("0.5*x1 + x2^2", 3).unwrap();
    let tol = 1e-10;
    let eq = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: tol, ..Default::default() }).unwrap();
    assert!(rate_function(&eq.measure, &k, &q, &eq).unwrap().abs() <= 10.0 * tol);
    let mut rng = riesz_core::rng::stream(3, 0);
    for _ in 0..20 {
        let w: Vec<f64> = (0..mesh.len()).map(|_| rng.random::<f64>().powi(3)).collect();
        let s: f64 = w.iter().sum();
        let mu = mesh.reference_measure().with_weights(w.iter().map(|x| x / s).collect()).unwrap();
        assert!(rate_function(&mu, &k, &q, &eq).unwrap() >= -10.0 * tol);
    }
}

#[test]
fn point_mass_rates_have_closed_forms() {
    let set = CompactSet::unit_circle(3).unwrap();
    let mesh = generate_mesh(&set, 60).unwrap();
    let k = RieszKernel::new(0.5, 3).unwrap();
    let q = ExternalField::expression("x1", 3).unwrap();
    let x = mesh.points.get(7);
    let dirac = DiscreteMeasure::dirac(x, 1.0).unwrap();

    let p = SolverParams { gap_tol: 1e-10, diagonal_policy: Some(DiagonalPolicy::Exclude), ..Default::default() };
    let excl = solve_equilibrium(&mesh, &k, &q, &p).unwrap();
    let r = rate_function(&dirac, &k, &q, &excl).unwrap();
    assert!((r - (2.0 * x[0] - excl.value)).abs() < 1e-12);

    let m = default_truncation(&k, mesh.spacing);
    let p = SolverParams { gap_tol: 1e-10, diagonal_policy: Some(DiagonalPolicy::Truncate(m)), ..Default::default() };
    let trunc = solve_equilibrium(&mesh, &k, &q, &p).unwrap();
    let r = rate_function(&dirac, &k, &q, &trunc).unwrap();
    assert!((r - (m + 2.0 * x[0] - trunc.value)).abs() < 1e-12);
}

#[test]
fn shrinking_ball_loses_all_hits() {
    let (spec, mesh) = circle_setup(ExternalField::zero(3));
    let dirs = Directions::new(3, 32, 0).unwrap();
    let ball = MeasureBall::new(mesh.normalized_measure(), 1e-6).unwrap();
    let j = j_functional_estimate(&ball, &spec, JMode::MonteCarlo { samples: 2000 }, &dirs, 1).unwrap();
    assert_eq!(j.hits, 0);
    assert!(j.flagged && j.log_j == f64::NEG_INFINITY);
}

fn half_circle(mesh: &Mesh) -> DiscreteMeasure {
    let w: Vec<f64> = mesh.points.iter().map(|x| if x[1] >= 0.0 { 1.0 } else { 0.0 }).collect();
    let s: f64 = w.iter().sum();
    mesh.reference_measure().with_weights(w.iter().map(|x| x / s).collect()).unwrap()
}

#[test]
fn balls_are_ordered_by_rate() {
    let set = CompactSet::unit_circle(3).unwrap();
    let k = RieszKernel::new(0.5, 3).unwrap();
    let mesh = generate_mesh(&set, 100).unwrap();
    let policy = DiagonalPolicy::Truncate(default_truncation(&k, mesh.spacing));
    let q = ExternalField::zero(3);
    let eq = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: 1e-10, diagonal_policy: Some(policy), ..Default::default() })
        .unwrap();
    let spec = GibbsSpec::new(set, BaseMeasure::Continuous { mass: 1.0 }, k, q, 8).unwrap();
    let dirs = Directions::new(3, DEFAULT_DIRECTIONS, 0).unwrap();
    let near = MeasureBall::new(eq.measure.clone(), 0.15).unwrap();
    let far = MeasureBall::new(half_circle(&mesh), 0.15).unwrap();
    let mode = JMode::MonteCarlo { samples: 20000 };
    let a = j_functional_estimate(&near, &spec, mode, &dirs, 5).unwrap();
    let b = j_functional_estimate(&far, &spec, mode, &dirs, 5).unwrap();
    assert!(a.hits > 0 && b.hits > 0);
    assert!(a.log_j >= b.log_j, "{} vs {}", a.log_j, b.log_j);
    assert!(rate_function(&near.center, &spec.kernel, &spec.q, &eq).unwrap() < rate_function(&far.center, &spec.kernel, &spec.q, &eq).unwrap());
}

#[test]
fn fekete_empirical_measures_approach_equilibrium() {
    let set = CompactSet::unit_sphere(3).unwrap();
    let k = RieszKernel::new(1.0, 3).unwrap();
    let q = ExternalField::zero(3);
    let mesh = generate_mesh(&set, 1000).unwrap();
    let eq = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: 1e-7, ..Default::default() }).unwrap();
    let params = FeketeParams { restarts: 2, seed: 1, ..Default::default() };
    let rows = fekete_empirical_convergence(&set, &k, &q, &eq.measure, &[6, 12, 24], &params, DEFAULT_DIRECTIONS).unwrap();
    assert!(rows.windows(2).all(|w| w[1].distance < w[0].distance), "{rows:?}");
}
