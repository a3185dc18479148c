//! Equilibrium solver against closed-form oracles.
//!
//! On the unit sphere in R^3 with α = 1 the uniform probability measure has
//! potential exactly 1 at every point of the sphere and at its centre, so
//! its energy is 1 and it is the unweighted equilibrium measure.

use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};
use riesz_core::energy::{energy, potential};
use riesz_core::equilibrium::{
    frostman_check, inverse_equilibrium, solve_equilibrium, SolverParams, Start, SUPPORT_THRESHOLD,
};
use riesz_core::geometry::generate_mesh;
use riesz_core::{CompactSet, DiagonalPolicy, ExternalField, RieszKernel};

fn sphere_mesh(n: usize) -> riesz_core::Mesh {
    generate_mesh(&CompactSet::unit_sphere(3).unwrap(), n).unwrap()
}

#[test]
fn uniform_sphere_potential_quadrature() {
    // the excluded self-cell carries about 1/sqrt(N) of the potential
    let mesh = sphere_mesh(5000);
    let mu = mesh.normalized_measure();
    let k = RieszKernel::new(1.0, 3).unwrap();
    let centre = potential(&k, &mu, &[0.0, 0.0, 0.0], None).unwrap();
    assert!((centre - 1.0).abs() < 1e-6, "{centre}");
    for i in [0, 1200, 2500, 4999] {
        let u = potential(&k, &mu, mu.support().get(i), Some(i)).unwrap();
        assert!((u - 1.0).abs() < 0.02, "U at node {i}: {u}");
    }
    let e = energy(&k, &mu, DiagonalPolicy::Exclude);
    assert!((e - 1.0).abs() < 0.02, "{e}");
}

#[test]
fn sphere_equilibrium_is_uniform() {
    let mesh = sphere_mesh(2000);
    let k = RieszKernel::new(1.0, 3).unwrap();
    let q = ExternalField::zero(3);
    let sol = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: 1e-6, ..Default::default() }).unwrap();
    assert!(sol.converged, "gap {} after {}", sol.gap, sol.iterations);
    assert!((sol.value - 1.0).abs() < 0.03, "V_w {}", sol.value);
    assert!((sol.robin - 1.0).abs() < 0.03, "F_w {}", sol.robin);
    let w = sol.weights();
    let m = w.iter().sum::<f64>() / w.len() as f64;
    let sd = (w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64).sqrt();
    assert!(sd / m < 0.05, "cv {}", sd / m);
    let rep = frostman_check(&sol, &k, &q, &mesh, SUPPORT_THRESHOLD, 1e-5).unwrap();
    assert!(rep.max_on_support - rep.global_min < 0.05);
    assert!((rep.min_on_support - 1.0).abs() < 0.05);
    assert!(sol.min_curvature > 0.0);
}

#[test]
fn roundtrip_on_circle() {
    let mesh = generate_mesh(&CompactSet::unit_circle(3).unwrap(), 200).unwrap();
    let k = RieszKernel::new(0.5, 3).unwrap();
    let policy = DiagonalPolicy::Truncate(riesz_core::energy::default_truncation(&k, mesh.spacing));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    for _ in 0..3 {
        let raw: Vec<f64> = (0..mesh.len()).map(|_| gamma.sample(&mut rng)).collect();
        let s: f64 = raw.iter().sum();
        let tau = mesh.reference_measure().with_weights(raw.iter().map(|w| w / s).collect()).unwrap();
        let q = inverse_equilibrium(&tau, &k, policy).unwrap();
        let p = SolverParams { gap_tol: 1e-10, diagonal_policy: Some(policy), ..Default::default() };
        let sol = solve_equilibrium(&mesh, &k, &q, &p).unwrap();
        assert!(sol.converged, "gap {} after {}", sol.gap, sol.iterations);
        let err = sol.weights().iter().zip(tau.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "sup error {err}");
    }
}

#[test]
fn different_starting_vertices_agree() {
    let mesh = sphere_mesh(300);
    let k = RieszKernel::new(1.0, 3).unwrap();
    let q = ExternalField::expression("2*x3^2 - x1", 3).unwrap();
    let tol = 1e-10;
    let a = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: tol, start: Start::Vertex(0), ..Default::default() })
        .unwrap();
    let b = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: tol, start: Start::Vertex(299), ..Default::default() })
        .unwrap();
    assert!(a.converged && b.converged);
    let diff = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 10.0 * tol, "{diff}");
}

#[test]
fn perturbed_weights_violate_frostman() {
    let mesh = sphere_mesh(400);
    let k = RieszKernel::new(1.0, 3).unwrap();
    let q = ExternalField::zero(3);
    let mut sol = solve_equilibrium(&mesh, &k, &q, &SolverParams { gap_tol: 1e-9, ..Default::default() }).unwrap();
    let mut w = sol.weights().to_vec();
    w[17] *= 1.1;
    let s: f64 = w.iter().sum();
    sol.measure = sol.measure.with_weights(w.iter().map(|x| x / s).collect()).unwrap();
    let rep = frostman_check(&sol, &k, &q, &mesh, SUPPORT_THRESHOLD, 1e-8).unwrap();
    assert!(rep.violation_count > 0);
}
