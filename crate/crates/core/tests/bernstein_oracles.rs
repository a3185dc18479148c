//! The class `P_n^Q`, its sup norms and the Bernstein and Bernstein–Markov
//! probes.

use rand::Rng;
use riesz_core::bernstein::*;
use riesz_core::geometry::{covering_radius, generate_mesh};
use riesz_core::{CompactSet, DiscreteMeasure, ExternalField, Points, RieszKernel};

fn sphere() -> CompactSet {
    CompactSet::unit_sphere(3).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let set = sphere();
    let mesh = generate_mesh(&set, 500).unwrap();
    let mut rng = riesz_core::rng::stream(21, 0);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let alpha = [0.5, 1.0, 1.5, 2.0][t % 4];
        let n = rng.random_range(2..12);
        let poles = sample_poles(&mesh.points, n - 1, trial_pattern(t), &mut rng).unwrap();
        let f = PnFunction::unweighted(poles, RieszKernel::new(alpha, 3).unwrap()).unwrap();
        // probe in the ambient space, away from the poles
        let y: Vec<f64> = set.sample_uniform(&mut rng).iter().map(|v| 1.3 * v).collect();
        let g = f.gradient(&y).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..3)
            .map(|k| {
                let (mut a, mut b) = (y.clone(), y.clone());
                a[k] += h;
                b[k] -= h;
                (f.log_value(&a).unwrap().exp() - f.log_value(&b).unwrap().exp()) / (2.0 * h)
            })
            .collect();
        let err = riesz_core::math::dist(&g, &fd) / riesz_core::math::norm(&g).max(1e-300);
        worst = worst.max(err);
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn clustered_north_poles_peak_in_the_south() {
    let set = sphere();
    let scan = generate_mesh(&set, 400).unwrap();
    let dense = generate_mesh(&set, 20000).unwrap();
    let north: Vec<[f64; 3]> = (0..6)
        .map(|i| {
            let t = i as f64;
            let v = [0.1 * t.cos(), 0.1 * t.sin(), 1.0];
            let r = (v[0] * v[0] + v[1] * v[1] + 1.0f64).sqrt();
            [v[0] / r, v[1] / r, v[2] / r]
        })
        .collect();
    let f = PnFunction::unweighted(Points::from_rows(3, &north).unwrap(), RieszKernel::new(1.0, 3).unwrap()).unwrap();
    let est = sup_norm_estimate(&f, &set, &scan.points, 30).unwrap();
    let brute = dense.points.iter().map(|y| f.log_value(y).unwrap()).fold(f64::NEG_INFINITY, f64::max);
    assert!(est.log_value >= brute - 1e-9, "{} vs {brute}", est.log_value);
    assert!(est.argmax[2] < -0.95, "{:?}", est.argmax);
}

#[test]
fn sup_norm_clears_the_floor_on_fine_meshes() {
    let set = sphere();
    let mesh = generate_mesh(&set, 3000).unwrap();
    let k = RieszKernel::new(1.0, 3).unwrap();
    let mut rng = riesz_core::rng::stream(4, 0);
    for n in [4, 16, 64] {
        // the mesh must be finer than half the covering radius at n points
        assert!(mesh.max_nearest_neighbor_gap() < covering_radius(&mesh.points, n) / 2.0);
        for t in 0..6 {
            let poles = sample_poles(&mesh.points, n - 1, trial_pattern(t), &mut rng).unwrap();
            let f = PnFunction::unweighted(poles, k).unwrap();
            let s = sup_norm_estimate(&f, &set, &mesh.points, 5).unwrap();
            assert!(s.log_value >= sup_norm_floor(1.0, n, 2.0), "n={n}: {}", s.log_value);
        }
    }
}

#[test]
fn fitted_bound_holds_on_fresh_instances() {
    let mesh = generate_mesh(&sphere(), 600).unwrap();
    let k = RieszKernel::new(1.0, 3).unwrap();
    let fit = bernstein_ratio_probe(&mesh.points, &k, &[2, 4, 8, 16], 20, 2.0, 1).unwrap();
    assert_eq!(fit.beta, 5.0);
    assert!(fit.fitted_beta <= fit.beta + 0.25);
    let fresh = bernstein_ratio_probe(&mesh.points, &k, &[2, 4, 8, 16], 20, 2.0, 2).unwrap();
    for (row, ratios) in fresh.rows.iter().zip(&fresh.ratios) {
        for r in ratios {
            assert!(*r <= 1.01 * fit.constant * (row.n as f64).powf(5.0));
        }
    }
}

#[test]
fn bm_ratios_never_drop_below_reciprocal_mass() {
    let set = sphere();
    let mesh = generate_mesh(&set, 800).unwrap();
    let mu = mesh.reference_measure();
    let q = ExternalField::expression("x1 + x3^2", 3).unwrap();
    let recs = bm_constant_probe(&mu, &set, &RieszKernel::new(1.0, 3).unwrap(), &q, &[4, 8], 10, 3, 9).unwrap();
    for r in recs {
        assert!(r.log_m_hat >= -mu.mass().ln() - 1e-12);
        assert!(r.root > 0.0);
    }
}

#[test]
fn thin_far_component_inflates_the_constant() {
    let a = CompactSet::sphere(vec![0.0, 0.0, 0.0], 1.0).unwrap();
    let b = CompactSet::sphere(vec![4.0, 0.0, 0.0], 1.0).unwrap();
    let set = CompactSet::union(vec![a.clone(), b.clone()]).unwrap();
    let ma = generate_mesh(&a, 300).unwrap();
    let mb = generate_mesh(&b, 300).unwrap();
    let mut pts = ma.points.clone();
    pts.extend(&mb.points).unwrap();
    let weights = |far: f64| -> DiscreteMeasure {
        let w: Vec<f64> = (0..600).map(|i| if i < 300 { 1.0 / 300.0 } else { far / 300.0 }).collect();
        let s: f64 = w.iter().sum();
        DiscreteMeasure::new(pts.clone(), w.iter().map(|x| x / s).collect()).unwrap()
    };
    // every pole on one node of the first sphere
    let poles = Points::from_rows(3, &vec![ma.points.get(0).to_vec(); 40]).unwrap();
    let f = PnFunction::unweighted(poles, RieszKernel::new(1.0, 3).unwrap()).unwrap();
    let balanced = log_bm_ratio(&f, &weights(1.0), &set, 3).unwrap();
    let thin = log_bm_ratio(&f, &weights(1e-6), &set, 3).unwrap();
    assert!(thin > balanced + 5.0, "{thin} vs {balanced}");
}

#[test]
fn surface_measure_has_mass_density_two() {
    let mesh = generate_mesh(&sphere(), 4000).unwrap();
    let mu = mesh.reference_measure();
    let centres = mesh.points.select(&(0..4000).step_by(40).collect::<Vec<_>>());
    let r = mass_density_probe(&mu, &centres, &[1.0, 2.0, 3.0], &[0.5, 0.4, 0.3, 0.2]).unwrap();
    assert!(r.pass);
    let c2 = r.per_exponent.iter().find(|p| p.0 == 2.0).unwrap().1;
    assert!(c2 > 2.5, "{c2}");

    let capped: Vec<f64> = mesh.points.iter().zip(mu.weights()).map(|(x, w)| if x[2] > 0.8 { 0.0 } else { *w }).collect();
    let hole = mu.with_weights(capped).unwrap();
    let north = Points::from_rows(3, &[[0.0, 0.0, 1.0]]).unwrap();
    let r = mass_density_probe(&hole, &north, &[2.0], &[0.3, 0.2, 0.1]).unwrap();
    assert!(!r.pass && r.empty_centres == vec![0]);
}
