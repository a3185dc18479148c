//! Fekete optimization against known configurations and exhaustive search.

use riesz_core::fekete::{
    lagrangian, log_vdm, normalized_energy, optimize_fekete, transfinite_diameter_sequence, FeketeParams,
};
use riesz_core::energy::energy;
use riesz_core::geometry::generate_mesh;
use riesz_core::rng::stream;
use riesz_core::{CompactSet, DiagonalPolicy, DiscreteMeasure, ExternalField, Points, RieszKernel};

fn k1() -> RieszKernel {
    RieszKernel::new(1.0, 3).unwrap()
}

#[test]
fn four_points_form_a_tetrahedron() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let r = optimize_fekete(&s, &k1(), &ExternalField::zero(3), 4, &FeketeParams::default(), None).unwrap();
    let expected = (3.0f64 / 8.0).sqrt();
    assert!((r.d_n - expected).abs() < 1e-6, "{} vs {expected}", r.d_n);
    // every edge of the regular tetrahedron inscribed in S² is sqrt(8/3)
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = riesz_core::math::dist(r.points.get(i), r.points.get(j));
            assert!((d - (8.0f64 / 3.0).sqrt()).abs() < 1e-3, "edge {d}");
        }
    }
    assert!((r.d_n + r.log_vdm / 12.0).abs() < 1e-12);
}

#[test]
fn normalized_energy_matches_empirical_measure_identity() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let mut rng = stream(3, 1);
    let mut p = Points::new(3);
    for _ in 0..10 {
        p.push(&s.sample_uniform(&mut rng)).unwrap();
    }
    let q = ExternalField::expression("x1^2 - 0.5*x3", 3).unwrap();
    let n = 10.0;
    let mu = DiscreteMeasure::uniform(p.clone()).unwrap();
    let e = energy(&k1(), &mu, DiagonalPolicy::Exclude);
    let sum_q: f64 = q.values_on(&p).unwrap().iter().sum();
    let identity = e * n / (n - 1.0) + 2.0 / (n - 1.0) * sum_q;
    assert!((normalized_energy(&p, &k1(), &q).unwrap() - identity).abs() < 1e-12);
}

#[test]
fn log_vdm_is_permutation_symmetric() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let mut rng = stream(4, 0);
    let rows: Vec<Vec<f64>> = (0..7).map(|_| s.sample_uniform(&mut rng)).collect();
    let q = ExternalField::expression("norm()^2 + x2", 3).unwrap();
    let a = log_vdm(&Points::from_rows(3, &rows).unwrap(), &k1(), &q).unwrap();
    let mut rev = rows.clone();
    rev.reverse();
    rev.swap(0, 3);
    let b = log_vdm(&Points::from_rows(3, &rev).unwrap(), &k1(), &q).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
}

fn exhaustive_min(points: &Points, k: &RieszKernel, q: &ExternalField, n: usize) -> f64 {
    let m = points.len();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let l = lagrangian(&points.select(&idx), k, q).unwrap();
        best = best.min(l / (n * (n - 1)) as f64);
        // next combination
        let mut i = n;
        while i > 0 && idx[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[test]
fn discrete_d_n_is_nondecreasing_on_small_meshes() {
    // D_n over a finite set is monotone in n; check by brute force
    let s = CompactSet::unit_sphere(3).unwrap();
    let mesh = generate_mesh(&s, 30).unwrap();
    let q = ExternalField::zero(3);
    let d2 = exhaustive_min(&mesh.points, &k1(), &q, 2);
    let d3 = exhaustive_min(&mesh.points, &k1(), &q, 3);
    let d4 = exhaustive_min(&mesh.points, &k1(), &q, 4);
    assert!(d2 <= d3 && d3 <= d4, "{d2} {d3} {d4}");
    // continuous optimization can only do better than the mesh
    let p = FeketeParams::default();
    let c3 = optimize_fekete(&s, &k1(), &q, 3, &p, None).unwrap().d_n;
    assert!(c3 <= d3 + 1e-12);
    // equilateral triangle on a great circle: side sqrt(3)
    assert!((c3 - 1.0 / 3f64.sqrt()).abs() < 1e-8, "{c3}");
}

#[test]
fn confining_field_pulls_points_toward_its_centre() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let q = ExternalField::expression("5*dist(0, 0, 1)^2", 3).unwrap();
    let r = optimize_fekete(&s, &k1(), &q, 12, &FeketeParams { restarts: 4, ..Default::default() }, None).unwrap();
    let mean_z: f64 = r.points.iter().map(|x| x[2]).sum::<f64>() / 12.0;
    assert!(mean_z > 0.5, "{mean_z}");
}

#[test]
fn small_sequence_increases() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let rows = transfinite_diameter_sequence(&s, &k1(), &ExternalField::zero(3), &[2, 5, 10], &FeketeParams::default())
        .unwrap();
    assert!((rows[0].0.d_n - 0.5).abs() < 1e-9);
    for w in rows.windows(2) {
        assert!(w[1].0.d_n >= w[0].0.d_n - 1e-3);
    }
}
