//! Meshes, projections and dimension estimators.

use proptest::prelude::*;
use riesz_core::geometry::*;
use riesz_core::{CompactSet, Points};

#[test]
fn sphere_mesh_is_two_dimensional() {
    let mesh = generate_mesh(&CompactSet::unit_sphere(3).unwrap(), 100_000).unwrap();
    let est = box_counting_dimension(&mesh.points, &default_box_scales(&mesh)).unwrap();
    assert!((est.slope - 2.0).abs() < 0.15, "{est:?}");
}

#[test]
fn cantor_set_dimension() {
    let pts = cantor_points(3, 9);
    let est = box_counting_dimension(&pts, &dyadic_deltas(0.5, 1e-4)).unwrap();
    let exact = 2f64.ln() / 3f64.ln();
    assert!((est.slope - exact).abs() < 0.05, "{est:?}");
}

#[test]
fn circle_and_box_dimensions() {
    let c = generate_mesh(&CompactSet::unit_circle(3).unwrap(), 4000).unwrap();
    let est = box_counting_dimension(&c.points, &dyadic_deltas(1.0, 4.0 * c.spacing)).unwrap();
    assert!((est.slope - 1.0).abs() < 0.1, "{est:?}");
    let b = CompactSet::cuboid(vec![0.0; 3], vec![1.0; 3]).unwrap();
    let m = generate_mesh(&b, 32).unwrap();
    assert!(generate_mesh(&b, 30000).is_err());
    let est = box_counting_dimension(&m.points, &dyadic_deltas(0.5, 0.5 / 16.0)).unwrap();
    assert!((est.slope - 3.0).abs() < 0.2, "{est:?}");
}

#[test]
fn sphere_covering_radius_scales_like_inverse_root() {
    let mesh = generate_mesh(&CompactSet::unit_sphere(3).unwrap(), 6000).unwrap();
    let r: Vec<f64> = [16, 64, 256].iter().map(|&n| covering_radius(&mesh.points, n)).collect();
    // quadrupling n halves the radius, up to the greedy factor
    for w in r.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.4 && ratio < 2.9, "{r:?}");
    }
}

#[test]
fn uniform_samples_have_zero_mean_on_the_sphere() {
    let s = CompactSet::unit_sphere(3).unwrap();
    let mut rng = riesz_core::rng::stream(1, 0);
    let n = 20000;
    let mut m = [0.0; 3];
    for _ in 0..n {
        let x = s.sample_uniform(&mut rng);
        assert!((riesz_core::math::norm(&x) - 1.0).abs() < 1e-12);
        for k in 0..3 {
            m[k] += x[k] / n as f64;
        }
    }
    // each coordinate has variance 1/3
    let se = (1.0 / 3.0 / n as f64).sqrt();
    assert!(m.iter().all(|v| v.abs() < 4.0 * se), "{m:?}");
}

fn sets() -> Vec<CompactSet> {
    vec![
        CompactSet::unit_sphere(3).unwrap(),
        CompactSet::unit_circle(4).unwrap(),
        CompactSet::cuboid(vec![-1.0, 0.0, 0.0], vec![1.0, 2.0, 0.0]).unwrap(),
        CompactSet::union(vec![
            CompactSet::sphere(vec![0.0, 0.0, 0.0], 1.0).unwrap(),
            CompactSet::sphere(vec![3.0, 0.0, 0.0], 0.5).unwrap(),
        ])
        .unwrap(),
        CompactSet::point_cloud(Points::from_rows(3, &[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap(), 1.0).unwrap(),
    ]
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_lands_in_the_set(k in 0usize..5, y in prop::array::uniform4(-4.0f64..4.0)) {
        let set = &sets()[k];
        let y = &y[..set.dim()];
        let p = set.project(y);
        prop_assert!(set.distance(&p) < 1e-12);
        let pp = set.project(&p);
        prop_assert!(riesz_core::math::dist(&p, &pp) < 1e-12);
        // no point of a fine mesh is closer to y than the projection
        let res = if matches!(set.kind(), SetKind::Box { .. }) { 40 } else { 400 };
        let mesh = generate_mesh(set, res).unwrap();
        let best = mesh.points.iter().map(|x| riesz_core::math::dist(x, y)).fold(f64::INFINITY, f64::min);
        prop_assert!(riesz_core::math::dist(&p, y) <= best + 1e-12);
    }
}
