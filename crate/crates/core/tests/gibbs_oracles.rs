//! Gibbs ensemble: exact enumeration oracles, sampler checks and AIS.

use riesz_core::geometry::generate_mesh;
use riesz_core::gibbs::*;
use riesz_core::{CompactSet, DiscreteMeasure, ExternalField, Mesh, Points, RieszKernel};

fn two_point() -> (GibbsSpec, Mesh) {
    let p = Points::from_rows(3, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
    let mesh = Mesh { points: p.clone(), cell_weights: vec![0.5, 0.5], spacing: 1.0 };
    let spec = GibbsSpec::new(
        CompactSet::point_cloud(p, 1.0).unwrap(),
        BaseMeasure::Discrete { measure: mesh.reference_measure() },
        RieszKernel::new(1.0, 3).unwrap(),
        ExternalField::zero(3),
        2,
    )
    .unwrap();
    (spec, mesh)
}

fn circle_spec(n: usize, q: ExternalField) -> (GibbsSpec, Mesh) {
    let set = CompactSet::unit_circle(3).unwrap();
    let mesh = generate_mesh(&set, 30).unwrap();
    let base = BaseMeasure::Discrete { measure: mesh.normalized_measure() };
    (GibbsSpec::new(set, base, RieszKernel::new(0.5, 3).unwrap(), q, n).unwrap(), mesh)
}

#[test]
fn detailed_balance_by_enumeration() {
    // 12 irregular nodes so that the 8-neighbour lists are not symmetric
    let rows: Vec<[f64; 3]> = (0..12)
        .map(|i| {
            let t = i as f64 * 0.37 + 0.05 * (i * i) as f64;
            [t.cos(), t.sin(), 0.1 * i as f64]
        })
        .collect();
    let pts = Points::from_rows(3, &rows).unwrap();
    let w: Vec<f64> = (0..12).map(|i| 1.0 + (i % 3) as f64).collect();
    let mu = DiscreteMeasure::new(pts.clone(), w.clone()).unwrap();
    let spec = GibbsSpec::new(
        CompactSet::point_cloud(pts.clone(), 0.3).unwrap(),
        BaseMeasure::Discrete { measure: mu },
        RieszKernel::new(1.0, 3).unwrap(),
        ExternalField::expression("x1^2 + 0.5*x3", 3).unwrap(),
        2,
    )
    .unwrap();
    let log_pi = |a: &[usize]| -> f64 {
        let cfg = pts.select(a);
        -spec.energy(&cfg).unwrap() + a.iter().map(|&i| w[i].ln()).sum::<f64>()
    };
    let mut checked = 0;
    for a0 in 0..12 {
        for a1 in 0..12 {
            if a0 == a1 {
                continue;
            }
            let a = [a0, a1];
            let mut out = 0.0;
            for b1 in 0..12 {
                if b1 == a1 || b1 == a0 {
                    continue;
                }
                let b = [a0, b1];
                let fwd = log_pi(&a) + transition_probability(&spec, &a, &b).unwrap().ln();
                let back = log_pi(&b) + transition_probability(&spec, &b, &a).unwrap().ln();
                if fwd.is_finite() || back.is_finite() {
                    assert!((fwd - back).abs() < 1e-12, "{a:?} -> {b:?}: {fwd} vs {back}");
                    checked += 1;
                }
            }
            for b0 in 0..12 {
                for b1 in 0..12 {
                    if [b0, b1] != a {
                        out += transition_probability(&spec, &a, &[b0, b1]).unwrap();
                    }
                }
            }
            let stay = transition_probability(&spec, &a, &a).unwrap();
            assert!(stay >= -1e-15 && (stay + out - 1.0).abs() < 1e-12);
        }
    }
    assert!(checked > 1000);
}

#[test]
fn two_point_chain_avoids_diagonal() {
    let (spec, _) = two_point();
    let out = mcmc_sample(&spec, &McmcParams { chains: 2, sweeps: 3000, burn_in: 100, thin: 1, ..Default::default() })
        .unwrap();
    let total = out.samples().count();
    let off = out.samples().filter(|s| s.get(0) != s.get(1)).count();
    assert!(off as f64 >= 0.99 * total as f64, "{off}/{total}");
}

#[test]
fn two_point_quadrature_and_rare_events() {
    let (spec, mesh) = two_point();
    let q = partition_function_quadrature(&spec, &mesh).unwrap();
    assert!((q.log_z / 4.0 + (2.0 + 2f64.ln()) / 4.0).abs() < 1e-15);
    // the off-diagonal pair has log VDM = -2, which lies below the threshold
    // 4 log(δ - η) exactly when δ - η > e^{-1/2}
    let r = rare_event_exact(&spec, &mesh, 0.7, 0.05).unwrap();
    assert!((r.p_hat - 1.0).abs() < 1e-12);
    let r = rare_event_exact(&spec, &mesh, 0.7, 0.2).unwrap();
    assert!(r.p_hat.abs() < 1e-12);
}

#[test]
fn constant_shift_identity() {
    let (a, mesh) = circle_spec(3, ExternalField::expression("x1 - 0.3*x2^2", 3).unwrap());
    let c = 0.37;
    let b = GibbsSpec { q: a.q.shifted(c), ..a.clone() };
    let za = partition_function_quadrature(&a, &mesh).unwrap();
    let zb = partition_function_quadrature(&b, &mesh).unwrap();
    assert!((zb.log_z - (za.log_z - 2.0 * 9.0 * c)).abs() < 1e-10);
    assert!((za.tau.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn symmetric_circle_correlation_is_uniform() {
    for n in [2, 3] {
        let (spec, mesh) = circle_spec(n, ExternalField::zero(3));
        let tau = one_point_correlation_quadrature(&spec, &mesh).unwrap();
        for w in tau.weights() {
            assert!((w - 1.0 / 30.0).abs() < 1e-10, "n={n}: {w}");
        }
    }
}

#[test]
fn quadrature_matches_plain_monte_carlo() {
    use rand::Rng;
    let (spec, mesh) = circle_spec(3, ExternalField::zero(3));
    let exact = partition_function_quadrature(&spec, &mesh).unwrap().log_z;
    let mut rng = riesz_core::rng::stream(5, 0);
    let draws: Vec<f64> = (0..20000)
        .map(|_| {
            let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..30)).collect();
            (-spec.energy(&mesh.points.select(&idx)).unwrap()).exp()
        })
        .collect();
    let m = riesz_core::math::mean(&draws);
    let se = (riesz_core::math::variance(&draws) / draws.len() as f64).sqrt();
    assert!((m - exact.exp()).abs() < 3.0 * se, "{m} ± {se} vs {}", exact.exp());
}

#[test]
fn ais_matches_quadrature() {
    let (spec, mesh) = circle_spec(3, ExternalField::zero(3));
    let exact = partition_function_quadrature(&spec, &mesh).unwrap().log_z;
    let est = partition_function_ais(&spec, &geometric_ladder(DEFAULT_RUNGS, 1e-3), &AisParams { chains: 200, seed: 9, ..Default::default() })
        .unwrap();
    assert!((est.log_z - exact).abs() < 3.0 * est.std_error, "{} ± {} vs {exact}", est.log_z, est.std_error);
    assert!(!est.ess_flag);
}

#[test]
fn ais_variance_halves_with_twice_the_chains() {
    let (spec, _) = circle_spec(3, ExternalField::zero(3));
    let ladder = geometric_ladder(8, 1e-2);
    let a = partition_function_ais(&spec, &ladder, &AisParams { chains: 400, seed: 2, ..Default::default() }).unwrap();
    let b = partition_function_ais(&spec, &ladder, &AisParams { chains: 800, seed: 2, ..Default::default() }).unwrap();
    let ratio = (b.std_error / a.std_error).powi(2);
    assert!((ratio - 0.5).abs() <= 0.25, "{ratio}");
}

#[test]
fn checkpoint_resume_is_exact() {
    let set = CompactSet::unit_sphere(3).unwrap();
    let spec = GibbsSpec::new(
        set,
        BaseMeasure::Continuous { mass: 1.0 },
        RieszKernel::new(1.0, 3).unwrap(),
        ExternalField::zero(3),
        6,
    )
    .unwrap();
    let whole = mcmc_sample(&spec, &McmcParams { chains: 1, sweeps: 80, burn_in: 20, thin: 5, step_scale: 0.3, seed: 4 }).unwrap();
    let first = mcmc_sample(&spec, &McmcParams { chains: 1, sweeps: 50, burn_in: 20, thin: 5, step_scale: 0.3, seed: 4 }).unwrap();
    let state = &first.chains[0].state;
    let json = serde_json::to_string(state).unwrap();
    let state: ChainState = serde_json::from_str(&json).unwrap();
    let rest = resume_chain(&spec, &state, 30, 5).unwrap();
    let mut joined = first.chains[0].samples.clone();
    joined.extend(rest.samples);
    assert_eq!(joined, whole.chains[0].samples);
    assert_eq!(rest.state.config, whole.chains[0].state.config);
    let mut bad = state.clone();
    bad.log_density += 1.0;
    assert!(resume_chain(&spec, &bad, 1, 1).is_err());
}

#[test]
fn stronger_field_pulls_samples_closer() {
    let set = CompactSet::unit_sphere(3).unwrap();
    let mut means = Vec::new();
    for s in [1.0, 5.0] {
        let q = ExternalField::expression(&format!("{s}*dist(0, 0, 1)^2"), 3).unwrap();
        let spec = GibbsSpec::new(set.clone(), BaseMeasure::Continuous { mass: 1.0 }, RieszKernel::new(1.0, 3).unwrap(), q, 8)
            .unwrap();
        let out = mcmc_sample(&spec, &McmcParams { chains: 4, sweeps: 1500, burn_in: 300, thin: 5, step_scale: 0.3, seed: 3 })
            .unwrap();
        let (mut sum, mut cnt) = (0.0, 0.0);
        for c in out.samples() {
            for x in c.iter() {
                sum += riesz_core::math::dist(x, &[0.0, 0.0, 1.0]);
                cnt += 1.0;
            }
        }
        assert!(out.r_hat < 1.1, "R-hat {}", out.r_hat);
        means.push(sum / cnt);
    }
    assert!(means[1] < means[0], "{means:?}");
}

#[test]
fn sites_are_exchangeable() {
    let set = CompactSet::unit_sphere(3).unwrap();
    let q = ExternalField::expression("3*x3", 3).unwrap();
    let spec = GibbsSpec::new(set, BaseMeasure::Continuous { mass: 1.0 }, RieszKernel::new(1.0, 3).unwrap(), q, 4).unwrap();
    let out = mcmc_sample(&spec, &McmcParams { chains: 4, sweeps: 4000, burn_in: 500, thin: 10, step_scale: 0.3, seed: 8 }).unwrap();
    let samples: Vec<&Points> = out.samples().collect();
    let per_site: Vec<Vec<f64>> = (0..4).map(|i| samples.iter().map(|s| s.get(i)[2]).collect()).collect();
    let means: Vec<f64> = per_site.iter().map(|v| riesz_core::math::mean(v)).collect();
    let se = per_site.iter().map(|v| (riesz_core::math::variance(v) / v.len() as f64).sqrt()).fold(0.0, f64::max);
    for m in &means {
        assert!((m - means[0]).abs() < 5.0 * se * 2f64.sqrt(), "{means:?} se {se}");
    }
}

#[test]
fn rare_event_vanishes_near_full_threshold() {
    let (spec, mesh) = circle_spec(3, ExternalField::zero(3));
    let delta = (-1.0f64).exp();
    let r = rare_event_exact(&spec, &mesh, delta, delta * (1.0 - 1e-12)).unwrap();
    assert!(r.p_hat < 1e-12);
}
