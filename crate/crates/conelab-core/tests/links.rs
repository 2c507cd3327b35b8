use std::f64::consts::PI;
use std::sync::Arc;

use conelab_core::links::*;
use conelab_core::numcore::{RadialGrid, ScalarField};
use conelab_core::probes::{perturbed_profile_samples, random_bumps, random_profile_coeffs};
use conelab_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn s2() -> LinkGeometry {
    LinkGeometry::round_sphere(2, 1.0).unwrap()
}

fn q(tau: f64, dim: usize) -> FunctionalQuery {
    FunctionalQuery::new(tau, dim).unwrap()
}

fn profile_link(dim: usize, nodes: usize, coeffs: &[f64]) -> LinkGeometry {
    let (grid, psi) = perturbed_profile_samples(nodes, coeffs);
    let phi = vec![1.0; nodes];
    LinkGeometry::ProfileWarped(WarpedProfile::new(dim, grid, psi, phi).unwrap())
}

fn sphere_mu(tau: f64) -> f64 {
    2.0 * tau - tau.ln() - 2.0
}

#[test]
fn scalar_curvature_examples() {
    let r = scalar_curvature_link(&s2()).unwrap();
    assert!(r.values().iter().all(|v| (v - 2.0).abs() < 1e-14));

    let r = scalar_curvature_link(&LinkGeometry::round_sphere(3, 2.0).unwrap()).unwrap();
    assert!(r.values().iter().all(|v| (v - 1.5).abs() < 1e-14));

    let s3 = profile_link(3, 1025, &[]);
    let r = scalar_curvature_link(&s3).unwrap();
    let v = r.values();
    for x in &v[1..v.len() - 1] {
        assert!((x - 6.0).abs() < 1e-4, "R = {x}");
    }
}

#[test]
fn degenerate_profile_is_rejected() {
    let (grid, mut psi) = perturbed_profile_samples(257, &[]);
    psi[100] = -0.1;
    let err = WarpedProfile::new(3, grid, psi, vec![1.0; 257]).unwrap_err();
    assert!(matches!(err, Error::DegenerateProfile { index: 100 }));
    assert_eq!(err.code(), "degenerate_profile");
}

#[test]
fn lambda_examples() {
    assert!((lambda_link(&s2()).unwrap() - 2.0).abs() < 1e-6);
    assert!((lambda_link(&LinkGeometry::round_sphere(2, 2.0).unwrap()).unwrap() - 0.5).abs() < 1e-6);
    let e = LinkGeometry::einstein(3, 6.0, 2.0 * PI * PI, 0.25).unwrap();
    assert_eq!(lambda_link(&e).unwrap(), 6.0);
}

#[test]
fn lambda_of_round_spheres() {
    for n in [2usize, 3] {
        for beta in [0.5, 1.0, 2.0] {
            let l = lambda_link(&LinkGeometry::round_sphere(n, beta).unwrap()).unwrap();
            let exact = (n * (n - 1)) as f64 / (beta * beta);
            assert!(((l - exact) / exact).abs() < 1e-6, "n={n} beta={beta}: {l} vs {exact}");
        }
    }
}

#[test]
fn einstein_consistency_is_enforced() {
    assert!(LinkGeometry::einstein(3, 6.0, 1.0, 0.3).is_err());
    assert!(LinkGeometry::einstein(3, -1.0, 1.0, -1.5).is_err());
}

#[test]
fn w_of_constant_on_s2() {
    let d = s2().discretize().unwrap();
    let u = d.unit_constant().unwrap();
    let w = w_functional_link(&s2(), &u, q(0.5, 2)).unwrap();
    assert!((w - (2f64.ln() - 1.0)).abs() < 1e-6, "{w}");
    let w = w_functional_link(&s2(), &u, q(1.0, 2)).unwrap();
    assert!(w.abs() < 1e-6, "{w}");
}

#[test]
fn w_rejects_unnormalized_fields() {
    let d = s2().discretize().unwrap();
    let u = d.unit_constant().unwrap().scaled(1.01);
    let err = w_functional_link(&s2(), &u, q(0.5, 2)).unwrap_err();
    assert_eq!(err.code(), "not_normalized");
}

#[test]
fn w_is_invariant_under_parabolic_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let link = s2();
    let d = link.discretize().unwrap();
    for _ in 0..5 {
        let bumps = random_bumps(&mut rng, &d.grid, 0.0, PI);
        let raw = ScalarField::new(
            d.grid.clone(),
            bumps.iter().map(|b| b + 0.05).collect(),
            (conelab_core::numcore::BoundaryKind::PoleRegular, conelab_core::numcore::BoundaryKind::PoleRegular),
        )
        .unwrap();
        let u = raw.scaled(1.0 / d.mass(&raw).unwrap().sqrt());
        for beta in [0.5, 3.0] {
            let big = link.rescaled(beta).unwrap();
            let v = u.scaled(beta.powf(-1.0));
            let w1 = w_functional_link(&link, &u, q(0.7, 2)).unwrap();
            let w2 = w_functional_link(&big, &v, q(0.7 * beta * beta, 2)).unwrap();
            assert!((w1 - w2).abs() < 1e-8, "{w1} vs {w2}");
        }
    }
}

#[test]
fn mu_examples_on_s2() {
    for tau in [0.5, 1.0, 2.0] {
        let m = mu_link(&s2(), q(tau, 2)).unwrap();
        assert!((m - sphere_mu(tau)).abs() < 1e-3, "tau {tau}: {m}");
    }
    let m = mu_link(&s2(), q(1e-3, 2)).unwrap();
    assert!(m > -0.05 && m <= 0.0, "{m}");
}

#[test]
fn small_tau_limit_on_profiles() {
    let link = profile_link(3, 1025, &[0.1, -0.05, 0.02]);
    let m = mu_link(&link, q(1e-3, 3)).unwrap();
    assert!(m > -0.05 && m <= 0.0, "{m}");
}

#[test]
fn mu_is_scale_invariant() {
    let link = profile_link(2, 1025, &[0.12, 0.0, -0.04]);
    for beta in [0.5, 2.0] {
        let big = link.rescaled(beta).unwrap();
        for tau in [0.3, 1.5] {
            let a = mu_link(&link, q(tau, 2)).unwrap();
            let b = mu_link(&big, q(tau * beta * beta, 2)).unwrap();
            assert!((a - b).abs() < 1e-6, "beta {beta} tau {tau}: {a} vs {b}");
        }
    }
}

#[test]
fn nu_examples() {
    let (nu, arg) = nu_link(&s2(), &default_tau_grid()).unwrap();
    assert!((nu - (2f64.ln() - 1.0)).abs() < 1e-3, "{nu}");
    assert!((arg - 0.5).abs() < 1e-2, "{arg}");
    // ν(S²) sits at the flat threshold −η₃ = log 2 − 1; the discretization
    // error of the upper bound is below 1e-6.
    let eta3 = 1.0 - 2f64.ln();
    assert!(nu >= -eta3 - 1e-6);

    let s3 = LinkGeometry::einstein(3, 6.0, 2.0 * PI * PI, 0.25).unwrap();
    let (nu, arg) = nu_link(&s3, &default_tau_grid()).unwrap();
    let exact = 1.5 + (2.0 * PI * PI).ln() - 1.5 * (PI).ln() - 3.0;
    assert!((nu - exact).abs() < 1e-3, "{nu} vs {exact}");
    assert!((arg - 0.25).abs() < 1e-2);
    assert!(nu_link(&s3, &[]).is_err());
}

#[test]
fn einstein_closed_form_examples() {
    let s2e = LinkGeometry::einstein_sphere(2);
    let v = mu_einstein_closed_form(&s2e, q(0.5, 2)).unwrap();
    assert!((v - (2f64.ln() - 1.0)).abs() < 1e-12);
    let v = mu_einstein_closed_form(&s2e, q(1.0, 2)).unwrap();
    assert!(v.abs() < 1e-12);
    let s3 = LinkGeometry::einstein(3, 6.0, 2.0 * PI * PI, 0.25).unwrap();
    let v = mu_einstein_closed_form(&s3, q(0.25, 3)).unwrap();
    let exact = 1.5 + (2.0 * PI * PI).ln() - 1.5 * PI.ln() - 3.0;
    assert!((v - exact).abs() < 1e-12);
    let err = mu_einstein_closed_form(&s3, q(0.1, 3)).unwrap_err();
    assert_eq!(err.code(), "below_shrinking_time");
}

#[test]
fn numerical_mu_matches_closed_form_above_shrinking_time() {
    let s3 = LinkGeometry::round_sphere(3, 1.0).unwrap();
    let e = LinkGeometry::einstein_sphere(3);
    for tau in [0.25, 1.0, 4.0] {
        let a = mu_link(&s3, q(tau, 3)).unwrap();
        let b = mu_einstein_closed_form(&e, q(tau, 3)).unwrap();
        assert!((a - b).abs() < 1e-3, "tau {tau}: {a} vs {b}");
    }
}

#[test]
fn envelope_examples() {
    let taus: Vec<f64> = (0..12).map(|k| 0.5 * 1.5f64.powi(k)).collect();
    let exact: Vec<(f64, f64)> = taus.iter().map(|&t| (t, sphere_mu(t))).collect();
    let rep = mu_envelope_check(&exact, 2.0, 2);
    assert_eq!(rep.pairs_checked, 66);
    assert!(rep.worst_violation < 1e-8, "{}", rep.worst_violation);

    let rep = mu_envelope_check(&exact[..1], 2.0, 2);
    assert_eq!(rep.pairs_checked, 0);
    assert_eq!(rep.worst_violation, 0.0);

    let mut bad = exact.clone();
    bad[5].1 -= 0.1;
    let rep = mu_envelope_check(&bad, 2.0, 2);
    assert!((rep.worst_violation - 0.1).abs() < 1e-8, "{}", rep.worst_violation);
    assert_eq!(rep.worst_pair.map(|p| p.0), Some(taus[5]));
}

#[test]
fn envelope_holds_on_computed_grids() {
    for link in [s2(), profile_link(2, 1025, &[0.1, 0.05, 0.0])] {
        let lambda = lambda_link(&link).unwrap();
        let d = link.discretize().unwrap();
        let samples: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2]
            .iter()
            .map(|&t| (t, mu_on_discretization(&d, t).unwrap().value))
            .collect();
        let rep = mu_envelope_check(&samples, lambda, 2);
        assert!(rep.worst_violation < 1e-3, "{rep:?}");
        let env = MuEnvelope::fit(&samples, lambda, 2);
        for (t, m) in &samples {
            assert!(*m >= env.value(*t) - 1e-12);
        }
    }
}

#[test]
fn drift_examples() {
    let rep = minimizer_drift_check(&s2(), &[1.0, 10.0, 100.0]).unwrap();
    assert!(rep.distances.iter().all(|d| *d < 1e-6), "{:?}", rep.distances);

    let link = profile_link(2, 1025, &[0.15, -0.05, 0.03]);
    let rep = minimizer_drift_check(&link, &[1.0, 10.0, 100.0]).unwrap();
    assert!(rep.distances.windows(2).all(|w| w[1] < w[0]), "{:?}", rep.distances);
    assert!(rep.tail_nonincreasing);

    let again = minimizer_drift_check(&link, &[10.0, 10.0, 10.0]).unwrap();
    assert_eq!(again.distances[0], again.distances[1]);
    assert_eq!(again.distances[1], again.distances[2]);
    assert!(minimizer_drift_check(&link, &[1.0, 2.0]).is_err());
}

#[test]
fn lambda_lies_between_min_and_mean_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let dim = 2 + trial % 2;
        let coeffs = random_profile_coeffs(&mut rng, 0.15);
        let link = profile_link(dim, 513, &coeffs);
        let (lambda, _, d) = ground_state(&link).unwrap();
        let rmin = d.curvature.iter().cloned().fold(f64::INFINITY, f64::min);
        let vol: f64 = d.grid.quad(&d.measure);
        let rtot: f64 = d.grid.quad(&d.measure.iter().zip(&d.curvature).map(|(m, r)| m * r).collect::<Vec<_>>());
        let rav = rtot / vol;
        let slack = 1e-6 * rav.abs().max(1.0);
        assert!(rmin - slack <= lambda && lambda <= rav + slack, "{coeffs:?}: {rmin} {lambda} {rav}");
    }
}

#[test]
fn mu_never_exceeds_w_at_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let link = profile_link(2, 513, &[0.1, -0.05, 0.02]);
    let d = link.discretize().unwrap();
    let poles = (conelab_core::numcore::BoundaryKind::PoleRegular, conelab_core::numcore::BoundaryKind::PoleRegular);
    let taus = [0.1, 0.5, 2.0, 8.0];
    let mus: Vec<f64> = taus.iter().map(|&t| mu_on_discretization(&d, t).unwrap().value).collect();
    for k in 0..100 {
        let bumps = random_bumps(&mut rng, &d.grid, 0.0, PI);
        let raw = ScalarField::new(d.grid.clone(), bumps.iter().map(|b| b + 1e-3).collect(), poles).unwrap();
        let u = raw.scaled(1.0 / d.mass(&raw).unwrap().sqrt());
        let j = k % taus.len();
        let w = w_on_discretization(&d, &u, taus[j]).unwrap();
        assert!(mus[j] <= w + 1e-10, "tau {}: mu {} > W {}", taus[j], mus[j], w);
    }
}

#[test]
fn profile_on_custom_grid_matches_round_sphere() {
    let n = 2049;
    let grid = Arc::new(RadialGrid::uniform(0.0, PI, n).unwrap());
    let psi: Vec<f64> = grid.nodes().iter().map(|s| s.sin()).collect();
    let mut psi = psi;
    psi[n - 1] = 0.0;
    let link = LinkGeometry::ProfileWarped(WarpedProfile::new(3, grid, psi, vec![1.0; n]).unwrap());
    assert!((lambda_link(&link).unwrap() - 6.0).abs() < 1e-5);
    assert!((link.volume() - 2.0 * PI * PI).abs() < 1e-8);
}
