use std::f64::consts::{E, PI};
use std::sync::Arc;

use conelab_core::inequalities::*;
use conelab_core::links::LinkGeometry;
use conelab_core::numcore::{BoundaryKind, RadialGrid, ScalarField};
use conelab_core::probes::{bump, random_bumps};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIRICHLET: (BoundaryKind, BoundaryKind) = (BoundaryKind::DirichletZero, BoundaryKind::DirichletZero);

fn log_grid(lo: f64, hi: f64, n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::logarithmic(lo, hi, n).unwrap())
}

#[test]
fn hardy_examples() {
    let g = log_grid(0.5, 4.0, 1024);
    let v = ScalarField::from_fn(g.clone(), |r| bump(2.0 * (r - 1.5))).unwrap();
    let h = weighted_hardy_gap(&v, 2).unwrap();
    assert!(h.ratio < 1.0 && h.ratio > 0.0);
    let h7 = weighted_hardy_gap(&v.scaled(7.0), 2).unwrap();
    assert!((h7.ratio - h.ratio).abs() < 1e-12);
    assert!((h7.lhs - 49.0 * h.lhs).abs() < 1e-10 * h7.lhs);

    let near = hardy_near_extremal(2, 0.01, 8192).unwrap();
    assert!(weighted_hardy_gap(&near, 2).unwrap().ratio > 0.95);

    let zero = ScalarField::constant(g, 0.0).unwrap();
    assert_eq!(weighted_hardy_gap(&zero, 2).unwrap_err().code(), "zero_field");
}

#[test]
fn hardy_constant_is_approached_monotonically() {
    for n in [2, 3] {
        let ratios: Vec<f64> = [0.1, 0.03, 0.01, 0.003]
            .iter()
            .map(|d| weighted_hardy_gap(&hardy_near_extremal(n, *d, 8192).unwrap(), n).unwrap().ratio)
            .collect();
        assert!(ratios.windows(2).all(|w| w[0] < w[1]), "n={n}: {ratios:?}");
        assert!(ratios.iter().all(|r| *r < 1.0));
        assert!(ratios[3] >= 0.98, "n={n}: {}", ratios[3]);
    }
}

#[test]
fn hardy_holds_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = log_grid(1e-3, 1e2, 2048);
    let (lo, hi) = (1e-2f64.ln(), 10f64.ln());
    for k in 0..200 {
        let n = 2 + k % 2;
        let vals: Vec<f64> = random_bumps(&mut rng, &g, lo, hi)
            .into_iter()
            .zip(g.nodes())
            .map(|(b, r)| b * (1.0 + 0.5 * (3.0 * r.ln()).sin()))
            .collect();
        let v = ScalarField::new(g.clone(), vals, DIRICHLET).unwrap();
        let h = weighted_hardy_gap(&v, n).unwrap();
        assert!(h.ratio < 1.0, "{}", h.ratio);
    }
}

#[test]
fn log_sobolev_equality_on_gaussians() {
    for n in [2, 3] {
        for tau0 in [0.3, 1.0, 3.0] {
            let s = f64::sqrt(tau0);
            let g = log_grid(1e-6 * s, 60.0 * s, 4096);
            let w = log_sobolev_gaussian(g, n, tau0).unwrap();
            let gap = radial_log_sobolev_gap(&w, n, tau0).unwrap();
            assert!(gap.abs() < 1e-5, "n={n} τ₀={tau0}: {gap}");
        }
    }
}

#[test]
fn log_sobolev_holds_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [2, 3] {
        for tau0 in [0.3, 1.0, 3.0] {
            let s = f64::sqrt(tau0);
            let g = log_grid(1e-4 * s, 1e2 * s, 2048);
            let (lo, hi) = ((1e-3 * s).ln(), (10.0 * s).ln());
            for _ in 0..200 {
                let raw = ScalarField::new(g.clone(), random_bumps(&mut rng, &g, lo, hi), DIRICHLET).unwrap();
                let w = normalize_radial(&raw, n).unwrap();
                let gap = radial_log_sobolev_gap(&w, n, tau0).unwrap();
                assert!(gap > -1e-6, "n={n} τ₀={tau0}: {gap}");
            }
        }
    }
}

#[test]
fn log_sobolev_requires_normalization() {
    let g = log_grid(1e-4, 1e2, 1024);
    let w = log_sobolev_gaussian(g, 2, 1.0).unwrap().scaled(1.1);
    assert_eq!(radial_log_sobolev_gap(&w, 2, 1.0).unwrap_err().code(), "not_normalized");
}

#[test]
fn epsilon_examples() {
    let e = epsilons_from_betas(&PerturbationBetas::new(1.0, 1.0, 3).unwrap());
    assert_eq!((e.eps1, e.eps2, e.eps3), (0.0, 0.0, 0.0));

    let e = epsilons_from_betas(&PerturbationBetas::new(0.9, 1.1, 3).unwrap());
    assert!((e.eps1 - (1.0 - 0.9f64.powi(3) / 1.1f64.powi(7))).abs() < 1e-15);
    assert!((e.eps2 - ((1.1f64 / 0.9).powi(3) - 1.0)).abs() < 1e-14);
    let r = (0.9f64 / 1.1).powi(3);
    let eps3 = (r - 1.0 / r) * 2.0 * PI * PI / E + 3.0 * 0.9f64.ln();
    assert!((e.eps3 - eps3).abs() < 1e-13);
    assert!(e.eps3 < 0.0);
    assert_eq!(e.negated().eps3, -e.eps3);

    assert!(PerturbationBetas::new(1.1, 1.2, 2).is_err());
    assert!(PerturbationBetas::new(0.9, 0.95, 2).is_err());
}

proptest! {
    #[test]
    fn epsilons_grow_as_the_bracket_widens(b1 in 0.5f64..1.0, b2 in 1.0f64..1.5, db in 0.001f64..0.1, n in 2usize..5) {
        let base = epsilons_from_betas(&PerturbationBetas::new(b1, b2, n).unwrap());
        let lower = epsilons_from_betas(&PerturbationBetas::new(b1 - db * b1 / 2.0, b2, n).unwrap());
        let upper = epsilons_from_betas(&PerturbationBetas::new(b1, b2 + db, n).unwrap());
        prop_assert!(lower.eps1 > base.eps1 && lower.eps2 > base.eps2);
        prop_assert!(upper.eps1 > base.eps1 && upper.eps2 > base.eps2);
    }

    #[test]
    fn epsilons_vanish_continuously_at_the_round_sphere(t in 1e-9f64..1e-3, n in 2usize..5) {
        let e = epsilons_from_betas(&PerturbationBetas::new(1.0 - t, 1.0 + t, n).unwrap());
        let scale = 100.0 * t * n as f64;
        prop_assert!(e.eps1.abs() < scale && e.eps2.abs() < scale && e.eps3.abs() < 10.0 * scale);
    }
}

fn link_probes(link: &LinkGeometry, count: usize, seed: u64) -> Vec<ScalarField> {
    let d = link.discretize().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = d.grid.last();
    (0..count)
        .map(|_| {
            let amp = rng.gen_range(0.5..3.0);
            let vals: Vec<f64> = random_bumps(&mut rng, &d.grid, 0.0, len).iter().map(|b| amp * b).collect();
            ScalarField::new(d.grid.clone(), vals, (BoundaryKind::PoleRegular, BoundaryKind::PoleRegular)).unwrap()
        })
        .collect()
}

#[test]
fn perturbation_bounds_are_equalities_on_the_round_sphere() {
    let link = LinkGeometry::round_sphere(2, 1.0).unwrap();
    let betas = PerturbationBetas::new(1.0, 1.0, 2).unwrap();
    let rep = sphere_perturbation_bounds_check(&link, &betas, &link_probes(&link, 10, 1), 0.7).unwrap();
    for m in rep.f_margins.iter().chain(&rep.n_margins_proof).chain(&rep.n_margins_statement) {
        assert!(m.abs() < 1e-8, "{m}");
    }
}

#[test]
fn perturbation_bounds_hold_on_a_smaller_sphere() {
    let beta = 0.95;
    let link = LinkGeometry::round_sphere(2, beta).unwrap();
    let betas = PerturbationBetas::new(beta, 1.0, 2).unwrap();
    let rep = sphere_perturbation_bounds_check(&link, &betas, &link_probes(&link, 50, 2), 0.5).unwrap();
    assert!((rep.bracket.0 - beta).abs() < 1e-12 && (rep.bracket.1 - beta).abs() < 1e-12);
    assert!(PerturbationReport::worst(&rep.f_margins) > 0.0);
    assert!(PerturbationReport::worst(&rep.n_margins_proof) > 0.0);
    assert!(PerturbationReport::worst(&rep.n_margins_statement) > 0.0);
}

#[test]
fn perturbation_margins_of_constants_in_closed_form() {
    let beta: f64 = 0.9;
    let link = LinkGeometry::round_sphere(2, beta).unwrap();
    let betas = PerturbationBetas::new(beta, 1.0, 2).unwrap();
    let d = link.discretize().unwrap();
    let c = ScalarField::constant(d.grid.clone(), 0.0).unwrap();
    let rep = sphere_perturbation_bounds_check(&link, &betas, &[c.clone()], 1.3).unwrap();
    let vals = component_values(&link, &c, 1.3).unwrap();
    let (vn, vs) = (4.0 * PI * beta * beta, 4.0 * PI);
    assert!((vals.f_link - 2.0 / (beta * beta)).abs() < 1e-8);
    assert!((vals.f_round - 2.0).abs() < 1e-8);
    assert!((vals.n_link - vn.ln()).abs() < 1e-8);
    assert!((vals.n_round - vs.ln()).abs() < 1e-8);
    assert!((vals.delta + 2.0 * beta.ln()).abs() < 1e-8);
    let b2 = beta * beta;
    assert!((rep.f_margins[0] - (2.0 / b2 - b2 * 2.0)).abs() < 1e-8);
    let n_closed = vn.ln() - vs.ln() / b2 - (b2 - 1.0 / b2) * vs / E - 2.0 * beta.ln();
    assert!((rep.n_margins_proof[0] - n_closed).abs() < 1e-8);
}

#[test]
fn bracket_violations_are_rejected() {
    let link = LinkGeometry::round_sphere(2, 0.9).unwrap();
    let probes = link_probes(&link, 1, 3);
    let tight = PerturbationBetas::new(0.95, 1.0, 2).unwrap();
    assert_eq!(sphere_perturbation_bounds_check(&link, &tight, &probes, 1.0).unwrap_err().code(), "not_in_bracket");
    // Large spheres violate the curvature condition R ≥ n(n−1)/β₂² for β₂ too small.
    let big = LinkGeometry::round_sphere(2, 1.2).unwrap();
    let low = PerturbationBetas::new(1.0, 1.1, 2).unwrap();
    let probes = link_probes(&big, 1, 3);
    assert_eq!(sphere_perturbation_bounds_check(&big, &low, &probes, 1.0).unwrap_err().code(), "not_in_bracket");
}

#[test]
fn l_bound_examples() {
    let taus = [0.05, 0.3, 1.0, 3.0];
    let round = LinkGeometry::round_sphere(2, 1.0).unwrap();
    let zero = EpsilonTriple { eps1: 0.0, eps2: 0.0, eps3: 0.0 };
    let rep = l_bound_check(&round, &zero, &link_probes(&round, 10, 7), &taus).unwrap();
    assert!(rep.worst_margin_verbatim >= -1e-8 && rep.worst_margin_verbatim < 1e-8);
    assert_eq!(rep.passing, vec![Eps3Convention::Verbatim, Eps3Convention::Negated]);

    // The sign produced by the F and N bounds passes; the displayed one does not.
    let link = LinkGeometry::round_sphere(2, 0.95).unwrap();
    let eps = epsilons_from_betas(&PerturbationBetas::new(0.95, 1.0, 2).unwrap());
    let rep = l_bound_check(&link, &eps, &link_probes(&link, 20, 8), &taus).unwrap();
    assert_eq!(rep.passing, vec![Eps3Convention::Negated]);
    assert!(rep.worst_margin_negated >= 0.0);
    assert!(rep.worst_margin_verbatim < 0.0);
}

#[test]
fn l_bound_reports_failures() {
    // On βS² with β < 1, W = τF^{S}/β² + N^{S} + n log β − (n/2)log 4πτ − n exactly,
    // so the constant must absorb n log β: ε₃ = 0 is too small and fails at small τ.
    let taus = [1e-3, 0.1, 1.0];
    let link = LinkGeometry::round_sphere(2, 0.8).unwrap();
    let probes = link_probes(&link, 10, 9);
    let eps = epsilons_from_betas(&PerturbationBetas::new(0.8, 1.0, 2).unwrap());
    let too_small = EpsilonTriple { eps1: eps.eps1 / 2.0, eps2: 0.0, eps3: 0.0 };
    let rep = l_bound_check(&link, &too_small, &probes, &taus).unwrap();
    assert!(rep.passing.is_empty(), "{rep:?}");
    assert!(rep.worst_margin_negated < 0.0);
    // The sphere's own triple (0, 0, −n log β) is exactly sharp as τ → 0.
    let own = EpsilonTriple { eps1: 0.0, eps2: 0.0, eps3: 2.0 * 0.8f64.ln() };
    let rep = l_bound_check(&link, &own, &probes, &taus).unwrap();
    assert_eq!(rep.passing, vec![Eps3Convention::Negated]);
}
