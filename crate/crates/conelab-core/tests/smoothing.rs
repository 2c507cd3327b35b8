use conelab_core::flows::FlowState;
use conelab_core::links::LinkGeometry;
use conelab_core::numcore::*;
use conelab_core::smoothing::*;
use conelab_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use std::sync::Arc;

fn grid(a: f64, b: f64, n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::uniform(a, b, n).unwrap())
}

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn simpson(x: &[f64], y: &[f64]) -> f64 {
    assert!(x.len() % 2 == 1);
    let h = x[1] - x[0];
    let m = x.len() - 1;
    (0..=m).map(|i| y[i] * if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>() * h / 3.0
}

// ---- piecewise profile ----

#[test]
fn profile_is_c1_across_both_kinks() {
    let p = build_piecewise_h(1.05, 100.0).unwrap();
    assert!((p.b - 6.0).abs() < 1e-12);
    let (dh, dh1) = p.continuity_defect();
    assert!(dh < 1e-12 && dh1 < 1e-12, "{dh} {dh1}");
    assert!((p.eval(p.b)[1] - 1.0).abs() < 1e-12);
    assert!((p.eval(1.0)[0] - 1.0 / 1.05).abs() < 1e-12);
    let e = build_euclidean_smoothing(0.9, 10.0).unwrap();
    let (dh, dh1) = e.continuity_defect();
    assert!(dh < 1e-12 && dh1 < 1e-12);
    assert!((e.eval(e.b)[1] - 1.0).abs() < 1e-12);
    // The transition is concave when the cap is wider than the cone.
    assert!(e.eval(1.5)[2] < 0.0 && p.eval(1.5)[2] > 0.0);
}

#[test]
fn beta_one_is_flat_space() {
    let p = build_piecewise_h(1.0, 50.0).unwrap();
    assert_eq!(p.b, 1.0);
    for r in [0.1, 1.0, 3.0, 40.0] {
        let [h, h1, h2] = p.eval(r);
        assert!((h - r).abs() < 1e-14 && (h1 - 1.0).abs() < 1e-14 && h2 == 0.0);
    }
    let geom = DoublyWarpedGeometry::new(SmoothingProfile::PiecewiseH(p), 3, grid(0.05, 5.0, 101)).unwrap();
    let r = doubly_warped_scalar_curvature(&geom).unwrap();
    assert!(r.values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn construction_validates_parameters() {
    assert!(matches!(build_piecewise_h(0.0, 1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(build_piecewise_h(1.1, f64::INFINITY), Err(Error::InvalidInput(_))));
    assert!(matches!(build_piecewise_h(1.1, -1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(build_piecewise_h(0.9, 10.0), Err(Error::InvalidTransition { .. })));
    assert!(matches!(build_euclidean_smoothing(1.1, 10.0), Err(Error::InvalidTransition { .. })));
}

// ---- curvature ----

fn sine(r: f64) -> [f64; 3] {
    [r.sin(), r.cos(), -r.sin()]
}

fn line(r: f64) -> [f64; 3] {
    [r, 1.0, 0.0]
}

#[test]
fn round_sphere_curvature() {
    for n in [2usize, 3, 5] {
        let e = ExplicitH { h: sine, link_radius: 1.0 };
        let geom = DoublyWarpedGeometry::new(SmoothingProfile::Explicit(e), n, grid(0.1, 3.0, 64)).unwrap();
        let r = doubly_warped_scalar_curvature(&geom).unwrap();
        let want = (n * (n + 1)) as f64;
        assert!(r.values().iter().all(|v| (v - want).abs() < 1e-4), "n={n}");
    }
}

#[test]
fn linear_warp_is_the_cone() {
    let (n, beta) = (3usize, 1.3);
    let e = ExplicitH { h: line, link_radius: beta };
    let geom = DoublyWarpedGeometry::new(SmoothingProfile::Explicit(e), n, grid(0.2, 4.0, 40)).unwrap();
    let r = doubly_warped_scalar_curvature(&geom).unwrap();
    let nn = n as f64;
    for (x, v) in geom.grid().nodes().iter().zip(r.values()) {
        let cone = nn * (nn - 1.0) * (beta.powi(-2) - 1.0) / (x * x);
        assert!((v - cone).abs() < 1e-10);
    }
}

#[test]
fn piecewise_curvature_by_region() {
    let (n, beta) = (3usize, 1.05);
    let p = build_piecewise_h(beta, 10.0).unwrap();
    let geom = DoublyWarpedGeometry::new(SmoothingProfile::PiecewiseH(p), n, grid(0.01, 3.0, 300)).unwrap();
    let r = doubly_warped_scalar_curvature(&geom).unwrap();
    let nn = n as f64;
    for (x, v) in geom.grid().nodes().iter().zip(r.values()) {
        let h = p.eval(*x)[0];
        if *x < 1.0 {
            assert!(v.abs() < 1e-10, "cap at {x}: {v}");
        } else if *x >= p.b {
            assert!((v - nn * (nn - 1.0) * (beta.powi(-2) - 1.0) / (h * h)).abs() < 1e-10);
        } else {
            // Inside the transition: finite differences of h.
            let e = 1e-4;
            let (hm, hp) = (p.eval(x - e)[0], p.eval(x + e)[0]);
            let (d1, d2) = ((hp - hm) / (2.0 * e), (hp - 2.0 * h + hm) / (e * e));
            let fd = (nn * (nn - 1.0) / (beta * beta) - nn * (nn - 1.0) * d1 * d1 - 2.0 * nn * h * d2) / (h * h);
            if (x - 1.0).abs() > 2e-4 && (x - p.b).abs() > 2e-4 {
                assert!((v - fd).abs() < 1e-5, "{x}: {v} vs {fd}");
            }
        }
    }
}

#[test]
fn nonpositive_warp_is_degenerate() {
    fn shifted(r: f64) -> [f64; 3] {
        [r - 1.0, 1.0, 0.0]
    }
    let e = ExplicitH { h: shifted, link_radius: 1.0 };
    assert!(matches!(
        DoublyWarpedGeometry::new(SmoothingProfile::Explicit(e), 3, grid(0.5, 3.0, 32)),
        Err(Error::Degenerate { .. })
    ));
}

// ---- pushforward ----

#[test]
fn pushforward_identity_for_flat_profile() {
    let p = build_piecewise_h(1.0, 5.0).unwrap();
    let g = grid(0.0, 6.0, 601);
    let v = ScalarField::new(
        g.clone(),
        g.nodes().iter().map(|r| (-r * r / 3.0).exp() * (1.0 + 0.3 * r.sin())).collect(),
        (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero),
    )
    .unwrap();
    let w = pushforward_test_function(&v, &SmoothingProfile::PiecewiseH(p), g).unwrap();
    assert!(w.values().iter().zip(v.values()).all(|(a, b)| (a - b).abs() < 1e-12));
}

/// ∫w² hⁿ dr on the smoothing against ∫v² ρⁿ dρ / kⁿ on the target.
fn normalization_pair(p: PiecewiseH, n: i32, v: impl Fn(f64) -> f64) -> (f64, f64) {
    let k = if p.target == ComparisonTarget::Cone { 1.0 } else { p.beta };
    // Nodes land on both kinks at even indices so Simpson never straddles one.
    let r_end = 11.5;
    let gm = grid(0.0, r_end, 2301);
    let rho_end = k * p.eval(r_end)[0];
    let gt = grid(0.0, rho_end, 8001);
    let vt: Vec<f64> = gt.nodes().iter().map(|r| v(*r)).collect();
    let field = ScalarField::new(gt.clone(), vt.clone(), (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero)).unwrap();
    let w = pushforward_test_function(&field, &SmoothingProfile::PiecewiseH(p), gm.clone()).unwrap();
    let m: Vec<f64> = gm.nodes().iter().zip(w.values()).map(|(r, w)| w * w * p.eval(*r)[0].powi(n)).collect();
    let t: Vec<f64> = gt.nodes().iter().zip(&vt).map(|(r, v)| v * v * (r / k).powi(n)).collect();
    (simpson(gm.nodes(), &m), simpson(gt.nodes(), &t))
}

#[test]
fn pushforward_preserves_gaussian_normalization() {
    let p = build_piecewise_h(1.05, 100.0).unwrap();
    let (m, t) = normalization_pair(p, 3, |r| (-r * r / 8.0).exp());
    // ∫₀^X e^{−ρ²/4}ρ³ dρ = 8(1 − (1 + X²/4)e^{−X²/4}).
    let x2 = (p.eval(11.5)[0]).powi(2) / 4.0;
    let exact = 8.0 * (1.0 - (1.0 + x2) * (-x2).exp());
    assert!((t - exact).abs() < 1e-9 * exact);
    assert!((m - exact).abs() < 1e-6 * exact, "{m} vs {exact}");
}

#[test]
fn pushforward_preserves_normalization_of_random_probes() {
    let mut r = rng(11);
    for i in 0..100 {
        let probe = RadialProbe::random(&mut r, 1.0);
        let v = |x: f64| {
            let s = x / probe.width;
            let l: f64 = -s * s / 8.0
                + probe.modes.iter().enumerate().map(|(k, a)| a * (((k + 1) as f64 * s).cos() - 1.0) / (k + 1) as f64).sum::<f64>();
            l.exp()
        };
        let p = if i % 2 == 0 { build_piecewise_h(1.05, 100.0) } else { build_euclidean_smoothing(0.95, 100.0) }.unwrap();
        let (m, t) = normalization_pair(p, 3, v);
        assert!((m - t).abs() < 1e-6 * t, "probe {i}: {m} vs {t}");
    }
}

#[test]
fn pushforward_needs_covering_target_grid() {
    let p = build_piecewise_h(1.05, 10.0).unwrap();
    let v = ScalarField::from_fn(grid(0.0, 2.0, 33), |r| (-r * r).exp()).unwrap();
    assert!(matches!(
        pushforward_test_function(&v, &SmoothingProfile::PiecewiseH(p), grid(0.0, 5.0, 33)),
        Err(Error::InvalidInput(_))
    ));
}

// ---- W gap ----

fn random_probes(seed: u64, count: usize) -> Vec<RadialProbe> {
    let mut r = rng(seed);
    (0..count).map(|_| RadialProbe::random(&mut r, 1.0)).collect()
}

const TAUS: [f64; 3] = [0.01, 0.02, 0.05];

#[test]
fn gap_vanishes_for_flat_profile() {
    let p = build_piecewise_h(1.0, 10.0).unwrap();
    let rep = smoothing_gap_check(3, &p, &random_probes(3, 20), &TAUS, &[10.0, 100.0]).unwrap();
    assert!(rep.entries.iter().all(|e| e.delta.abs() < 1e-8));
    assert!(rep.holds && rep.fitted_exponent.is_none() || rep.residuals.iter().all(|r| r.1 < 1e-8));
}

#[test]
fn gaussian_limit_gap_closed_form() {
    // A → ∞ and a heat-kernel probe at the same τ:
    // Δ = log β − (1 − β⁻²)/2 in every dimension.
    for (n, beta) in [(2usize, 1.1), (3, 1.05), (3, 0.9), (4, 1.2)] {
        let p = if beta > 1.0 { build_piecewise_h(beta, 1.0) } else { build_euclidean_smoothing(beta, 1.0) }.unwrap();
        let lim = p.limit();
        for tau in [0.01f64, 0.1] {
            let d = smoothing_gap(n, &lim, &RadialProbe::gaussian(tau.sqrt()), tau).unwrap();
            let want = match p.target {
                ComparisonTarget::Cone => beta.ln() - (1.0 - beta.powi(-2)) / 2.0,
                ComparisonTarget::Euclidean => 0.0,
            };
            assert!((d - want).abs() < 1e-8, "n={n} β={beta}: {d} vs {want}");
        }
    }
}

#[test]
fn cone_gap_converges_like_one_over_a() {
    let (n, beta) = (3usize, 1.05);
    let p = build_piecewise_h(beta, 10.0).unwrap();
    let rep = smoothing_gap_check(n, &p, &random_probes(5, 50), &TAUS, &[10.0, 100.0, 1000.0]).unwrap();
    let e = rep.fitted_exponent.unwrap();
    assert!((-1.3..=-0.7).contains(&e), "exponent {e}");
    assert!(rep.holds, "margin {}", rep.worst_margin);
    assert!(rep.entries.iter().all(|x| x.delta > -(n as f64 * beta.ln() + rep.c_constant / x.a)));
    assert!(!rep.bound_depends_on_tau);
}

#[test]
fn euclidean_gap_branch() {
    let (n, beta) = (3usize, 0.9);
    let p = build_euclidean_smoothing(beta, 10.0).unwrap();
    let rep = smoothing_gap_check(n, &p, &random_probes(6, 20), &TAUS, &[10.0, 100.0, 1000.0]).unwrap();
    let e = rep.fitted_exponent.unwrap();
    assert!((-1.3..=-0.7).contains(&e), "exponent {e}");
    assert!(rep.holds);
    assert!(rep.entries.iter().all(|x| x.delta > n as f64 * beta.ln() - rep.c_constant / x.a));
    // Flat cap over a Euclidean target: the A → ∞ gap is exactly zero.
    assert!(rep.entries.iter().all(|x| x.delta_limit.abs() < 1e-9));
}

#[test]
fn gap_is_invariant_under_parabolic_rescaling() {
    let p = build_piecewise_h(1.05, 30.0).unwrap();
    for probe in random_probes(8, 5) {
        let probe = probe.rescaled(0.15);
        let d = smoothing_gap(3, &p, &probe, 0.02).unwrap();
        for lambda in [0.5, 2.0] {
            let dl = smoothing_gap(3, &p.with_scale(lambda).unwrap(), &probe.rescaled(lambda), 0.02 * lambda * lambda).unwrap();
            assert!((d - dl).abs() < 1e-8, "{d} vs {dl}");
        }
    }
}

// ---- δ-family ----

fn relaxation(beta0: f64, rate: f64) -> LinkTrajectory {
    LinkTrajectory::RoundRelaxation { dim: 3, beta0, beta_inf: 1.0, rate }
}

fn delta_geom(delta: f64, traj: LinkTrajectory, g: Arc<RadialGrid>) -> DoublyWarpedGeometry {
    DoublyWarpedGeometry::new(SmoothingProfile::DeltaFamily(DeltaFamily { delta, trajectory: traj }), 3, g).unwrap()
}

#[test]
fn constant_trajectory_has_no_rest() {
    let g = delta_geom(0.1, relaxation(1.0, 1.0), grid(0.5, 5.0, 64));
    let (sup, field) = delta_smoothing_rest(&g).unwrap();
    assert_eq!(sup, 0.0);
    assert!(field.values().iter().all(|v| *v == 0.0));
}

#[test]
fn rest_scales_linearly_in_delta() {
    let g = delta_geom(1e-2, relaxation(1.2, 1.0), grid(1.0, 10.0, 91));
    let sweep = delta_sweep(&g).unwrap();
    assert!(sweep.linear, "{:?}", sweep.ratios);
    assert!(sweep.sups.windows(2).all(|w| w[1] < w[0]));
    let (s1, _) = delta_smoothing_rest(&g).unwrap();
    let (s2, _) = delta_smoothing_rest(&delta_geom(5e-3, relaxation(1.2, 1.0), grid(1.0, 10.0, 91))).unwrap();
    assert!((1.6..=2.4).contains(&(s1 / s2)));
    let tiny = delta_smoothing_rest(&delta_geom(1e-8, relaxation(1.2, 1.0), grid(1.0, 10.0, 91))).unwrap().0;
    assert!(tiny < 1e-6);
}

#[test]
fn rest_is_scale_covariant() {
    // R_δ(r) = R_1(r/√δ)/δ exactly; no uniform O(δ) down to the tip.
    let delta: f64 = 0.04;
    let g1 = grid(0.5, 5.0, 46);
    let gd = grid(0.5 * delta.sqrt(), 5.0 * delta.sqrt(), 46);
    let (_, f1) = delta_smoothing_rest(&delta_geom(1.0, relaxation(1.3, 0.7), g1)).unwrap();
    let (_, fd) = delta_smoothing_rest(&delta_geom(delta, relaxation(1.3, 0.7), gd)).unwrap();
    for (a, b) in f1.values().iter().zip(fd.values()) {
        assert!((a / delta - b).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn delta_curvature_matches_warped_formula() {
    let (beta0, rate, delta) = (1.3, 0.8, 0.5);
    let g = delta_geom(delta, relaxation(beta0, rate), grid(0.4, 3.0, 27));
    let r = doubly_warped_scalar_curvature(&g).unwrap();
    let beta = |t: f64| (1.0 + (beta0 * beta0 - 1.0) * (-rate * t).exp()).sqrt();
    let h = |x: f64| x * beta(delta / (x * x));
    for (x, v) in g.grid().nodes().iter().zip(r.values()) {
        let e = 1e-4;
        let (hm, h0, hp) = (h(x - e), h(*x), h(x + e));
        let (d1, d2) = ((hp - hm) / (2.0 * e), (hp - 2.0 * h0 + hm) / (e * e));
        let want = (6.0 - 6.0 * d1 * d1 - 6.0 * h0 * d2) / (h0 * h0);
        assert!((v - want).abs() < 1e-5 * want.abs().max(1.0), "{x}: {v} vs {want}");
    }
}

fn sampled_flow(beta0: f64, rate: f64, count: usize, t_end: f64) -> LinkTrajectory {
    let states = (0..count)
        .map(|k| {
            let t = t_end * k as f64 / (count - 1) as f64;
            let b = (1.0 + (beta0 * beta0 - 1.0) * (-rate * t).exp()).sqrt();
            FlowState::with_constant_potential(LinkGeometry::round_sphere(3, b).unwrap(), 17).unwrap().at_time(t)
        })
        .collect();
    LinkTrajectory::Flow(Arc::new(states))
}

#[test]
fn sampled_flow_matches_closed_form_trajectory() {
    let g = grid(1.0, 4.0, 31);
    let exact = delta_smoothing_rest(&delta_geom(0.5, relaxation(1.2, 1.0), g.clone())).unwrap().1;
    let sampled = delta_smoothing_rest(&delta_geom(0.5, sampled_flow(1.2, 1.0, 401, 2.0), g)).unwrap().1;
    for (a, b) in exact.values().iter().zip(sampled.values()) {
        assert!((a - b).abs() < 1e-5 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn unready_trajectories_are_rejected() {
    let g = grid(1.0, 4.0, 31);
    assert!(matches!(delta_smoothing_rest(&delta_geom(0.1, relaxation(1.2, 0.0), g.clone())), Err(Error::LinkFlowNotReady)));
    assert!(matches!(
        delta_smoothing_rest(&delta_geom(0.1, sampled_flow(1.2, 1.0, 3, 1.0), g.clone())),
        Err(Error::LinkFlowNotReady)
    ));
    // Curvature along a flowing (possibly non-round) link is not radial.
    let flow = delta_geom(0.1, sampled_flow(1.2, 1.0, 8, 1.0), g);
    assert!(matches!(doubly_warped_scalar_curvature(&flow), Err(Error::Unsupported(_))));
}

// ---- β window ----

#[test]
fn round_cone_bound_is_below_upper_bound() {
    use conelab_core::cones::{cone_nu_upper_bound, ConeGeometry};
    for beta in [0.6, 0.9, 1.0, 1.05, 1.1] {
        let lo = round_cone_nu_lower_bound(3, beta).unwrap();
        let cone = ConeGeometry::for_tau(LinkGeometry::round_sphere(3, beta).unwrap(), 1.0).unwrap();
        let hi = cone_nu_upper_bound(&cone, 1.0).unwrap().value;
        assert!(lo <= hi + 1e-12, "β={beta}: {lo} > {hi}");
    }
    assert_eq!(round_cone_nu_lower_bound(3, 1.0).unwrap(), 0.0);
    // κ vanishes at β² = (2n−1)/n.
    assert_eq!(round_cone_nu_lower_bound(3, (5.0f64 / 3.0).sqrt() + 1e-9).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn window_for_three_dimensional_links() {
    let rep = beta_window_scan(3, (0.7, 1.1), 41, 100.0, eta_3()).unwrap();
    let (lo, hi) = rep.window.unwrap();
    assert!(lo <= 0.95 && hi >= 1.02, "{lo} {hi}");
    assert!(lo >= 0.74 && hi <= 1.07, "{lo} {hi}");
    assert!(rep.contained_in_b2);
    assert!(!rep.dimension_note.is_empty());
    let ordered: Vec<f64> = rep.rows.iter().map(|r| r.beta).collect();
    assert!(ordered.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn window_edge_cases() {
    let rep = beta_window_scan(3, (0.97, 1.03), 4, 100.0, 0.01).unwrap();
    assert!(rep.rows.iter().any(|r| r.beta == 1.0 && r.inside));
    let zero = beta_window_scan(3, (0.97, 1.03), 4, 100.0, 0.0).unwrap();
    assert_eq!(zero.window, Some((1.0, 1.0)));
    assert!(zero.rows.iter().filter(|r| r.inside).all(|r| r.beta == 1.0));
    assert!(matches!(beta_window_scan(3, (1.1, 0.9), 4, 100.0, 0.1), Err(Error::InvalidInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_is_c1_and_monotone(beta in 0.3f64..2.5, a in 0.5f64..1e3, x in 0.0f64..50.0) {
        let p = if beta >= 1.0 { build_piecewise_h(beta, a) } else { build_euclidean_smoothing(beta, a) }.unwrap();
        let (dh, dh1) = p.continuity_defect();
        prop_assert!(dh < 1e-9 * p.b && dh1 < 1e-12);
        let [_, h1, _] = p.eval(x);
        prop_assert!(h1 >= (1.0f64).min(1.0 / beta) - 1e-12 && h1 <= (1.0f64).max(1.0 / beta) + 1e-12);
    }
}
