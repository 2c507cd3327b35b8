//! Random probe generators shared by the property suites: smooth
//! nonnegative bumps on a grid and rotationally symmetric profile
//! perturbations of the round sphere.

use alloc::sync::Arc;
use alloc::vec::Vec;
use rand::Rng;

use crate::math::{cos, sin, PI};
use crate::numcore::RadialGrid;

/// C¹ bump (1 − t²)² on |t| < 1.
#[inline]
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        s * s
    }
}

/// Sum of 1–4 random bumps with centres and widths drawn inside `[lo, hi]`
/// (in the grid's natural coordinate: x, or log r on logarithmic grids).
/// The result is nonnegative and not identically zero.
pub fn random_bumps<R: Rng + ?Sized>(rng: &mut R, grid: &RadialGrid, lo: f64, hi: f64) -> Vec<f64> {
    let modes = rng.gen_range(1..=4);
    let log = grid.spacing() == crate::numcore::Spacing::Logarithmic;
    let span = hi - lo;
    let mut params = Vec::with_capacity(modes);
    for _ in 0..modes {
        let c = lo + span * rng.gen_range(0.2..0.8);
        let w = span * rng.gen_range(0.08..0.4);
        let a = rng.gen_range(0.2..1.0);
        params.push((c, w, a));
    }
    grid.nodes()
        .iter()
        .map(|&x| {
            let y = if log { crate::math::ln(x) } else { x };
            params.iter().map(|(c, w, a)| a * bump((y - c) / w)).sum()
        })
        .collect()
}

/// Coefficients of a random perturbation ψ = sin s·(1 + Σ c_k (1 − cos 2ks)).
/// Each term is even about both poles and vanishes there, so the profile
/// closes smoothly with |ψ'| = 1.
pub fn random_profile_coeffs<R: Rng + ?Sized>(rng: &mut R, amplitude: f64) -> [f64; 3] {
    let mut c = [0.0; 3];
    for ck in c.iter_mut() {
        *ck = rng.gen_range(-amplitude..amplitude);
    }
    c
}

pub fn perturbed_sine(s: f64, coeffs: &[f64]) -> f64 {
    let mut f = 1.0;
    for (k, c) in coeffs.iter().enumerate() {
        f += c * (1.0 - cos(2.0 * (k + 1) as f64 * s));
    }
    sin(s) * f
}

/// Samples of a perturbed unit-sphere profile on a uniform arclength grid over [0, π].
pub fn perturbed_profile_samples(nodes: usize, coeffs: &[f64]) -> (Arc<RadialGrid>, Vec<f64>) {
    let grid = Arc::new(RadialGrid::uniform(0.0, PI, nodes).expect("valid grid"));
    let mut psi: Vec<f64> = grid.nodes().iter().map(|&s| perturbed_sine(s, coeffs)).collect();
    psi[0] = 0.0;
    psi[nodes - 1] = 0.0;
    (grid, psi)
}

/// Conformally round profile e^{2u}(dx² + sin²x g) with u = Σ c_k(1 − cos 2kx)
/// on a uniform grid over [0, π]: returns (grid, ψ = e^u sin x, φ = e^u).
pub fn perturbed_conformal_samples(nodes: usize, coeffs: &[f64]) -> (Arc<RadialGrid>, Vec<f64>, Vec<f64>) {
    let grid = Arc::new(RadialGrid::uniform(0.0, PI, nodes).expect("valid grid"));
    let phi: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let u: f64 = coeffs.iter().enumerate().map(|(k, c)| c * (1.0 - cos(2.0 * (k + 1) as f64 * x))).sum();
            crate::math::exp(u)
        })
        .collect();
    let mut psi: Vec<f64> = grid.nodes().iter().zip(&phi).map(|(x, f)| f * sin(*x)).collect();
    psi[0] = 0.0;
    psi[nodes - 1] = 0.0;
    (grid, psi, phi)
}

/// A random admissible potential on a cone: a Gaussian r²/(4τs) plus 1–3
/// link modes cos(kπx/L) with smooth Gaussian envelopes in log r, shifted
/// to unit mass.
pub fn random_cone_potential<R: Rng + ?Sized>(
    rng: &mut R,
    cone: &crate::cones::ConeGeometry,
    tau: f64,
) -> crate::error::Result<crate::cones::ConeField> {
    use crate::math::{cos, exp, ln};
    let length = cone.link_discretization()?.grid.last();
    let (r_lo, r_hi) = cone.window();
    let lo = ln(r_lo) + 0.2 * (ln(r_hi) - ln(r_lo));
    let hi = ln(30.0 * crate::math::sqrt(tau)).min(ln(r_hi));
    let s = rng.gen_range(0.5..2.0);
    let modes: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let k = rng.gen_range(0..=3) as f64;
            let c = rng.gen_range(lo..hi);
            let w = rng.gen_range(0.4..1.5);
            let a = rng.gen_range(-1.0..1.0);
            (k, c, w, a)
        })
        .collect();
    let f = crate::cones::ConeField::from_fn(cone, |r, x| {
        let lr = ln(r);
        r * r / (4.0 * tau * s)
            + modes.iter().map(|(k, c, w, a)| a * cos(k * PI * x / length) * exp(-((lr - c) / w) * ((lr - c) / w))).sum::<f64>()
    })?;
    crate::cones::normalize_potential(cone, &f, tau)
}
