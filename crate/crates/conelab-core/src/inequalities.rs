//! The sharp one-dimensional inequalities behind the cone bounds, and the
//! comparison of a perturbed sphere's W-functional with the round one.
//!
//! * weighted Hardy: ∫ r^{n−2}v² ≤ 4/(n−1)² ∫ rⁿ v'², sharp along
//!   v ≈ r^{−(n−1)/2};
//! * radial log-Sobolev: the Euclidean inequality in dimension n+1 for
//!   radial functions, with equality on Gaussians;
//! * for a link with β₁²g^{Sⁿ} ≤ g^N ≤ β₂²g^{Sⁿ} and R^N ≥ n(n−1)/β₂², lower
//!   bounds of F^N and N^N by the round quantities.
//!
//! The comparison identifies N with Sⁿ through the polar coordinate:
//! x ∈ [0, L] ↦ θ = πx/L.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::links::{LinkDiscretization, LinkGeometry};
use crate::math::{abs, exp, ln, powf, powi, sin, sphere_volume, sqrt, xlogx2, E, PI};
use crate::numcore::stencil::{self, End};
use crate::numcore::{BoundaryKind, RadialGrid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyReport {
    /// ∫ r^{n−2} v².
    pub lhs: f64,
    /// 4/(n−1)² ∫ rⁿ v'².
    pub rhs: f64,
    pub ratio: f64,
}

pub fn weighted_hardy_gap(v: &ScalarField, dim: usize) -> Result<HardyReport> {
    if dim < 2 {
        return Err(Error::InvalidInput("hardy inequality needs n >= 2"));
    }
    let g = v.grid();
    let n = dim as f64;
    let vals = v.values();
    let dv = g.derivative(vals);
    let lhs_i: Vec<f64> = g.nodes().iter().zip(vals).map(|(r, x)| powf(*r, n - 2.0) * x * x).collect();
    let rhs_i: Vec<f64> = g.nodes().iter().zip(&dv).map(|(r, d)| powf(*r, n) * d * d).collect();
    let lhs = g.quad(&lhs_i);
    if !(lhs > 0.0) {
        return Err(Error::ZeroField);
    }
    let rhs = 4.0 / ((n - 1.0) * (n - 1.0)) * g.quad(&rhs_i);
    Ok(HardyReport { lhs, rhs, ratio: lhs / rhs })
}

/// v = r^{−(n−1)/2+δ}·χ(log r) with χ = sin² over log r ∈ [log r_min, 0],
/// on a logarithmic grid reaching r_min = e^{−200}. The ratio tends to 1
/// as δ → 0 (up to the O((π/200)²) cost of the cutoff).
pub fn hardy_near_extremal(dim: usize, delta: f64, nodes: usize) -> Result<ScalarField> {
    let t0 = -200.0;
    let grid = Arc::new(RadialGrid::logarithmic(exp(t0), exp(1.0), nodes)?);
    let c = (dim as f64 - 1.0) / 2.0;
    let vals = grid
        .nodes()
        .iter()
        .map(|r| {
            let t = ln(*r);
            if t >= 0.0 {
                return 0.0;
            }
            let s = sin(PI * (t - t0) / -t0);
            exp((delta - c) * t) * s * s
        })
        .collect();
    ScalarField::new(grid, vals, (BoundaryKind::DirichletZero, BoundaryKind::DirichletZero))
}

/// gap = 4τ₀∫rⁿw'² − [∫rⁿw² log w² + (n+1)/2·log(4πτ₀) + (n+1) − log vol(Sⁿ)].
pub fn radial_log_sobolev_gap(w: &ScalarField, dim: usize, tau0: f64) -> Result<f64> {
    let g = w.grid();
    let n = dim as f64;
    let vals = w.values();
    let rn: Vec<f64> = g.nodes().iter().map(|r| powf(*r, n)).collect();
    let mass_i: Vec<f64> = vals.iter().zip(&rn).map(|(x, p)| p * x * x).collect();
    let mass = g.quad(&mass_i);
    if abs(mass - 1.0) > 1e-6 {
        return Err(Error::NotNormalized { mass });
    }
    let dw = g.derivative(vals);
    let grad: Vec<f64> = dw.iter().zip(&rn).map(|(d, p)| p * d * d).collect();
    let ent: Vec<f64> = vals.iter().zip(&rn).map(|(x, p)| p * xlogx2(*x)).collect();
    Ok(4.0 * tau0 * g.quad(&grad)
        - (g.quad(&ent) + (n + 1.0) / 2.0 * ln(4.0 * PI * tau0) + (n + 1.0) - ln(sphere_volume(dim))))
}

/// w with w² = vol(Sⁿ)(4πτ₀)^{−(n+1)/2}e^{−r²/(4τ₀)}: the equality case.
pub fn log_sobolev_gaussian(grid: Arc<RadialGrid>, dim: usize, tau0: f64) -> Result<ScalarField> {
    let n = dim as f64;
    let c = sphere_volume(dim) * powf(4.0 * PI * tau0, -(n + 1.0) / 2.0);
    let bk = (BoundaryKind::NeumannZero, BoundaryKind::DirichletZero);
    let vals = grid.nodes().iter().map(|r| sqrt(c * exp(-r * r / (4.0 * tau0)))).collect();
    ScalarField::new(grid, vals, bk)
}

/// w/‖w‖ in L²(rⁿdr).
pub fn normalize_radial(w: &ScalarField, dim: usize) -> Result<ScalarField> {
    let g = w.grid();
    let m: Vec<f64> = g.nodes().iter().zip(w.values()).map(|(r, x)| powf(*r, dim as f64) * x * x).collect();
    let mass = g.quad(&m);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::ZeroField);
    }
    Ok(w.scaled(1.0 / sqrt(mass)))
}

// ---------------------------------------------------------------------------
// Perturbations of the round sphere.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBetas {
    pub beta1: f64,
    pub beta2: f64,
    pub dim: usize,
}

impl PerturbationBetas {
    pub fn new(beta1: f64, beta2: f64, dim: usize) -> Result<Self> {
        if !(beta1 > 0.0 && beta1 <= 1.0 && beta2 >= 1.0) || dim < 2 {
            return Err(Error::InvalidInput("need 0 < beta1 <= 1 <= beta2 and n >= 2"));
        }
        Ok(Self { beta1, beta2, dim })
    }

    /// β₁ⁿ/β₂^{n+4}, the factor in the F bound.
    pub fn f_factor(&self) -> f64 {
        let n = self.dim as i32;
        powi(self.beta1, n) / powi(self.beta2, n + 4)
    }

    /// β₂ⁿ/β₁ⁿ, the factor in the N bound.
    pub fn n_factor(&self) -> f64 {
        let n = self.dim as i32;
        powi(self.beta2 / self.beta1, n)
    }

    /// (β₁ⁿ/β₂ⁿ − β₂ⁿ/β₁ⁿ)·vol(Sⁿ)/e ≤ 0.
    pub fn n_volume_term(&self) -> f64 {
        (1.0 / self.n_factor() - self.n_factor()) * sphere_volume(self.dim) / E
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonTriple {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

/// ε₁ = 1 − β₁ⁿ/β₂^{n+4}, ε₂ = β₂ⁿ/β₁ⁿ − 1,
/// ε₃ = (β₁ⁿ/β₂ⁿ − β₂ⁿ/β₁ⁿ)·vol(Sⁿ)/e + n log β₁, exactly as displayed.
///
/// The F and N bounds combine into L(ε₁, ε₂, −ε₃): with this ε₃ the
/// subtracted constant has the wrong sign, see [`EpsilonTriple::negated`].
pub fn epsilons_from_betas(b: &PerturbationBetas) -> EpsilonTriple {
    EpsilonTriple {
        eps1: 1.0 - b.f_factor(),
        eps2: b.n_factor() - 1.0,
        eps3: b.n_volume_term() + b.dim as f64 * ln(b.beta1),
    }
}

impl EpsilonTriple {
    pub fn negated(&self) -> Self {
        Self { eps3: -self.eps3, ..*self }
    }
}

/// Ratios of the link metric to the round metric along the polar coordinate:
/// (min, max) over interior nodes of φ·L/π (radial direction) and ψ/sin θ.
pub fn metric_bracket(link: &LinkGeometry) -> Result<(f64, f64)> {
    let d = link.discretize()?;
    let n = d.dim;
    let len = d.grid.last() - d.grid.first();
    let w = sphere_volume(n - 1);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let m = d.grid.len();
    for i in 1..m - 1 {
        let phi = 1.0 / sqrt(d.metric_inv[i]);
        let psi = powf(d.measure[i] / (w * phi), 1.0 / (n as f64 - 1.0));
        let theta = PI * (d.grid.nodes()[i] - d.grid.first()) / len;
        for ratio in [phi * len / PI, psi / sin(theta)] {
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok((lo, hi))
}

/// The unit round sphere in the link's polar coordinate.
fn round_reference(d: &LinkDiscretization) -> LinkDiscretization {
    let n = d.dim;
    let len = d.grid.last() - d.grid.first();
    let k = PI / len;
    let w = sphere_volume(n - 1);
    let mut measure: Vec<f64> =
        d.grid.nodes().iter().map(|x| w * powi(sin(k * (x - d.grid.first())), n as i32 - 1) * k).collect();
    let last = measure.len() - 1;
    measure[0] = 0.0;
    measure[last] = 0.0;
    LinkDiscretization {
        dim: n,
        grid: d.grid.clone(),
        measure,
        metric_inv: alloc::vec![k * k; d.grid.len()],
        curvature: alloc::vec![(n * (n - 1)) as f64; d.grid.len()],
    }
}

/// F and N of f + c at scale τ, with c chosen so that
/// ∫e^{−f−c}(4πτ)^{−n/2}dv = 1; returns (F, N, c).
fn f_and_n(d: &LinkDiscretization, f: &[f64], tau: f64) -> Result<(f64, f64, f64)> {
    if f.len() != d.grid.len() {
        return Err(Error::GridMismatch);
    }
    let n = d.dim as f64;
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = f.iter().zip(&d.measure).map(|(v, m)| m * exp(-(v - fmin))).collect();
    let mass = d.grid.quad(&raw);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::ZeroField);
    }
    // e^{−f−c}(4πτ)^{−n/2} = e^{−(f−fmin)}/mass.
    let c = ln(mass) - fmin - n / 2.0 * ln(4.0 * PI * tau);
    let fx = stencil::d1(f, d.grid.step(), End::Even, End::Even);
    let mut fi = Vec::with_capacity(f.len());
    let mut ni = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        let u = exp(-(f[i] - fmin)) / mass;
        fi.push((d.metric_inv[i] * fx[i] * fx[i] + d.curvature[i]) * u * d.measure[i]);
        ni.push(if u > 0.0 { -u * ln(u) * d.measure[i] } else { 0.0 });
    }
    Ok((d.grid.quad(&fi), d.grid.quad(&ni), c))
}

/// Link and round-sphere values of F and N for one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentValues {
    pub f_link: f64,
    pub n_link: f64,
    /// F^{Sⁿ}(f + δ).
    pub f_round: f64,
    /// N^{Sⁿ}(f + δ).
    pub n_round: f64,
    pub delta: f64,
}

pub fn component_values(link: &LinkGeometry, f: &ScalarField, tau: f64) -> Result<ComponentValues> {
    let d = link.discretize()?;
    if f.grid().nodes() != d.grid.nodes() {
        return Err(Error::GridMismatch);
    }
    let s = round_reference(&d);
    let (f_link, n_link, c_link) = f_and_n(&d, f.values(), tau)?;
    let (f_round, n_round, c_round) = f_and_n(&s, f.values(), tau)?;
    Ok(ComponentValues { f_link, n_link, f_round, n_round, delta: c_round - c_link })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub bracket: (f64, f64),
    /// F^N − β₁ⁿ/β₂^{n+4}·F^{Sⁿ}(f+δ) per probe.
    pub f_margins: Vec<f64>,
    /// N-bound margins with the constant +n log β₁ (the proof's).
    pub n_margins_proof: Vec<f64>,
    /// N-bound margins with the constant −n log β₂ (the statement's).
    pub n_margins_statement: Vec<f64>,
}

impl PerturbationReport {
    pub fn worst(v: &[f64]) -> f64 {
        v.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn sphere_perturbation_bounds_check(
    link: &LinkGeometry,
    betas: &PerturbationBetas,
    probes: &[ScalarField],
    tau: f64,
) -> Result<PerturbationReport> {
    let bracket = metric_bracket(link)?;
    let d = link.discretize()?;
    let tol = 1e-9;
    let n = betas.dim as f64;
    let r_min = d.curvature.iter().cloned().fold(f64::INFINITY, f64::min);
    if d.dim != betas.dim
        || bracket.0 < betas.beta1 - tol
        || bracket.1 > betas.beta2 + tol
        || r_min < n * (n - 1.0) / (betas.beta2 * betas.beta2) - 1e-6
    {
        return Err(Error::NotInBracket);
    }
    let mut report = PerturbationReport {
        bracket,
        f_margins: Vec::with_capacity(probes.len()),
        n_margins_proof: Vec::with_capacity(probes.len()),
        n_margins_statement: Vec::with_capacity(probes.len()),
    };
    for p in probes {
        let c = component_values(link, p, tau)?;
        report.f_margins.push(c.f_link - betas.f_factor() * c.f_round);
        let base = c.n_link - betas.n_factor() * c.n_round - betas.n_volume_term();
        report.n_margins_proof.push(base - n * ln(betas.beta1));
        report.n_margins_statement.push(base + n * ln(betas.beta2));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eps3Convention {
    /// ε₃ as displayed.
    Verbatim,
    /// −ε₃, the sign produced by the F and N bounds.
    Negated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LBoundReport {
    pub worst_margin_verbatim: f64,
    pub worst_margin_negated: f64,
    /// Conventions under which every margin was ≥ −1e-8.
    pub passing: Vec<Eps3Convention>,
    pub checks: usize,
}

/// W^N(f, τ) − [τ(1−ε₁)F^{Sⁿ}(f+δ) + (1+ε₂)N^{Sⁿ}(f+δ) − (n/2)log 4πτ − n − ε₃]
/// over all probes and τ, under both ε₃ conventions.
///
/// W^N = τF^N + N^N − (n/2)log 4πτ − n, so with ε = 0 on the round sphere the
/// margin vanishes identically.
pub fn l_bound_check(
    link: &LinkGeometry,
    eps: &EpsilonTriple,
    probes: &[ScalarField],
    taus: &[f64],
) -> Result<LBoundReport> {
    let mut worst = f64::INFINITY;
    for &tau in taus {
        for p in probes {
            let c = component_values(link, p, tau)?;
            let m = tau * (c.f_link - (1.0 - eps.eps1) * c.f_round) + c.n_link - (1.0 + eps.eps2) * c.n_round;
            worst = worst.min(m);
        }
    }
    let worst_margin_verbatim = worst + eps.eps3;
    let worst_margin_negated = worst - eps.eps3;
    let mut passing = Vec::new();
    if worst_margin_verbatim >= -1e-8 {
        passing.push(Eps3Convention::Verbatim);
    }
    if worst_margin_negated >= -1e-8 {
        passing.push(Eps3Convention::Negated);
    }
    Ok(LBoundReport { worst_margin_verbatim, worst_margin_negated, passing, checks: taus.len() * probes.len() })
}
