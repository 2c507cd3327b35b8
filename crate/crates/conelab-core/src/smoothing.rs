//! Warped-product smoothings of cones over round spheres.
//!
//! Two constructions replace the tip of C(βSⁿ) by something smooth:
//!
//! * the piecewise profile h: dr² + h(r)²g_{βSⁿ} with h = r/β near the tip
//!   (flat ℝ^{n+1}), a quadratic transition on [1, b], b = 1 + A|β − 1|,
//!   and h' = 1 beyond b (the cone again, shifted);
//! * the δ-family dr² + r²ĝ(δ/r²) built from a link trajectory ĝ(θ) that
//!   converges to a round metric as θ → ∞.
//!
//! Test functions on the comparison target are carried to the smoothing by
//! w(r) = √(k h'(r))·v(k h(r)), where the target is dρ² + (ρ/k)²g_{βSⁿ}:
//! k = 1 for the cone and k = β for Euclidean space. The map preserves the
//! L² normalization, so ν of the smoothing is bounded below by the target's
//! ν plus the worst gap W^M(w) − W^T(v).
//!
//! For β > 1 the cone bound uses Hardy's inequality in dimension n+1:
//! ν^{C(βSⁿ)} ≥ n log β + (n+1)/2·log κ with κ = ((2n−1)β⁻² − n)/(n−1);
//! for β ≤ 1 the cone dominates Euclidean space and ν^{C(βSⁿ)} ≥ n log β.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::flows::{roundness, FlowState, ROUNDNESS_THRESHOLD};
use crate::links::LinkGeometry;
use crate::math::{abs, cos, exp, ln, powi, sin, sphere_volume, sqrt, PI};
use crate::numcore::{BoundaryKind, RadialGrid, ScalarField};

/// β-window for n = 3 quoted with the A.4 perturbation bounds.
pub const WINDOW_A4: (f64, f64) = (0.77, 1.05);
/// β-window for n = 3 quoted with the explicit smoothing: (2/e, √(2e/(e+2))).
pub const WINDOW_B2: (f64, f64) = (0.7357588823428847, 1.0734215246265832);

/// η₃ = 1 − log 2 = ν of ℝ × S².
pub fn eta_3() -> f64 {
    1.0 - core::f64::consts::LN_2
}

/// Which space the smoothing is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonTarget {
    /// C(βSⁿ) itself; used for β ≥ 1.
    Cone,
    /// ℝ^{n+1}; used for β ≤ 1.
    Euclidean,
}

impl ComparisonTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            ComparisonTarget::Cone => "cone",
            ComparisonTarget::Euclidean => "euclidean",
        }
    }
}

/// h(r) = s·h₁(r/s) with h₁ = r/β on [0, 1], r/β ± (r−1)²/(2βA) on [1, b]
/// and r − b + h₁(b) beyond; the sign is that of β − 1 so that h'(b) = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseH {
    pub beta: f64,
    pub a: f64,
    /// 1 + A|β − 1|; infinite for the A → ∞ limit.
    pub b: f64,
    /// Radius of the flat cap (1 in the unit construction).
    pub scale: f64,
    pub target: ComparisonTarget,
}

/// The construction for β ≥ 1, compared with the cone.
pub fn build_piecewise_h(beta: f64, a: f64) -> Result<PiecewiseH> {
    check_beta_a(beta, a)?;
    let b = 1.0 + a * (beta - 1.0);
    if b < 1.0 {
        return Err(Error::InvalidTransition { b });
    }
    Ok(PiecewiseH { beta, a, b, scale: 1.0, target: ComparisonTarget::Cone })
}

/// The mirrored construction for β ≤ 1 (concave transition), compared with
/// Euclidean space.
pub fn build_euclidean_smoothing(beta: f64, a: f64) -> Result<PiecewiseH> {
    check_beta_a(beta, a)?;
    let b = 1.0 + a * (1.0 - beta);
    if b < 1.0 {
        return Err(Error::InvalidTransition { b });
    }
    Ok(PiecewiseH { beta, a, b, scale: 1.0, target: ComparisonTarget::Euclidean })
}

fn check_beta_a(beta: f64, a: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput("beta must be positive"));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidInput("A must be positive and finite"));
    }
    Ok(())
}

impl PiecewiseH {
    /// The same construction with the cap radius multiplied by `lambda`.
    pub fn with_scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput("scale must be positive"));
        }
        Ok(Self { scale: self.scale * lambda, ..*self })
    }

    /// A → ∞: h = r/β everywhere, the smoothing becomes flat space.
    pub fn limit(&self) -> Self {
        Self { a: f64::INFINITY, b: f64::INFINITY, ..*self }
    }

    fn sign(&self) -> f64 {
        match self.target {
            ComparisonTarget::Cone => 1.0,
            ComparisonTarget::Euclidean => -1.0,
        }
    }

    /// Closed form of piece `i` (0: cap, 1: transition, 2: outer) in unit
    /// scale, evaluated at any x.
    fn unit_piece(&self, i: usize, x: f64) -> [f64; 3] {
        let beta = self.beta;
        match i {
            0 => [x / beta, 1.0 / beta, 0.0],
            1 => {
                if self.a.is_infinite() {
                    return [x / beta, 1.0 / beta, 0.0];
                }
                let s = self.sign();
                let d = x - 1.0;
                [x / beta + s * d * d / (2.0 * beta * self.a), 1.0 / beta + s * d / (beta * self.a), s / (beta * self.a)]
            }
            _ => {
                let hb = self.unit_piece(1, self.b)[0];
                [x - self.b + hb, 1.0, 0.0]
            }
        }
    }

    /// (h, h', h'') of piece `i` at r; the closed form is evaluated even
    /// outside the piece's interval.
    pub fn piece(&self, i: usize, r: f64) -> [f64; 3] {
        let s = self.scale;
        let [h, h1, h2] = self.unit_piece(i, r / s);
        [s * h, h1, h2 / s]
    }

    /// Transition radii (s, s·b).
    pub fn kinks(&self) -> [f64; 2] {
        [self.scale, self.scale * self.b]
    }

    /// (h, h', h'') at r. A node on a kink takes the piece to its right.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let [k1, k2] = self.kinks();
        let i = if r < k1 {
            0
        } else if r < k2 {
            1
        } else {
            2
        };
        self.piece(i, r)
    }

    /// Largest jumps of h and h' across the two kinks.
    pub fn continuity_defect(&self) -> (f64, f64) {
        let mut dh = 0.0f64;
        let mut dh1 = 0.0f64;
        for (i, k) in self.kinks().into_iter().enumerate() {
            if !k.is_finite() {
                continue;
            }
            let (l, r) = (self.piece(i, k), self.piece(i + 1, k));
            dh = dh.max(abs(l[0] - r[0]));
            dh1 = dh1.max(abs(l[1] - r[1]));
        }
        (dh, dh1)
    }

    /// k of the target dρ² + (ρ/k)²g_{βSⁿ}.
    fn k(&self) -> f64 {
        match self.target {
            ComparisonTarget::Cone => 1.0,
            ComparisonTarget::Euclidean => self.beta,
        }
    }

    /// h⁻¹(y) by bisection (h is increasing).
    fn invert(&self, y: f64) -> f64 {
        let mut hi = self.scale.max(1e-300);
        while self.eval(hi)[0] < y {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid)[0] < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// An explicit warping function over a round link of the given radius.
#[derive(Debug, Clone, Copy)]
pub struct ExplicitH {
    /// r ↦ (h, h', h'').
    pub h: fn(f64) -> [f64; 3],
    pub link_radius: f64,
}

/// A family of link metrics ĝ(θ), θ ≥ 0, converging to a round metric.
#[derive(Debug, Clone)]
pub enum LinkTrajectory {
    /// Round spheres with β(θ)² = β∞² + (β₀² − β∞²)e^{−κθ}.
    RoundRelaxation { dim: usize, beta0: f64, beta_inf: f64, rate: f64 },
    /// Recorded states of a renormalized flow (conformal gauge), θ measured
    /// from the first state. Beyond the last state the metric is frozen.
    Flow(Arc<Vec<FlowState>>),
}

impl LinkTrajectory {
    pub fn dim(&self) -> usize {
        match self {
            LinkTrajectory::RoundRelaxation { dim, .. } => *dim,
            LinkTrajectory::Flow(s) => s.first().map_or(0, |s| s.dim()),
        }
    }

    /// Exponential convergence: the round family needs κ > 0; a flow must
    /// end round to [`ROUNDNESS_THRESHOLD`] with its roundness decreasing
    /// over the last half.
    pub fn converged(&self) -> Result<bool> {
        match self {
            LinkTrajectory::RoundRelaxation { beta0, beta_inf, rate, .. } => {
                Ok(*rate > 0.0 && *beta0 > 0.0 && *beta_inf > 0.0 && rate.is_finite())
            }
            LinkTrajectory::Flow(states) => {
                let len = states.len();
                if len < 4 {
                    return Ok(false);
                }
                let r = |k: usize| roundness(states[k].link());
                let (a, b, c) = (r(len / 2)?, r(3 * len / 4)?, r(len - 1)?);
                Ok(c < ROUNDNESS_THRESHOLD && a >= b && b >= c)
            }
        }
    }

    /// (u, ∂_θu, ∂²_θu) of ĝ(θ) = e^{2u}g_{Sⁿ} at each link node.
    fn jet(&self, theta: f64) -> Result<Vec<[f64; 3]>> {
        match self {
            LinkTrajectory::RoundRelaxation { beta0, beta_inf, rate, .. } => {
                let d = (beta0 * beta0 - beta_inf * beta_inf) * exp(-rate * theta);
                let b2 = beta_inf * beta_inf + d;
                let (b2_1, b2_2) = (-rate * d, rate * rate * d);
                let (g1, g2) = (b2_1 / b2, b2_2 / b2);
                Ok(alloc::vec![[0.5 * ln(b2), 0.5 * g1, 0.5 * (g2 - g1 * g1)]])
            }
            LinkTrajectory::Flow(states) => {
                let t0 = states[0].time();
                let times: Vec<f64> = states.iter().map(|s| s.time() - t0).collect();
                let last = times.len() - 1;
                let us = |k: usize| conformal_factor(&states[k]);
                if theta >= times[last] {
                    return Ok(us(last)?.into_iter().map(|u| [u, 0.0, 0.0]).collect());
                }
                // Cubic Lagrange interpolation in time through four states.
                let j = times.partition_point(|t| *t <= theta).max(1) - 1;
                let start = j.saturating_sub(1).min(last.saturating_sub(3));
                let idx: Vec<usize> = (start..(start + 4).min(last + 1)).collect();
                let t: Vec<f64> = idx.iter().map(|&k| times[k]).collect();
                let w = lagrange_weights(&t, theta);
                let samples = idx.iter().map(|&k| us(k)).collect::<Result<Vec<_>>>()?;
                let m = samples[0].len();
                Ok((0..m)
                    .map(|i| {
                        let mut out = [0.0; 3];
                        for (q, s) in samples.iter().enumerate() {
                            for d in 0..3 {
                                out[d] += w[q][d] * s[i];
                            }
                        }
                        out
                    })
                    .collect())
            }
        }
    }

    /// R of the round link at θ (round families only).
    fn round_scalar_curvature(&self, theta: f64) -> Option<f64> {
        match self {
            LinkTrajectory::RoundRelaxation { dim, .. } => {
                let u = self.jet(theta).ok()?[0][0];
                let n = *dim as f64;
                Some(n * (n - 1.0) * exp(-2.0 * u))
            }
            LinkTrajectory::Flow(_) => None,
        }
    }
}

/// u = log φ of a conformal-gauge state (log β for a round sphere).
fn conformal_factor(s: &FlowState) -> Result<Vec<f64>> {
    match s.link() {
        LinkGeometry::RoundSphere { beta, .. } => Ok(alloc::vec![ln(*beta); s.potential().grid().len()]),
        LinkGeometry::ProfileWarped(p) => Ok(p.phi().iter().map(|v| ln(*v)).collect()),
        LinkGeometry::Einstein { .. } => Err(Error::Unsupported("einstein links have no conformal factor")),
    }
}

/// Weights of the interpolating polynomial and its first two derivatives at x.
fn lagrange_weights(t: &[f64], x: f64) -> Vec<[f64; 3]> {
    let m = t.len();
    (0..m)
        .map(|j| {
            let denom: f64 = (0..m).filter(|&q| q != j).map(|q| t[j] - t[q]).product();
            let others: Vec<usize> = (0..m).filter(|&q| q != j).collect();
            let prod = |skip: &[usize]| -> f64 {
                others.iter().filter(|q| !skip.contains(q)).map(|&q| x - t[q]).product()
            };
            let v = prod(&[]);
            let d1: f64 = others.iter().map(|&a| prod(&[a])).sum();
            let mut d2 = 0.0;
            for &a in &others {
                for &b in &others {
                    if a != b {
                        d2 += prod(&[a, b]);
                    }
                }
            }
            [v / denom, d1 / denom, d2 / denom]
        })
        .collect()
}

/// ĝ(δ/r²) along the radius.
#[derive(Debug, Clone)]
pub struct DeltaFamily {
    pub delta: f64,
    pub trajectory: LinkTrajectory,
}

#[derive(Debug, Clone)]
pub enum SmoothingProfile {
    PiecewiseH(PiecewiseH),
    DeltaFamily(DeltaFamily),
    Explicit(ExplicitH),
}

/// dr² + h(r)²g_N or dr² + r²ĝ(δ/r²) on a radial grid.
#[derive(Debug, Clone)]
pub struct DoublyWarpedGeometry {
    profile: SmoothingProfile,
    dim: usize,
    grid: Arc<RadialGrid>,
}

impl DoublyWarpedGeometry {
    pub fn new(profile: SmoothingProfile, dim: usize, grid: Arc<RadialGrid>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput("link dimension must be at least 2"));
        }
        match &profile {
            SmoothingProfile::DeltaFamily(d) => {
                if !(d.delta > 0.0 && d.delta.is_finite()) {
                    return Err(Error::InvalidInput("delta must be positive"));
                }
                if d.trajectory.dim() != dim {
                    return Err(Error::InvalidInput("trajectory dimension differs from the geometry"));
                }
                if let Some(&r) = grid.nodes().iter().find(|r| **r <= 0.0) {
                    return Err(Error::Degenerate { radius: r });
                }
            }
            SmoothingProfile::PiecewiseH(_) | SmoothingProfile::Explicit(_) => {
                for &r in grid.nodes() {
                    let h = warp(&profile, r)?[0];
                    if !(h > 0.0) {
                        return Err(Error::Degenerate { radius: r });
                    }
                }
            }
        }
        Ok(Self { profile, dim, grid })
    }

    pub fn profile(&self) -> &SmoothingProfile {
        &self.profile
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
}

fn warp(profile: &SmoothingProfile, r: f64) -> Result<[f64; 3]> {
    match profile {
        SmoothingProfile::PiecewiseH(p) => Ok(p.eval(r)),
        SmoothingProfile::Explicit(e) => Ok((e.h)(r)),
        SmoothingProfile::DeltaFamily(_) => Err(Error::Unsupported("the delta family is not a single warping function")),
    }
}

fn link_radius(profile: &SmoothingProfile) -> f64 {
    match profile {
        SmoothingProfile::PiecewiseH(p) => p.beta,
        SmoothingProfile::Explicit(e) => e.link_radius,
        SmoothingProfile::DeltaFamily(_) => 1.0,
    }
}

/// (R^N − n(n−1)h'² − 2n h h'')/h² with R^N = n(n−1)/ρ_N² for the round
/// link of radius ρ_N.
fn warped_scalar(n: f64, link_radius: f64, [h, h1, h2]: [f64; 3]) -> f64 {
    (n * (n - 1.0) / (link_radius * link_radius) - n * (n - 1.0) * h1 * h1 - 2.0 * n * h * h2) / (h * h)
}

/// Scalar curvature along the radius. For the δ-family over round links it
/// is the instantaneous cone curvature plus R_rest; δ-families over flowing
/// profiles vary along the link and are rejected.
pub fn doubly_warped_scalar_curvature(geom: &DoublyWarpedGeometry) -> Result<ScalarField> {
    let n = geom.dim as f64;
    let mut values = Vec::with_capacity(geom.grid.len());
    match &geom.profile {
        SmoothingProfile::DeltaFamily(d) => {
            for &r in geom.grid.nodes() {
                let theta = d.delta / (r * r);
                let rn = d
                    .trajectory
                    .round_scalar_curvature(theta)
                    .ok_or(Error::Unsupported("curvature of a delta family over a non-round link varies along the link"))?;
                let rest = rest_at(n, d, r)?[0];
                values.push((rn - n * (n - 1.0)) / (r * r) + rest);
            }
        }
        p => {
            let rho = link_radius(p);
            for &r in geom.grid.nodes() {
                let hj = warp(p, r)?;
                if !(hj[0] > 0.0) {
                    return Err(Error::Degenerate { radius: r });
                }
                values.push(warped_scalar(n, rho, hj));
            }
        }
    }
    ScalarField::new(geom.grid.clone(), values, (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero))
}

/// R_rest = R^M − R^{C(ĝ(θ(r)))} at every link node. With g_r = r²e^{2u}g_{Sⁿ}
/// the slices are umbilic, K = κ g_r with κ = 1/r + ε, ε = ∂_θu·θ', and
/// R^M = R^{g_r} − 2∂_rH − H² − |K|² reduces to
/// R_rest = −2n ε' − 2n(n+1) ε/r − n(n+1) ε².
fn rest_at(n: f64, d: &DeltaFamily, r: f64) -> Result<Vec<f64>> {
    let theta = d.delta / (r * r);
    let th1 = -2.0 * d.delta / (r * r * r);
    let th2 = 6.0 * d.delta / (r * r * r * r);
    Ok(d.trajectory
        .jet(theta)?
        .into_iter()
        .map(|[_, u1, u2]| {
            let eps = u1 * th1;
            let eps1 = u2 * th1 * th1 + u1 * th2;
            -2.0 * n * eps1 - 2.0 * n * (n + 1.0) * eps / r - n * (n + 1.0) * eps * eps
        })
        .collect())
}

/// sup |R_rest| over the geometry and its per-radius maximum over the link.
pub fn delta_smoothing_rest(geom: &DoublyWarpedGeometry) -> Result<(f64, ScalarField)> {
    let d = match &geom.profile {
        SmoothingProfile::DeltaFamily(d) => d,
        _ => return Err(Error::InvalidInput("R_rest is defined for the delta family")),
    };
    if !d.trajectory.converged()? {
        return Err(Error::LinkFlowNotReady);
    }
    let n = geom.dim as f64;
    let mut per = Vec::with_capacity(geom.grid.len());
    for &r in geom.grid.nodes() {
        per.push(rest_at(n, d, r)?.into_iter().fold(0.0f64, |a, v| a.max(abs(v))));
    }
    let sup = per.iter().fold(0.0f64, |a, v| a.max(*v));
    Ok((sup, ScalarField::new(geom.grid.clone(), per, (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero))?))
}

/// sup |R_rest| over a δ-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSweep {
    pub deltas: Vec<f64>,
    pub sups: Vec<f64>,
    /// sup(δ_k)/sup(δ_{k+1}).
    pub ratios: Vec<f64>,
    /// Every ratio matches the δ ratio within 20%.
    pub linear: bool,
}

/// Evaluate R_rest for {δ, δ/2, δ/4} on the geometry's grid.
pub fn delta_sweep(geom: &DoublyWarpedGeometry) -> Result<DeltaSweep> {
    let d = match &geom.profile {
        SmoothingProfile::DeltaFamily(d) => d,
        _ => return Err(Error::InvalidInput("R_rest is defined for the delta family")),
    };
    let deltas = alloc::vec![d.delta, d.delta / 2.0, d.delta / 4.0];
    let mut sups = Vec::new();
    for &delta in &deltas {
        let g = DoublyWarpedGeometry {
            profile: SmoothingProfile::DeltaFamily(DeltaFamily { delta, trajectory: d.trajectory.clone() }),
            ..geom.clone()
        };
        sups.push(delta_smoothing_rest(&g)?.0);
    }
    let ratios: Vec<f64> = sups.windows(2).map(|w| w[0] / w[1]).collect();
    let linear = ratios.iter().all(|q| (1.6..=2.4).contains(q));
    Ok(DeltaSweep { deltas, sups, ratios, linear })
}

// ---------------------------------------------------------------------------
// Test functions and the gap W^M(w) − W^T(v).

/// Radial test function v(ρ) ∝ exp(−x²/8 + Σ_k a_k(cos kx − 1)/k), x = ρ/s.
/// With no modes v² is the heat kernel at scale s².
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProbe {
    pub width: f64,
    pub modes: Vec<f64>,
}

impl RadialProbe {
    pub fn gaussian(width: f64) -> Self {
        Self { width, modes: Vec::new() }
    }

    /// Width in [0.85, 1.6]·√τ and up to three modes of amplitude ≤ 0.25.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, tau: f64) -> Self {
        let width = sqrt(tau) * rng.gen_range(0.85..1.6);
        let count = rng.gen_range(0..=3usize);
        Self { width, modes: (0..count).map(|_| rng.gen_range(-0.25..0.25)).collect() }
    }

    pub fn rescaled(&self, lambda: f64) -> Self {
        Self { width: self.width * lambda, modes: self.modes.clone() }
    }

    /// (log v, (log v)') up to the normalizing constant.
    fn log_jet(&self, rho: f64) -> (f64, f64) {
        let x = rho / self.width;
        let mut l = -x * x / 8.0;
        let mut dl = -x / 4.0;
        for (k, a) in self.modes.iter().enumerate() {
            let k = (k + 1) as f64;
            l += a * (cos(k * x) - 1.0) / k;
            dl -= a * sin(k * x);
        }
        (l, dl / self.width)
    }

    /// Radius beyond which v² < e^{−60} relative to its scale.
    fn reach(&self) -> f64 {
        let slack: f64 = self.modes.iter().enumerate().map(|(k, a)| 2.0 * abs(*a) / (k + 1) as f64).sum();
        self.width * sqrt(8.0 * (30.0 + slack))
    }
}

const PANELS: usize = 4000;

fn simpson(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Normalization and W of a probe on the target dρ² + (ρ/k)²g_{βSⁿ}.
struct TargetEval {
    log_c2: f64,
    w: f64,
}

fn target_w(n: usize, beta: f64, k: f64, probe: &RadialProbe, tau: f64) -> TargetEval {
    let nn = n as f64;
    let vol_n = sphere_volume(n) * powi(beta, n as i32);
    let log_scale = (nn + 1.0) / 2.0 * ln(4.0 * PI * tau);
    let rmax = probe.reach();
    let dens = |rho: f64| powi(rho / k, n as i32) * vol_n;
    let i0 = simpson(0.0, rmax, 2 * PANELS, |rho| exp(2.0 * probe.log_jet(rho).0) * dens(rho));
    let log_c2 = log_scale - ln(i0);
    let curv = nn * (nn - 1.0) * (k * k / (beta * beta) - 1.0);
    // ρ^{n−2} is factored out of the curvature term so that ρ = 0 is finite.
    let w = simpson(0.0, rmax, 2 * PANELS, |rho| {
        let (l, dl) = probe.log_jet(rho);
        let e = exp(log_c2 + 2.0 * l - log_scale) * vol_n / powi(k, n as i32);
        let energy = tau * 4.0 * dl * dl - log_c2 - 2.0 * l - (nn + 1.0);
        e * (powi(rho, n as i32) * energy + powi(rho, n as i32 - 2) * tau * curv)
    });
    TargetEval { log_c2, w }
}

/// W^M of the pushforward √(k h')·v(k h) on the smoothing.
fn smoothing_w(n: usize, h: &PiecewiseH, probe: &RadialProbe, tau: f64, log_c2: f64) -> f64 {
    let nn = n as f64;
    let k = h.k();
    let beta = h.beta;
    let vol_n = sphere_volume(n) * powi(beta, n as i32);
    let log_scale = (nn + 1.0) / 2.0 * ln(4.0 * PI * tau);
    let r_end = h.invert(probe.reach() / k);
    let integrand = |piece: usize, r: f64| -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let hj = h.piece(piece, r);
        let [hv, h1, h2] = hj;
        let rho = k * hv;
        let (l, dl) = probe.log_jet(rho);
        let log_w2 = ln(k * h1) + log_c2 + 2.0 * l;
        let dlog_w = h2 / (2.0 * h1) + k * h1 * dl;
        let q = exp(log_w2 - log_scale) * powi(hv, n as i32) * vol_n;
        let rm = warped_scalar(nn, beta, hj);
        q * (tau * (4.0 * dlog_w * dlog_w + rm) - log_w2 - (nn + 1.0))
    };
    let [k1, k2] = h.kinks();
    let bounds = [0.0, k1.min(r_end), k2.min(r_end), r_end];
    (0..3).map(|i| simpson(bounds[i], bounds[i + 1], PANELS, |r| integrand(i, r))).sum()
}

/// Δ = W^M(w) − W^T(v) for one probe and τ.
pub fn smoothing_gap(dim: usize, profile: &PiecewiseH, probe: &RadialProbe, tau: f64) -> Result<f64> {
    if dim < 2 || !(tau > 0.0) || !(probe.width > 0.0) {
        return Err(Error::InvalidInput("need dim ≥ 2, tau > 0 and a positive probe width"));
    }
    let t = target_w(dim, profile.beta, profile.k(), probe, tau);
    Ok(smoothing_w(dim, profile, probe, tau, t.log_c2) - t.w)
}

/// Pushforward of a sampled target function onto `grid`: w(r) = √(k h'(r))·v(k h(r)),
/// with v interpolated by local cubics.
pub fn pushforward_test_function(
    v: &ScalarField,
    profile: &SmoothingProfile,
    grid: Arc<RadialGrid>,
) -> Result<ScalarField> {
    let k = match profile {
        SmoothingProfile::PiecewiseH(p) => p.k(),
        SmoothingProfile::Explicit(_) => 1.0,
        SmoothingProfile::DeltaFamily(_) => return Err(Error::Unsupported("pushforward needs a warping function")),
    };
    let vx = v.grid().nodes();
    let last = vx[vx.len() - 1];
    let mut out = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        let [h, h1, _] = warp(profile, r)?;
        let rho = k * h;
        if rho > last * (1.0 + 1e-12) || rho < vx[0] * (1.0 - 1e-12) {
            return Err(Error::InvalidInput("target grid does not cover the image of the smoothing grid"));
        }
        out.push(sqrt(k * h1) * interpolate(vx, v.values(), rho));
    }
    ScalarField::new(grid, out, v.boundary())
}

/// Cubic Lagrange interpolation through the four nearest nodes.
fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    let n = x.len();
    let j = x.partition_point(|v| *v <= at).clamp(1, n - 1) - 1;
    let start = j.saturating_sub(1).min(n.saturating_sub(4));
    let t = &x[start..(start + 4).min(n)];
    lagrange_weights(t, at).iter().zip(&y[start..start + t.len()]).map(|(w, v)| w[0] * v).sum()
}

/// One probe/τ/A evaluation of the gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    pub a: f64,
    pub tau: f64,
    pub probe: usize,
    pub delta: f64,
    /// Δ for the same probe and τ with A → ∞.
    pub delta_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub dim: usize,
    pub beta: f64,
    pub target: ComparisonTarget,
    pub entries: Vec<GapEntry>,
    /// (A, max over probes and τ of |Δ(A) − Δ(∞)|).
    pub residuals: Vec<(f64, f64)>,
    /// Least-squares fit residual ≈ c·A^p over the sweep; `None` when the
    /// residuals vanish.
    pub fitted_exponent: Option<f64>,
    pub fitted_c: Option<f64>,
    /// max over the sweep of A·residual(A): the c used in the bound.
    pub c_constant: f64,
    /// Smallest Δ − (−n log β − c/A) (cone) or Δ − (n log β − c/A) (Euclidean).
    pub worst_margin: f64,
    pub holds: bool,
    /// The bound has no τ in it; only the measured Δ does.
    pub bound_depends_on_tau: bool,
}

/// Δ = W^M(w) − W^T(v) for every probe, τ and A in the sweep (β, scale and
/// target taken from `profile`), checked against Δ > −(n log β + c/A) for
/// the cone and Δ > n log β − c/A for Euclidean space.
///
/// Probe widths are in units of √τ. The cone bound only holds for probes
/// of moderate energy: with A = ∞,
/// Δ = log β − τ(1 − β⁻²)∫(4|v'|² − n(n−1)v²/ρ²),
/// which is unbounded below over narrow or oscillating v.
pub fn smoothing_gap_check(
    dim: usize,
    profile: &PiecewiseH,
    probes: &[RadialProbe],
    taus: &[f64],
    a_values: &[f64],
) -> Result<GapReport> {
    let sweep: Vec<f64> = if a_values.is_empty() { alloc::vec![profile.a] } else { a_values.to_vec() };
    let nlogb = dim as f64 * ln(profile.beta);
    let mut entries = Vec::new();
    let mut limits = Vec::new();
    let lim = profile.limit();
    for &tau in taus {
        for (pi, probe) in probes.iter().enumerate() {
            limits.push(((tau, pi), smoothing_gap(dim, &lim, &probe_at(probe, tau), tau)?));
        }
    }
    for &a in &sweep {
        let p = PiecewiseH { a, b: 1.0 + a * abs(profile.beta - 1.0), ..*profile };
        for &((tau, pi), dl) in &limits {
            entries.push(GapEntry { a, tau, probe: pi, delta: smoothing_gap(dim, &p, &probe_at(&probes[pi], tau), tau)?, delta_limit: dl });
        }
    }
    let residuals: Vec<(f64, f64)> = sweep
        .iter()
        .map(|&a| {
            let r = entries.iter().filter(|e| e.a == a).fold(0.0f64, |m, e| m.max(abs(e.delta - e.delta_limit)));
            (a, r)
        })
        .collect();
    let c_constant = residuals.iter().fold(0.0f64, |m, (a, r)| m.max(a * r));
    let (fitted_exponent, fitted_c) = fit_power(&residuals);
    let offset = match profile.target {
        ComparisonTarget::Cone => -nlogb,
        ComparisonTarget::Euclidean => nlogb,
    };
    let worst_margin = entries.iter().fold(f64::INFINITY, |m, e| m.min(e.delta - (offset - c_constant / e.a)));
    Ok(GapReport {
        dim,
        beta: profile.beta,
        target: profile.target,
        entries,
        residuals,
        fitted_exponent,
        fitted_c,
        c_constant,
        holds: worst_margin > 0.0,
        worst_margin,
        bound_depends_on_tau: false,
    })
}

/// log r = log c + p log A by least squares over positive residuals.
fn fit_power(points: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, r)| *r > 1e-300).map(|(a, r)| (ln(*a), ln(*r))).collect();
    if pts.len() < 2 {
        return (None, None);
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return (None, None);
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    (Some(slope), Some(exp(my - slope * mx)))
}

// ---------------------------------------------------------------------------
// β-window scan.

/// Lower bound on ν^{C(βSⁿ)}: n log β for β ≤ 1; for β > 1,
/// n log β + (n+1)/2·log κ with κ = ((2n−1)β⁻² − n)/(n−1) while κ > 0,
/// −∞ beyond.
pub fn round_cone_nu_lower_bound(dim: usize, beta: f64) -> Result<f64> {
    if dim < 2 || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput("need dim ≥ 2 and beta > 0"));
    }
    let n = dim as f64;
    if beta <= 1.0 {
        return Ok(n * ln(beta));
    }
    let kappa = ((2.0 * n - 1.0) / (beta * beta) - n) / (n - 1.0);
    if kappa <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(n * ln(beta) + (n + 1.0) / 2.0 * ln(kappa))
}

/// One β of the window scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRow {
    pub beta: f64,
    pub nu_lower_estimate: f64,
    pub gap_constant_c: f64,
    pub inside: bool,
    pub inside_window_a4: bool,
    pub inside_window_b2: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub dim: usize,
    pub a: f64,
    pub eta: f64,
    pub rows: Vec<WindowRow>,
    /// Largest run of grid points around β = 1 whose estimate exceeds −η.
    pub window: Option<(f64, f64)>,
    pub contained_in_a4: bool,
    pub contained_in_b2: bool,
    /// The smoothing has dimension n+1 while η is quoted for a given
    /// manifold dimension; the caller chooses which η applies.
    pub dimension_note: &'static str,
}

/// Probes used by the scan, with widths relative to √τ: three Gaussians and
/// six perturbed profiles, at τ ∈ {0.02, 0.05, 0.1}.
pub fn scan_probes() -> (Vec<RadialProbe>, Vec<f64>) {
    let taus = alloc::vec![0.02, 0.05, 0.1];
    let probes = alloc::vec![
        RadialProbe::gaussian(0.9),
        RadialProbe::gaussian(1.0),
        RadialProbe::gaussian(1.4),
        RadialProbe { width: 0.9, modes: alloc::vec![0.2] },
        RadialProbe { width: 1.0, modes: alloc::vec![-0.2] },
        RadialProbe { width: 1.2, modes: alloc::vec![0.1, -0.1] },
        RadialProbe { width: 1.5, modes: alloc::vec![-0.15, 0.05, 0.05] },
        RadialProbe { width: 1.1, modes: alloc::vec![0.0, 0.2] },
        RadialProbe { width: 0.95, modes: alloc::vec![0.1, 0.1, -0.1] },
    ];
    (probes, taus)
}

/// Probe widths are relative to √τ in the scan; this rescales them.
fn probe_at(probe: &RadialProbe, tau: f64) -> RadialProbe {
    probe.rescaled(sqrt(tau))
}

/// ν lower estimate of the smoothed manifold at each β on a uniform grid of
/// `count` points over `range` (β = 1 is always added): the target's ν bound
/// plus the gap bound −(n log β + c/A) (cone, β > 1) or n log β − c/A
/// (Euclidean, β < 1). c is the measured A·|Δ(A) − Δ(∞)| over the scan
/// probes, enlarged by any shortfall of Δ below the bound.
pub fn beta_window_scan(dim: usize, range: (f64, f64), count: usize, a: f64, eta: f64) -> Result<WindowReport> {
    let betas = window_grid(range, count)?;
    let rows = betas.iter().map(|&b| window_row(dim, b, a, eta)).collect::<Result<Vec<_>>>()?;
    window_report(dim, a, eta, rows)
}

/// Uniform grid of `count` points over `range`, with β = 1 inserted when
/// the range contains it.
pub fn window_grid(range: (f64, f64), count: usize) -> Result<Vec<f64>> {
    if !(range.0 > 0.0 && range.0 < range.1 && range.1.is_finite()) || count < 2 {
        return Err(Error::InvalidInput("need 0 < lo < hi and at least two points"));
    }
    let mut betas: Vec<f64> =
        (0..count).map(|i| range.0 + (range.1 - range.0) * i as f64 / (count - 1) as f64).collect();
    if range.0 <= 1.0 && range.1 >= 1.0 && !betas.iter().any(|b| *b == 1.0) {
        betas.push(1.0);
        betas.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    }
    Ok(betas)
}

/// The ν estimate at a single β (see [`beta_window_scan`]).
pub fn window_row(dim: usize, beta: f64, a: f64, eta: f64) -> Result<WindowRow> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput("eta must be non-negative"));
    }
    let n = dim as f64;
    let (estimate, c) = if beta == 1.0 {
        check_beta_a(beta, a)?;
        (0.0, 0.0)
    } else {
        let (profile, target_nu, offset) = if beta > 1.0 {
            (build_piecewise_h(beta, a)?, round_cone_nu_lower_bound(dim, beta)?, -n * ln(beta))
        } else {
            (build_euclidean_smoothing(beta, a)?, 0.0, n * ln(beta))
        };
        let (probes, taus) = scan_probes();
        let report = smoothing_gap_check(dim, &profile, &probes, &taus, &[a])?;
        let c = report.c_constant + a * (-report.worst_margin).max(0.0);
        (target_nu + offset - c / a, c)
    };
    Ok(WindowRow {
        beta,
        nu_lower_estimate: estimate,
        gap_constant_c: c,
        inside: estimate > -eta || beta == 1.0,
        inside_window_a4: WINDOW_A4.0 <= beta && beta <= WINDOW_A4.1,
        inside_window_b2: WINDOW_B2.0 <= beta && beta <= WINDOW_B2.1,
    })
}

/// Assemble rows (sorted by β) into a report; the window is the run of
/// inside rows around β = 1.
pub fn window_report(dim: usize, a: f64, eta: f64, rows: Vec<WindowRow>) -> Result<WindowReport> {
    if rows.windows(2).any(|w| !(w[0].beta < w[1].beta)) {
        return Err(Error::InvalidInput("rows must be sorted by beta"));
    }
    let window = rows.iter().position(|r| r.beta == 1.0).map(|i1| {
        let mut lo = i1;
        while lo > 0 && rows[lo - 1].inside {
            lo -= 1;
        }
        let mut hi = i1;
        while hi + 1 < rows.len() && rows[hi + 1].inside {
            hi += 1;
        }
        (rows[lo].beta, rows[hi].beta)
    });
    let within = |w: (f64, f64)| window.map_or(true, |(lo, hi)| w.0 <= lo && hi <= w.1);
    Ok(WindowReport {
        dim,
        a,
        eta,
        contained_in_a4: within(WINDOW_A4),
        contained_in_b2: within(WINDOW_B2),
        rows,
        window,
        dimension_note: DIMENSION_NOTE,
    })
}

/// Attached to every window report.
pub const DIMENSION_NOTE: &str =
    "the smoothed manifold has dimension n+1; eta must be the constant for that dimension";
