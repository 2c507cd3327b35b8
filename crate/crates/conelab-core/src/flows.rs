//! Ricci flow and its renormalizations on rotationally symmetric spheres,
//! the potentials carried along them, and trajectory monitors.
//!
//! Profiles flow in conformal gauge: every state is written as
//! g = e^{2u(x,t)}(dx² + sin²x g_{Sⁿ⁻¹}) on x ∈ [0, π], so that ψ = e^u sin x
//! and φ = e^u in the warped form. Ricci flow does not keep this form by
//! itself when n ≥ 3; adding the Lie derivative along V = sin x·(I(x) + c)∂_x,
//! I(x) = ∫₀ˣ (n−2)(K_rad − K_tan)/sin, does, and the flow becomes
//!
//! ```text
//! u_t = −K_rad − (n−2)K_tan + (I + c)(cos x + u_x sin x) + α/n
//! ```
//!
//! which is ∂_t g = −2Ric + (2α/n)g + L_V g, isometric at each time to the
//! ungauged flow. K_rad and K_tan are the sectional curvatures of planes
//! containing, respectively tangent to, the orbits; both are smooth
//! expressions in the even function u, so pole regularity is automatic.
//! The constant c = −I(π)/2 balances the conformal drift between the poles.
//!
//! The Hess f term of the coupled system is a diffeomorphism and is not
//! integrated either; the potential then satisfies
//! ∂_t f = −Δf + |∇f|² − R + α + V·∇f. That equation is backward parabolic,
//! so a potential is carried along a finished trajectory by solving the
//! conjugate heat equation backwards from its terminal value
//! ([`transport_potential`]); alternatively it is re-minimized at each
//! recorded state. Additive constants are fixed by re-imposing the tracked
//! normalization ∫e^{−f}dv, which is all that the α and n/(2τ) terms change.
//!
//! Round spheres follow the exact ODE for β² and keep the `RoundSphere`
//! variant; [`FlowState::to_profile`] moves them onto the PDE path.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::links::{mu_on_discretization, LinkGeometry, WarpedProfile};
use crate::math::{abs, ball_volume, cos, exp, ln, powf, powi, sin, sphere_volume, sqrt, PI};
use crate::numcore::stencil::{self, End};
use crate::numcore::{BoundaryKind, RadialGrid, ScalarField, Spacing};

const POLES: (BoundaryKind, BoundaryKind) = (BoundaryKind::PoleRegular, BoundaryKind::PoleRegular);

/// Default explicit-scheme safety factor.
pub const DEFAULT_DT_SAFETY: f64 = 0.2;
/// Roundness below which the flow is treated as having entered its round regime.
pub const ROUNDNESS_THRESHOLD: f64 = 1e-3;
/// Spread of the conformal factor (log of the ratio between the largest and
/// smallest length scale) beyond which a profile counts as degenerate: a neck
/// or cusp four decades thinner than the rest of the sphere.
pub const SINGULAR_SPREAD: f64 = 4.0 * core::f64::consts::LN_10;
/// Minimum number of states for finite-difference identity checks.
pub const MIN_IDENTITY_STATES: usize = 100;

/// How α(t) in ∂_t g = −2Ric + (2α/n)g is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// Plain Ricci flow.
    None,
    /// α = R_av: the volume is constant.
    VolumePreserving,
    /// α = n/(2T_N): the shrinking time is constant.
    ShrinkingTimePreserving,
    Fixed(f64),
}

impl AlphaRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlphaRule::None => "none",
            AlphaRule::VolumePreserving => "volume_preserving",
            AlphaRule::ShrinkingTimePreserving => "shrinking_time_preserving",
            AlphaRule::Fixed(_) => "fixed",
        }
    }
}

/// How the potential follows the metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialMode {
    /// Carried by the coupled equation; filled in by [`transport_potential`]
    /// once the metric trajectory is known. Until then steps only re-impose
    /// the normalization.
    Transported,
    /// Replaced at every recorded state by the W(·, g, τ) minimizer.
    Reminimized { tau: f64 },
}

impl PotentialMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PotentialMode::Transported => "transported",
            PotentialMode::Reminimized { .. } => "reminimized",
        }
    }
}

/// Parameter of the W values recorded by the monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorTau {
    /// W(f, g, τ) at a fixed τ.
    Fixed(f64),
    /// W(f_t, g_t, τ₀ − t), the quantity monotone along the coupled flow.
    Backward(f64),
}

impl MonitorTau {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            MonitorTau::Fixed(tau) => *tau,
            MonitorTau::Backward(tau0) => tau0 - t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSet {
    /// Record F and W.
    pub functionals: bool,
    /// Record sup|Rm|·t.
    pub curvature: bool,
    pub tau: MonitorTau,
}

impl Default for MonitorSet {
    fn default() -> Self {
        Self { functionals: true, curvature: true, tau: MonitorTau::Fixed(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub alpha_rule: AlphaRule,
    /// dt = dt_safety·min(φΔx)²; at most 0.5.
    pub dt_safety: f64,
    pub t_end: f64,
    pub monitors: MonitorSet,
    pub potential_mode: PotentialMode,
    /// T_N used by the shrinking-time-preserving rule; estimated from the
    /// initial state by [`integrate_flow`] when absent.
    pub shrinking_time: Option<f64>,
    /// Keep every k-th state (transport needs every state).
    pub record_every: usize,
}

impl FlowConfig {
    pub fn new(alpha_rule: AlphaRule, t_end: f64) -> Self {
        Self {
            alpha_rule,
            dt_safety: DEFAULT_DT_SAFETY,
            t_end,
            monitors: MonitorSet::default(),
            potential_mode: PotentialMode::Transported,
            shrinking_time: None,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 0.5) {
            return Err(Error::InvalidInput("dt_safety must lie in (0, 0.5]"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput("t_end must be finite and non-negative"));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be positive"));
        }
        if let AlphaRule::Fixed(a) = self.alpha_rule {
            if !a.is_finite() {
                return Err(Error::InvalidInput("alpha must be finite"));
            }
        }
        if let Some(t) = self.shrinking_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput("shrinking time must be positive"));
            }
        }
        if let PotentialMode::Reminimized { tau } = self.potential_mode {
            if !(tau > 0.0) {
                return Err(Error::InvalidInput("tau must be positive"));
            }
        }
        Ok(())
    }
}

/// A snapshot (g_t, f_t) of a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    time: f64,
    link: LinkGeometry,
    potential: ScalarField,
    normalization: f64,
}

impl FlowState {
    /// Round spheres carry their potential on a uniform polar-angle grid over
    /// [0, π]. Profiles are re-parametrized into conformal gauge on a uniform
    /// grid over [0, π] with the same node count, and the potential (given on
    /// the profile's grid) is carried along.
    pub fn new(time: f64, link: LinkGeometry, potential: ScalarField) -> Result<Self> {
        if !time.is_finite() {
            return Err(Error::InvalidInput("time must be finite"));
        }
        let (link, potential) = match &link {
            LinkGeometry::ProfileWarped(p) => {
                if potential.grid().nodes() != p.grid().nodes() {
                    return Err(Error::GridMismatch);
                }
                if Prof::of(&link, p.grid())?.u.is_some() {
                    (link, potential)
                } else {
                    let (u, f) = conformal_reparametrize(p, potential.values())?;
                    let prof = Prof::from_u(p.dim(), Arc::new(RadialGrid::uniform(0.0, PI, u.len())?), u);
                    let f = ScalarField::new(prof.grid.clone(), f, POLES)?;
                    (LinkGeometry::ProfileWarped(prof.to_warped()?), f)
                }
            }
            _ => (link, potential),
        };
        let prof = Prof::of(&link, potential.grid())?;
        if potential.grid().nodes() != prof.grid.nodes() {
            return Err(Error::GridMismatch);
        }
        let potential = ScalarField::new(prof.grid.clone(), potential.into_values(), POLES)?;
        let normalization = prof.mass(potential.values());
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::InvalidField("e^{-f} has no finite positive mass"));
        }
        Ok(Self { time, link, potential, normalization })
    }

    /// Constant potential with ∫e^{−f}dv = 1 (f = log vol). `nodes` sets the
    /// polar grid of round spheres; profiles keep their node count.
    pub fn with_constant_potential(link: LinkGeometry, nodes: usize) -> Result<Self> {
        let grid = match &link {
            LinkGeometry::RoundSphere { .. } => Arc::new(RadialGrid::uniform(0.0, PI, nodes)?),
            LinkGeometry::ProfileWarped(p) => p.grid().clone(),
            LinkGeometry::Einstein { .. } => return Err(Error::Unsupported("einstein links cannot flow")),
        };
        let len = grid.len();
        let f = ScalarField::new(grid, alloc::vec![ln(link.volume()); len], POLES)?;
        Self::new(0.0, link, f)
    }

    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn link(&self) -> &LinkGeometry {
        &self.link
    }
    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }
    /// ∫e^{−f}dv.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }
    pub fn dim(&self) -> usize {
        self.link.dim()
    }

    /// The same state with its time shifted to `time`.
    pub fn at_time(&self, time: f64) -> Self {
        Self { time, ..self.clone() }
    }

    /// The same state with another potential on its grid.
    pub fn with_potential(&self, potential: ScalarField) -> Result<Self> {
        Self::new(self.time, self.link.clone(), potential)
    }

    /// A round state as a profile on its potential grid (u = log β).
    pub fn to_profile(&self) -> Result<Self> {
        match &self.link {
            LinkGeometry::RoundSphere { dim, beta } => {
                let grid = self.potential.grid().clone();
                let p = Prof::from_u(*dim, grid.clone(), alloc::vec![ln(*beta); grid.len()]);
                let link = LinkGeometry::ProfileWarped(p.to_warped()?);
                Ok(Self { link, ..self.clone() })
            }
            _ => Ok(self.clone()),
        }
    }

    /// β² of the round sphere with the same volume.
    pub fn beta_sq_from_volume(&self) -> f64 {
        let n = self.dim();
        powf(self.prof().volume() / sphere_volume(n), 2.0 / n as f64)
    }

    fn prof(&self) -> Prof {
        Prof::of(&self.link, self.potential.grid()).expect("state invariants")
    }
}

/// Cumulative ∫₀^{x_i} g on a uniform grid, fourth order, with ghost values
/// from the parity of g at both ends.
fn cumulative(g: &[f64], h: f64, odd: bool) -> Vec<f64> {
    let len = g.len();
    let sign = if odd { -1.0 } else { 1.0 };
    let at = |i: isize| -> f64 {
        if i < 0 {
            sign * g[(-i) as usize]
        } else if i as usize >= len {
            sign * g[2 * (len - 1) - i as usize]
        } else {
            g[i as usize]
        }
    };
    let mut out = alloc::vec![0.0; len];
    for i in 0..len - 1 {
        let k = i as isize;
        out[i + 1] = out[i] + h / 24.0 * (-at(k - 1) + 13.0 * at(k) + 13.0 * at(k + 1) - at(k + 2));
    }
    out
}

/// Four-point Lagrange interpolation of (xs, ys) at x, xs increasing; the
/// samples are extended as even functions about both ends.
fn interpolate_even(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let len = xs.len();
    let (a, b) = (xs[0], xs[len - 1]);
    let node = |i: isize| -> (f64, f64) {
        if i < 0 {
            (2.0 * a - xs[(-i) as usize], ys[(-i) as usize])
        } else if i as usize >= len {
            let j = 2 * (len - 1) - i as usize;
            (2.0 * b - xs[j], ys[j])
        } else {
            (xs[i as usize], ys[i as usize])
        }
    };
    let j = match xs.iter().position(|v| *v > x) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => len - 2,
    } as isize;
    let pts = [node(j - 1), node(j), node(j + 1), node(j + 2)];
    let mut acc = 0.0;
    for (k, (xk, yk)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (m, (xm, _)) in pts.iter().enumerate() {
            if m != k {
                w *= (x - xm) / (xk - xm);
            }
        }
        acc += w * yk;
    }
    acc
}

/// Conformal factor u on a uniform grid over [0, π] for a warped profile,
/// with the potential resampled onto the same grid.
///
/// With s the arclength and L the length, the conformal coordinate solves
/// dξ/ds = sin ξ/ψ, i.e. tan(ξ/2) = e^{G(s)+c}·tan(πs/2L) with the regular
/// integral G(s) = ∫₀ˢ (1/ψ − π/(L sin(πs/L))). The Möbius constant c is
/// chosen symmetric between the poles.
fn conformal_reparametrize(p: &WarpedProfile, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = p.grid().step();
    let (psi, phi) = (p.psi(), p.phi());
    let len = psi.len();
    let s = cumulative(phi, h, false);
    let l = s[len - 1];
    let mut q = alloc::vec![0.0; len];
    for i in 1..len - 1 {
        q[i] = (1.0 / psi[i] - PI / (l * sin(PI * s[i] / l))) * phi[i];
    }
    let g = cumulative(&q, h, true);
    let c = -g[len - 1] / 2.0;
    let mut xi = alloc::vec![0.0; len];
    let mut u = alloc::vec![0.0; len];
    for i in 1..len - 1 {
        xi[i] = 2.0 * libm::atan(exp(g[i] + c) * libm::tan(PI * s[i] / (2.0 * l)));
        u[i] = ln(psi[i] / sin(xi[i]));
    }
    xi[len - 1] = PI;
    // ψ/sin ξ at the poles: ξ ≈ (π/L)e^{c}s near s = 0 and π − ξ ≈ (π/L)e^{−G(L)−c}(L − s).
    u[0] = ln(l / PI) - c;
    u[len - 1] = ln(l / PI) + g[len - 1] + c;
    if xi.windows(2).any(|w| !(w[1] > w[0])) || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateProfile { index: 0 });
    }
    let target = RadialGrid::uniform(0.0, PI, len)?;
    let u_new = target.nodes().iter().map(|x| interpolate_even(&xi, &u, *x)).collect();
    let f_new = target.nodes().iter().map(|x| interpolate_even(&xi, f, *x)).collect();
    Ok((u_new, f_new))
}

/// Coefficients of a profile on a uniform grid over [0, L].
#[derive(Debug, Clone)]
struct Prof {
    n: usize,
    grid: Arc<RadialGrid>,
    psi: Vec<f64>,
    phi: Vec<f64>,
    /// Round spheres: exact sectional curvature 1/β².
    round: Option<f64>,
    /// Conformal factor when g = e^{2u}(dx² + sin²x g_{Sⁿ⁻¹}) on [0, π].
    u: Option<Vec<f64>>,
}

/// Pointwise geometry of a profile.
struct Geo {
    psi_s: Vec<f64>,
    /// −ψ_ss/ψ.
    k_rad: Vec<f64>,
    /// (1 − ψ_s²)/ψ².
    k_tan: Vec<f64>,
    /// dv/dx.
    density: Vec<f64>,
}

/// Pole value of an even function from the three nearest interior samples.
fn even_extrapolate(v: &mut [f64]) {
    let m = v.len() - 1;
    v[0] = (15.0 * v[1] - 6.0 * v[2] + v[3]) / 10.0;
    v[m] = (15.0 * v[m - 1] - 6.0 * v[m - 2] + v[m - 3]) / 10.0;
}

fn is_polar_grid(grid: &RadialGrid) -> bool {
    grid.spacing() == Spacing::Uniform && grid.first() == 0.0 && abs(grid.last() - PI) <= 1e-12
}

impl Prof {
    fn of(link: &LinkGeometry, grid: &Arc<RadialGrid>) -> Result<Self> {
        match link {
            LinkGeometry::RoundSphere { dim, beta } => {
                if !is_polar_grid(grid) {
                    return Err(Error::InvalidInput("round states need a uniform polar grid over [0, pi]"));
                }
                let mut p = Self::from_u(*dim, grid.clone(), alloc::vec![ln(*beta); grid.len()]);
                p.round = Some(beta * beta);
                Ok(p)
            }
            LinkGeometry::ProfileWarped(p) => {
                let grid = p.grid().clone();
                let (psi, phi) = (p.psi(), p.phi());
                let len = psi.len();
                let conformal = is_polar_grid(&grid)
                    && (1..len - 1).all(|i| abs(psi[i] - phi[i] * sin(grid.nodes()[i])) <= 1e-14 * phi[i]);
                Ok(Self {
                    n: p.dim(),
                    u: if conformal { Some(phi.iter().map(|v| ln(*v)).collect()) } else { None },
                    grid,
                    psi: psi.to_vec(),
                    phi: phi.to_vec(),
                    round: None,
                })
            }
            LinkGeometry::Einstein { .. } => Err(Error::Unsupported("einstein links carry no profile")),
        }
    }

    fn from_u(n: usize, grid: Arc<RadialGrid>, u: Vec<f64>) -> Self {
        let phi: Vec<f64> = u.iter().map(|v| exp(*v)).collect();
        let len = phi.len();
        let mut psi: Vec<f64> = grid.nodes().iter().zip(&phi).map(|(x, f)| f * sin(*x)).collect();
        psi[0] = 0.0;
        psi[len - 1] = 0.0;
        Self { n, grid, psi, phi, round: None, u: Some(u) }
    }

    fn to_warped(&self) -> Result<WarpedProfile> {
        WarpedProfile::new(self.n, self.grid.clone(), self.psi.clone(), self.phi.clone())
    }

    fn h(&self) -> f64 {
        self.grid.step()
    }

    fn geometry(&self) -> Geo {
        let h = self.h();
        let len = self.psi.len();
        let mut k_rad = alloc::vec![0.0; len];
        let mut k_tan = alloc::vec![0.0; len];
        let psi_s: Vec<f64>;
        if let Some(u) = &self.u {
            let ux = stencil::d1(u, h, End::Even, End::Even);
            let uxx = stencil::d2(u, h, End::Even, End::Even);
            let x = self.grid.nodes();
            psi_s = (0..len).map(|i| ux[i] * sin(x[i]) + cos(x[i])).collect();
            for i in 1..len - 1 {
                let (e, cot) = (exp(-2.0 * u[i]), cos(x[i]) / sin(x[i]));
                k_rad[i] = e * (1.0 - uxx[i] - ux[i] * cot);
                k_tan[i] = e * (1.0 - ux[i] * ux[i] - 2.0 * ux[i] * cot);
            }
            for i in [0, len - 1] {
                let k = exp(-2.0 * u[i]) * (1.0 - 2.0 * uxx[i]);
                k_rad[i] = k;
                k_tan[i] = k;
            }
        } else {
            let dx = stencil::d1(&self.psi, h, End::Odd, End::Odd);
            psi_s = dx.iter().zip(&self.phi).map(|(d, f)| d / f).collect();
            let dps = stencil::d1(&psi_s, h, End::Even, End::Even);
            for i in 1..len - 1 {
                let p = self.psi[i];
                k_rad[i] = -dps[i] / self.phi[i] / p;
                k_tan[i] = (1.0 - psi_s[i] * psi_s[i]) / (p * p);
            }
            even_extrapolate(&mut k_rad);
            even_extrapolate(&mut k_tan);
        }
        if let Some(b2) = self.round {
            k_rad.iter_mut().for_each(|k| *k = 1.0 / b2);
            k_tan.iter_mut().for_each(|k| *k = 1.0 / b2);
        }
        let w = sphere_volume(self.n - 1);
        let density =
            self.psi.iter().zip(&self.phi).map(|(s, f)| w * powi(*s, self.n as i32 - 1) * f).collect();
        Geo { psi_s, k_rad, k_tan, density }
    }

    fn volume(&self) -> f64 {
        if let Some(b2) = self.round {
            return powf(b2, self.n as f64 / 2.0) * sphere_volume(self.n);
        }
        self.grid.quad(&self.geometry().density)
    }

    fn scalar_curvature(&self, g: &Geo) -> Vec<f64> {
        let n = self.n as f64;
        g.k_rad.iter().zip(&g.k_tan).map(|(kr, kt)| (n - 1.0) * (2.0 * kr + (n - 2.0) * kt)).collect()
    }

    fn r_av(&self, g: &Geo) -> f64 {
        let r = self.scalar_curvature(g);
        let m: Vec<f64> = r.iter().zip(&g.density).map(|(a, b)| a * b).collect();
        self.grid.quad(&m) / self.grid.quad(&g.density)
    }

    fn sup_rm(&self, g: &Geo) -> f64 {
        g.k_rad.iter().chain(&g.k_tan).fold(0.0f64, |a, k| a.max(abs(*k)))
    }

    /// ∫e^{−f}dv, evaluated relative to min f to avoid underflow.
    fn mass(&self, f: &[f64]) -> f64 {
        let g = self.geometry();
        let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let m: Vec<f64> = f.iter().zip(&g.density).map(|(v, d)| exp(fmin - v) * d).collect();
        self.grid.quad(&m) * exp(-fmin)
    }

    /// I(x) + c, with V = sin x·(I + c)∂_x the gauge field; zero off conformal gauge.
    fn gauge_integral(&self, g: &Geo) -> Vec<f64> {
        let len = self.psi.len();
        if self.u.is_none() || self.round.is_some() {
            return alloc::vec![0.0; len];
        }
        let x = self.grid.nodes();
        let n = self.n as f64;
        let mut d = alloc::vec![0.0; len];
        for i in 1..len - 1 {
            d[i] = (n - 2.0) * (g.k_rad[i] - g.k_tan[i]) / sin(x[i]);
        }
        let mut i_int = cumulative(&d, self.h(), true);
        let c = -i_int[len - 1] / 2.0;
        i_int.iter_mut().for_each(|v| *v += c);
        i_int
    }

    /// u_t of the gauged renormalized flow (conformal profiles only).
    fn rates(&self, alpha: f64) -> Vec<f64> {
        let n = self.n as f64;
        let u = self.u.as_ref().expect("flows run in conformal gauge");
        let g = self.geometry();
        let x = self.grid.nodes();
        let ux = stencil::d1(u, self.h(), End::Even, End::Even);
        let i_int = self.gauge_integral(&g);
        (0..u.len())
            .map(|i| {
                -g.k_rad[i] - (n - 2.0) * g.k_tan[i] + i_int[i] * (cos(x[i]) + ux[i] * sin(x[i])) + alpha / n
            })
            .collect()
    }

    fn stable_dt(&self, safety: f64) -> f64 {
        let h = self.h();
        let m = self.phi.iter().fold(f64::INFINITY, |a, f| a.min(*f));
        safety * (m * h) * (m * h)
    }

    /// s-derivatives of an even potential: (f_s, f_ss).
    fn potential_derivatives(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.h();
        let fx = stencil::d1(f, h, End::Even, End::Even);
        let fs: Vec<f64> = fx.iter().zip(&self.phi).map(|(d, p)| d / p).collect();
        let dfs = stencil::d1(&fs, h, End::Odd, End::Odd);
        let fss = dfs.iter().zip(&self.phi).map(|(d, p)| d / p).collect();
        (fs, fss)
    }

    /// Δf with its pole limit n·f_ss.
    fn laplacian(&self, g: &Geo, f: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        let (fs, fss) = self.potential_derivatives(f);
        let len = f.len();
        let mut out = alloc::vec![0.0; len];
        for i in 1..len - 1 {
            out[i] = fss[i] + (n - 1.0) * g.psi_s[i] / self.psi[i] * fs[i];
        }
        out[0] = n * fss[0];
        out[len - 1] = n * fss[len - 1];
        out
    }
}

/// Functional values of a state at parameter τ.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Functionals {
    f: f64,
    w: f64,
    /// ∫|Ric + Hess f|²u dv with u = e^{−f}/Z.
    ric_hess_sq: f64,
    /// ∫|Ric + Hess f − g/(2τ)|²u dv.
    soliton_sq: f64,
}

fn functionals(p: &Prof, f: &[f64], tau: f64) -> Functionals {
    let n = p.n as f64;
    let g = p.geometry();
    let r = p.scalar_curvature(&g);
    let (fs, fss) = p.potential_derivatives(f);
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let len = f.len();
    let mut mass = alloc::vec![0.0; len];
    let mut fint = alloc::vec![0.0; len];
    let mut nash = alloc::vec![0.0; len];
    let mut rh = alloc::vec![0.0; len];
    let mut sol = alloc::vec![0.0; len];
    for i in 1..len - 1 {
        let w = exp(fmin - f[i]) * g.density[i];
        let r1 = (n - 1.0) * g.k_rad[i] + fss[i];
        let r2 = g.k_rad[i] + (n - 2.0) * g.k_tan[i] + g.psi_s[i] / p.psi[i] * fs[i];
        let c = 1.0 / (2.0 * tau);
        mass[i] = w;
        fint[i] = (fs[i] * fs[i] + r[i]) * w;
        nash[i] = (f[i] - fmin) * w;
        rh[i] = (r1 * r1 + (n - 1.0) * r2 * r2) * w;
        sol[i] = ((r1 - c) * (r1 - c) + (n - 1.0) * (r2 - c) * (r2 - c)) * w;
    }
    let z = p.grid.quad(&mass);
    let fv = p.grid.quad(&fint) / z;
    // f_τ = f + log Z − (n/2)log 4πτ, with Z = ∫e^{−f}dv.
    let log_z = ln(z) - fmin;
    let mean_f = p.grid.quad(&nash) / z + fmin;
    let w = tau * fv + mean_f + log_z - n / 2.0 * ln(4.0 * PI * tau) - n;
    Functionals { f: fv, w, ric_hess_sq: p.grid.quad(&rh) / z, soliton_sq: p.grid.quad(&sol) / z }
}

/// F(f, g) with e^{−f} normalized to unit mass.
pub fn f_functional(state: &FlowState) -> f64 {
    functionals(&state.prof(), state.potential.values(), 1.0).f
}

/// W(f, g, τ) with f shifted so that (4πτ)^{−n/2}e^{−f} has unit mass.
pub fn w_functional(state: &FlowState, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive"));
    }
    Ok(functionals(&state.prof(), state.potential.values(), tau).w)
}

/// Largest absolute sectional curvature.
pub fn sup_rm(link: &LinkGeometry) -> Result<f64> {
    match link {
        LinkGeometry::RoundSphere { beta, .. } => Ok(1.0 / (beta * beta)),
        LinkGeometry::ProfileWarped(p) => {
            let pr = Prof::of(link, p.grid())?;
            Ok(pr.sup_rm(&pr.geometry()))
        }
        LinkGeometry::Einstein { .. } => Err(Error::Unsupported("einstein links carry no curvature tensor")),
    }
}

/// Relative spread max|K_tan − mean|/|mean| of the orbit curvature
/// (1 − ψ_s²)/ψ² over interior nodes; 0 on round spheres.
pub fn roundness(link: &LinkGeometry) -> Result<f64> {
    match link {
        LinkGeometry::RoundSphere { .. } => Ok(0.0),
        LinkGeometry::ProfileWarped(p) => {
            let pr = Prof::of(link, p.grid())?;
            let k = &pr.geometry().k_tan;
            let inner = &k[1..k.len() - 1];
            let mean = inner.iter().sum::<f64>() / inner.len() as f64;
            Ok(inner.iter().fold(0.0f64, |a, v| a.max(abs(v - mean))) / abs(mean))
        }
        LinkGeometry::Einstein { .. } => Err(Error::Unsupported("einstein links carry no profile")),
    }
}

/// β(t)² = β₀² − 2(n−1)t for the round sphere β₀Sⁿ.
pub fn ricci_flow_round_ode(beta0: f64, dim: usize, t: f64) -> Result<LinkGeometry> {
    LinkGeometry::round_sphere(dim, beta0)?;
    let extinction = beta0 * beta0 / (2.0 * (dim - 1) as f64);
    if t >= extinction {
        return Err(Error::PastExtinction { t, extinction });
    }
    LinkGeometry::round_sphere(dim, sqrt(beta0 * beta0 - 2.0 * (dim - 1) as f64 * t))
}

/// Exact β² after time dt of dβ²/dt = −2(n−1) + (2α/n)β².
fn round_beta_sq(beta_sq: f64, n: usize, alpha: f64, dt: f64) -> f64 {
    let nn = n as f64;
    let a = 2.0 * alpha / nn;
    let c = 2.0 * (nn - 1.0);
    if abs(a * dt) < 1e-300 || a == 0.0 {
        return beta_sq - c * dt;
    }
    let fixed = c / a;
    let next = fixed + (beta_sq - fixed) * exp(a * dt);
    // At the fixed point β² = 2(n−1)n/(2α) keep the value bit-for-bit.
    if beta_sq == fixed {
        beta_sq
    } else {
        next
    }
}

/// α prescribed by the rule for a state.
pub fn alpha_for(state: &FlowState, config: &FlowConfig) -> Result<f64> {
    let n = state.dim() as f64;
    match config.alpha_rule {
        AlphaRule::None => Ok(0.0),
        AlphaRule::Fixed(a) => Ok(a),
        AlphaRule::VolumePreserving => match &state.link {
            LinkGeometry::RoundSphere { dim, beta } => Ok((dim * (dim - 1)) as f64 / (beta * beta)),
            _ => {
                let p = state.prof();
                Ok(p.r_av(&p.geometry()))
            }
        },
        AlphaRule::ShrinkingTimePreserving => {
            let t = match (config.shrinking_time, &state.link) {
                (Some(t), _) => t,
                (None, LinkGeometry::RoundSphere { dim, beta }) => beta * beta / (2.0 * (dim - 1) as f64),
                _ => return Err(Error::InvalidInput("the shrinking-time rule needs a shrinking time for profiles")),
            };
            Ok(n / (2.0 * t))
        }
    }
}

/// Largest step allowed by the explicit-scheme contract.
pub fn stable_dt(state: &FlowState, config: &FlowConfig) -> f64 {
    state.prof().stable_dt(config.dt_safety)
}

fn shift_to_mass(p: &Prof, f: &[f64], target: f64) -> Vec<f64> {
    let m = p.mass(f);
    let c = ln(m / target);
    f.iter().map(|v| v + c).collect()
}

/// Advance the metric by dt; the potential only has its normalization re-imposed.
fn advance_metric(state: &FlowState, config: &FlowConfig, dt: f64) -> Result<FlowState> {
    let alpha = alpha_for(state, config)?;
    let t1 = state.time + dt;
    let link = match &state.link {
        LinkGeometry::RoundSphere { dim, beta } => {
            let b2 = round_beta_sq(beta * beta, *dim, alpha, dt);
            if !(b2 > 0.0) {
                let extinction = state.time + beta * beta / (2.0 * (dim - 1) as f64);
                return Err(Error::PastExtinction { t: t1, extinction });
            }
            LinkGeometry::round_sphere(*dim, sqrt(b2))?
        }
        LinkGeometry::ProfileWarped(_) => {
            let p = state.prof();
            if dt > p.stable_dt(config.dt_safety) * (1.0 + 1e-9) {
                return Err(Error::InvalidInput("time step exceeds the explicit stability bound"));
            }
            // Heun's method; α is re-evaluated at the predictor for the volume rule.
            let u0 = p.u.clone().expect("flow states are in conformal gauge");
            let singular = |u: &[f64]| {
                let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                !(lo.is_finite() && hi.is_finite()) || hi - lo > SINGULAR_SPREAD
            };
            let k1 = p.rates(alpha);
            let u1: Vec<f64> = u0.iter().zip(&k1).map(|(a, b)| a + dt * b).collect();
            if singular(&u1) {
                return Err(Error::FlowSingular { time: t1 });
            }
            let q = Prof::from_u(p.n, p.grid.clone(), u1);
            let alpha2 = match config.alpha_rule {
                AlphaRule::VolumePreserving => q.r_av(&q.geometry()),
                _ => alpha,
            };
            let k2 = q.rates(alpha2);
            let u2: Vec<f64> = (0..u0.len()).map(|i| u0[i] + 0.5 * dt * (k1[i] + k2[i])).collect();
            if singular(&u2) {
                return Err(Error::FlowSingular { time: t1 });
            }
            let out = Prof::from_u(p.n, p.grid.clone(), u2);
            LinkGeometry::ProfileWarped(out.to_warped().map_err(|_| Error::FlowSingular { time: t1 })?)
        }
        LinkGeometry::Einstein { .. } => return Err(Error::Unsupported("einstein links cannot flow")),
    };
    // Near extinction the geometry can stay representable while its mass does not.
    let singular = |_| Error::FlowSingular { time: t1 };
    let p = Prof::of(&link, state.potential.grid()).map_err(singular)?;
    let f = shift_to_mass(&p, state.potential.values(), state.normalization);
    let potential = ScalarField::new(p.grid.clone(), f, POLES).map_err(singular)?;
    Ok(FlowState { time: t1, link, potential, normalization: state.normalization })
}

/// W(·, g, τ) minimizer as a potential with the given normalization.
fn reminimized(state: &FlowState, tau: f64) -> Result<ScalarField> {
    let d = match &state.link {
        LinkGeometry::RoundSphere { .. } => state.link.discretize_with(state.potential.grid().len())?,
        _ => state.link.discretize()?,
    };
    let est = mu_on_discretization(&d, tau)?;
    let u = est.minimizer.ok_or(Error::Unsupported("no minimizer available"))?;
    let f: Vec<f64> = u.values().iter().map(|v| -ln((v * v).max(1e-300))).collect();
    let p = state.prof();
    let f = shift_to_mass(&p, &f, state.normalization);
    ScalarField::new(p.grid.clone(), f, POLES)
}

/// One explicit step of the renormalized flow.
pub fn flow_step(state: &FlowState, config: &FlowConfig, dt: f64) -> Result<FlowState> {
    config.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput("dt must be positive"));
    }
    let mut next = advance_metric(state, config, dt)?;
    if let PotentialMode::Reminimized { tau } = config.potential_mode {
        next.potential = reminimized(&next, tau)?;
    }
    Ok(next)
}

/// A recorded trajectory with the α used on each step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub alpha_rule: AlphaRule,
    pub mode: PotentialMode,
    /// Largest additive shift needed to hold the normalization during transport.
    pub normalization_drift: f64,
}

/// Integrate from `initial` to `config.t_end`, recording every
/// `record_every`-th state (the first and last are always kept).
pub fn integrate_flow(initial: &FlowState, config: &FlowConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut cfg = config.clone();
    if cfg.alpha_rule == AlphaRule::ShrinkingTimePreserving && cfg.shrinking_time.is_none() {
        cfg.shrinking_time = Some(shrinking_time_estimate(initial)?);
    }
    let t_end = initial.time + cfg.t_end;
    let mut states = alloc::vec![initial.clone()];
    if let PotentialMode::Reminimized { tau } = cfg.potential_mode {
        states[0].potential = reminimized(initial, tau)?;
    }
    let mut cur = states[0].clone();
    let mut k = 0usize;
    let eps = 1e-12 * t_end.abs().max(1.0);
    while cur.time < t_end - eps {
        let dt = stable_dt(&cur, &cfg).min(t_end - cur.time);
        cur = advance_metric(&cur, &cfg, dt)?;
        k += 1;
        let last = cur.time >= t_end - eps;
        if k % cfg.record_every == 0 || last {
            if let PotentialMode::Reminimized { tau } = cfg.potential_mode {
                cur.potential = reminimized(&cur, tau)?;
            }
            states.push(cur.clone());
        }
    }
    Ok(Trajectory { states, alpha_rule: cfg.alpha_rule, mode: cfg.potential_mode, normalization_drift: 0.0 })
}

/// Solve the conjugate heat equation backwards along the trajectory from
/// `terminal` (a potential on the grid of the last state), overwriting the
/// potentials of every state. Returns the largest normalization shift.
pub fn transport_potential(traj: &mut Trajectory, terminal: &ScalarField) -> Result<f64> {
    let len = traj.states.len();
    if len < 2 {
        return Err(Error::TrajectoryTooShort);
    }
    let last = &traj.states[len - 1];
    if terminal.grid().nodes() != last.potential.grid().nodes() {
        return Err(Error::GridMismatch);
    }
    let p_last = last.prof();
    let target = p_last.mass(terminal.values());
    let mut f = terminal.values().to_vec();
    let mut drift = 0.0f64;
    let rate = |p: &Prof, f: &[f64]| -> Vec<f64> {
        // Reversed time σ = −t: ∂_σ f = Δf − |∇f|² + R − V·∇f (α is a
        // constant, absorbed by the normalization).
        let g = p.geometry();
        let lap = p.laplacian(&g, f);
        let (fs, _) = p.potential_derivatives(f);
        let r = p.scalar_curvature(&g);
        let gauge = p.gauge_integral(&g);
        let x = p.grid.nodes();
        (0..f.len()).map(|i| lap[i] - fs[i] * fs[i] + r[i] - sin(x[i]) * gauge[i] * fs[i] * p.phi[i]).collect()
    };
    traj.states[len - 1].potential = ScalarField::new(p_last.grid.clone(), f.clone(), POLES)?;
    traj.states[len - 1].normalization = target;
    let mut p_next = p_last;
    for k in (0..len - 1).rev() {
        let p_k = traj.states[k].prof();
        let dt = traj.states[k + 1].time - traj.states[k].time;
        let bound = p_next.stable_dt(0.5).min(p_k.stable_dt(0.5));
        let sub = libm::ceil(dt / bound).max(1.0) as usize;
        let h = dt / sub as f64;
        for j in 0..sub {
            // Metric coefficients interpolated linearly inside a recorded step.
            let s0 = 1.0 - j as f64 / sub as f64;
            let s1 = 1.0 - (j + 1) as f64 / sub as f64;
            let blend = |s: f64| -> Prof {
                if sub == 1 {
                    return if s == 1.0 { p_next.clone() } else { p_k.clone() };
                }
                let (ua, ub) = (p_k.u.as_ref().expect("polar"), p_next.u.as_ref().expect("polar"));
                let u = ua.iter().zip(ub).map(|(a, b)| a + s * (b - a)).collect::<Vec<f64>>();
                let round = p_k.round.is_some() && p_next.round.is_some();
                let mut q = Prof::from_u(p_k.n, p_k.grid.clone(), u);
                if round {
                    q.round = Some(exp(2.0 * q.u.as_ref().expect("polar")[0]));
                }
                q
            };
            let (qa, qb) = (blend(s0), blend(s1));
            let k1 = rate(&qa, &f);
            let pred: Vec<f64> = f.iter().zip(&k1).map(|(a, b)| a + h * b).collect();
            let k2 = rate(&qb, &pred);
            for i in 0..f.len() {
                f[i] += 0.5 * h * (k1[i] + k2[i]);
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::FlowSingular { time: traj.states[k].time });
            }
            let m = qb.mass(&f);
            let c = ln(m / target);
            drift = drift.max(abs(c));
            f.iter_mut().for_each(|v| *v += c);
        }
        traj.states[k].potential = ScalarField::new(p_k.grid.clone(), f.clone(), POLES)?;
        traj.states[k].normalization = target;
        p_next = p_k;
    }
    traj.normalization_drift = drift;
    traj.mode = PotentialMode::Transported;
    Ok(drift)
}

/// Monitored quantities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRecord {
    pub time: f64,
    pub sup_rm_times_t: f64,
    pub volume: f64,
    pub f_value: f64,
    pub w_value: f64,
    pub residuals: BTreeMap<&'static str, f64>,
}

pub fn monitor_record(state: &FlowState, monitors: &MonitorSet) -> Result<MonitorRecord> {
    let p = state.prof();
    let tau = monitors.tau.at(state.time);
    let (f_value, w_value) = if monitors.functionals {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput("monitor tau must stay positive"));
        }
        let fx = functionals(&p, state.potential.values(), tau);
        (fx.f, fx.w)
    } else {
        (0.0, 0.0)
    };
    let sup_rm_times_t = if monitors.curvature { sup_rm(&state.link)? * state.time } else { 0.0 };
    let mut residuals = BTreeMap::new();
    residuals.insert("roundness", roundness(&state.link)?);
    residuals.insert("normalization", abs(p.mass(state.potential.values()) / state.normalization - 1.0));
    let rec = MonitorRecord { time: state.time, sup_rm_times_t, volume: p.volume(), f_value, w_value, residuals };
    let finite = rec.sup_rm_times_t.is_finite()
        && rec.volume.is_finite()
        && rec.f_value.is_finite()
        && rec.w_value.is_finite()
        && rec.residuals.values().all(|v| v.is_finite());
    if !finite {
        return Err(Error::FlowSingular { time: state.time });
    }
    Ok(rec)
}

/// Finite-difference time derivatives compared with the right-hand sides of
/// the variation formulas for R, vol, F and W(τ fixed):
///
/// ```text
/// ∂_t R   = ΔR + 2|Ric|² − (2α/n)R + V·∇R
/// ∂_t vol = (α − R_av)vol
/// ∂_t F   = 2∫|Ric + Hess f|²u − (2α/n)F
/// ∂_t W   = 2τ∫|Ric + Hess f|²u − (2ατ/n)F − F + α
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct VariationReport {
    pub mode: &'static str,
    pub alpha_rule: &'static str,
    /// Pointwise, relative to sup|R|.
    pub r_residual: f64,
    /// Relative to the volume.
    pub vol_residual: f64,
    pub f_residual: f64,
    pub w_residual: f64,
    /// Smallest finite-difference dF/dt and its right-hand side lower bound.
    pub min_df_dt: f64,
    /// (t, finite-difference dF/dt, right-hand side) at each interior state.
    pub f_rates: Vec<(f64, f64, f64)>,
}

/// Three-point derivative on a non-uniform time grid.
fn fd(t: [f64; 3], q: [f64; 3]) -> f64 {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    -h1 / (h0 * (h0 + h1)) * q[0] + (h1 - h0) / (h0 * h1) * q[1] + h0 / (h1 * (h0 + h1)) * q[2]
}

pub fn variation_identities_check(traj: &[FlowState], config: &FlowConfig, tau: f64) -> Result<VariationReport> {
    if traj.len() < MIN_IDENTITY_STATES {
        return Err(Error::InsufficientSampling { states: traj.len() });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive"));
    }
    let n = traj[0].dim() as f64;
    let profs: Vec<Prof> = traj.iter().map(|s| s.prof()).collect();
    let geos: Vec<Geo> = profs.iter().map(|p| p.geometry()).collect();
    let rs: Vec<Vec<f64>> = profs.iter().zip(&geos).map(|(p, g)| p.scalar_curvature(g)).collect();
    let vols: Vec<f64> = profs.iter().map(|p| p.volume()).collect();
    let fx: Vec<Functionals> =
        profs.iter().zip(traj).map(|(p, s)| functionals(p, s.potential.values(), tau)).collect();
    let (mut rr, mut vr, mut frr, mut wr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut min_df = f64::INFINITY;
    let mut f_rates = Vec::new();
    for k in 1..traj.len() - 1 {
        let t = [traj[k - 1].time, traj[k].time, traj[k + 1].time];
        let alpha = alpha_for(&traj[k], config)?;
        let (p, g, r) = (&profs[k], &geos[k], &rs[k]);
        let len = r.len();
        let rmax = r.iter().fold(0.0f64, |a, v| a.max(abs(*v)));
        let lap = p.laplacian(g, r);
        let r_x = stencil::d1(r, p.h(), End::Even, End::Even);
        let gauge = p.gauge_integral(g);
        let x = p.grid.nodes();
        // Interior nodes at least three cells from a pole.
        for i in 3..len.saturating_sub(3) {
            let ric2 = powi((n - 1.0) * g.k_rad[i], 2) + (n - 1.0) * powi(g.k_rad[i] + (n - 2.0) * g.k_tan[i], 2);
            let rhs = lap[i] + 2.0 * ric2 - 2.0 * alpha / n * r[i] + sin(x[i]) * gauge[i] * r_x[i];
            let lhs = fd(t, [rs[k - 1][i], r[i], rs[k + 1][i]]);
            rr = rr.max(abs(lhs - rhs) / rmax);
        }
        let dvol = fd(t, [vols[k - 1], vols[k], vols[k + 1]]);
        vr = vr.max(abs(dvol - (alpha - p.r_av(g)) * vols[k]) / vols[k]);
        let dfdt = fd(t, [fx[k - 1].f, fx[k].f, fx[k + 1].f]);
        let f_rhs = 2.0 * fx[k].ric_hess_sq - 2.0 * alpha / n * fx[k].f;
        frr = frr.max(abs(dfdt - f_rhs));
        min_df = min_df.min(dfdt);
        f_rates.push((t[1], dfdt, f_rhs));
        let dwdt = fd(t, [fx[k - 1].w, fx[k].w, fx[k + 1].w]);
        let w_rhs = 2.0 * tau * fx[k].ric_hess_sq - 2.0 * alpha * tau / n * fx[k].f - fx[k].f + alpha;
        wr = wr.max(abs(dwdt - w_rhs));
    }
    Ok(VariationReport {
        mode: PotentialMode::Transported.as_str(),
        alpha_rule: config.alpha_rule.as_str(),
        r_residual: rr,
        vol_residual: vr,
        f_residual: frr,
        w_residual: wr,
        min_df_dt: min_df,
        f_rates,
    })
}

/// Values of F and W(τ₀ − t) along a coupled trajectory with their worst
/// decrease between consecutive states (0 when monotone).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub times: Vec<f64>,
    pub f_values: Vec<f64>,
    pub w_values: Vec<f64>,
    pub worst_f_drop: f64,
    pub worst_w_drop: f64,
    /// Smallest 2τ∫|Ric + Hess f − g/(2τ)|²u, the dW/dt predicted by the
    /// coupled system (non-negative by construction).
    pub min_w_rate: f64,
}

/// F(f_t, g_t) and W(f_t, g_t, τ₀ − t) along a plain Ricci flow trajectory
/// with a transported potential.
pub fn monotonicity_check(traj: &[FlowState], tau0: f64) -> Result<MonotonicityReport> {
    if traj.len() < 2 {
        return Err(Error::TrajectoryTooShort);
    }
    let t_last = traj[traj.len() - 1].time;
    if !(tau0 > t_last) {
        return Err(Error::InvalidInput("tau0 must exceed the final time"));
    }
    let mut rep = MonotonicityReport {
        times: Vec::new(),
        f_values: Vec::new(),
        w_values: Vec::new(),
        worst_f_drop: 0.0,
        worst_w_drop: 0.0,
        min_w_rate: f64::INFINITY,
    };
    for s in traj {
        let tau = tau0 - s.time;
        let fx = functionals(&s.prof(), s.potential.values(), tau);
        rep.times.push(s.time);
        rep.f_values.push(fx.f);
        rep.w_values.push(fx.w);
        rep.min_w_rate = rep.min_w_rate.min(2.0 * tau * fx.soliton_sq);
    }
    for k in 1..traj.len() {
        rep.worst_f_drop = rep.worst_f_drop.max(rep.f_values[k - 1] - rep.f_values[k]);
        rep.worst_w_drop = rep.worst_w_drop.max(rep.w_values[k - 1] - rep.w_values[k]);
    }
    Ok(rep)
}

/// Shrinking time T_N of the plain Ricci flow from the state, measured from
/// the state's own time. Round spheres give β²/(2(n−1)) exactly; profiles
/// are flowed until the orbit curvature is round to [`ROUNDNESS_THRESHOLD`],
/// then T = t + β_vol²/(2(n−1)) (β_vol from the volume) is extrapolated
/// linearly in β_vol² → 0.
pub fn shrinking_time_estimate(state: &FlowState) -> Result<f64> {
    let n = state.dim();
    let c = 2.0 * (n - 1) as f64;
    if let LinkGeometry::RoundSphere { beta, .. } = state.link {
        return Ok(beta * beta / c);
    }
    let cfg = FlowConfig::new(AlphaRule::None, f64::MAX);
    let b0 = state.beta_sq_from_volume();
    let mut cur = state.at_time(0.0);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut round_at: Option<f64> = None;
    loop {
        let b2 = cur.beta_sq_from_volume();
        if round_at.is_none() && roundness(&cur.link)? < ROUNDNESS_THRESHOLD {
            round_at = Some(b2);
        }
        if let Some(b_round) = round_at {
            samples.push((b2, cur.time + b2 / c));
            if b2 < 0.5 * b_round && samples.len() >= 8 {
                break;
            }
        }
        if b2 < 1e-3 * b0 {
            return Err(Error::NoRoundLimit { time: cur.time });
        }
        let dt = stable_dt(&cur, &cfg);
        cur = advance_metric(&cur, &cfg, dt).map_err(|e| match e {
            Error::FlowSingular { time } => Error::NoRoundLimit { time },
            e => e,
        })?;
    }
    // Least squares T = T_N + s·β² over the round regime.
    let m = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxx, sxy) =
        samples.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (x - mx), b + (x - mx) * (y - my)));
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(my - slope * mx)
}

/// T_N re-estimated along a renormalized flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkingTimeReport {
    pub alpha_rule: &'static str,
    pub initial: f64,
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    /// max |T(t) − T(0)|/T(0).
    pub max_relative_drift: f64,
    /// T(t_end) − T(0).
    pub net_change: f64,
}

/// Flow under `config` (any α rule) over [0, t_end] (default 2T_N) and
/// estimate T_N at five equally spaced times.
pub fn renormalized_shrinking_time_check(state: &FlowState, config: &FlowConfig) -> Result<ShrinkingTimeReport> {
    config.validate()?;
    let t0 = shrinking_time_estimate(state)?;
    let mut cfg = config.clone();
    cfg.potential_mode = PotentialMode::Transported;
    if cfg.alpha_rule == AlphaRule::ShrinkingTimePreserving && cfg.shrinking_time.is_none() {
        cfg.shrinking_time = Some(t0);
    }
    let t_end = if cfg.t_end > 0.0 { cfg.t_end } else { 2.0 * t0 };
    let mut times = alloc::vec![0.0];
    let mut estimates = alloc::vec![t0];
    let mut cur = state.at_time(0.0);
    for k in 1..5 {
        let target = t_end * k as f64 / 4.0;
        let eps = 1e-12 * t_end;
        while cur.time < target - eps {
            let dt = stable_dt(&cur, &cfg).min(target - cur.time);
            cur = advance_metric(&cur, &cfg, dt)?;
        }
        times.push(cur.time);
        estimates.push(shrinking_time_estimate(&cur)?);
    }
    let max_relative_drift = estimates.iter().fold(0.0f64, |a, t| a.max(abs(t - t0) / t0));
    Ok(ShrinkingTimeReport {
        alpha_rule: cfg.alpha_rule.as_str(),
        initial: t0,
        net_change: estimates[4] - t0,
        times,
        estimates,
        max_relative_drift,
    })
}

/// Metric of one time slice for the curvature and volume monitors.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceMetric {
    /// Euclidean ℝⁿ.
    Flat { dim: usize },
    Link(LinkGeometry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub metric: SliceMetric,
}

impl From<&FlowState> for Snapshot {
    fn from(s: &FlowState) -> Self {
        Snapshot { time: s.time, metric: SliceMetric::Link(s.link.clone()) }
    }
}

impl SliceMetric {
    pub fn dim(&self) -> usize {
        match self {
            SliceMetric::Flat { dim } => *dim,
            SliceMetric::Link(l) => l.dim(),
        }
    }

    pub fn sup_rm(&self) -> Result<f64> {
        match self {
            SliceMetric::Flat { .. } => Ok(0.0),
            SliceMetric::Link(l) => sup_rm(l),
        }
    }

    /// The metric multiplied by c.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match self {
            SliceMetric::Flat { dim } => Ok(SliceMetric::Flat { dim: *dim }),
            SliceMetric::Link(LinkGeometry::ProfileWarped(p)) => {
                // Same coordinates, ψ and φ scaled by √c.
                let k = sqrt(c);
                let scale = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<f64>>();
                let q = WarpedProfile::new(p.dim(), p.grid().clone(), scale(p.psi()), scale(p.phi()))?;
                Ok(SliceMetric::Link(LinkGeometry::ProfileWarped(q)))
            }
            SliceMetric::Link(l) => Ok(SliceMetric::Link(l.rescaled(sqrt(c))?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeIiiReport {
    /// max over t > 0 of sup|Rm|·t.
    pub c_estimate: f64,
    /// No monotone blow-up of sup|Rm|·t over the last quartile.
    pub is_type_iii: bool,
}

pub fn type_iii_monitor(traj: &[Snapshot]) -> Result<TypeIiiReport> {
    let mut q = Vec::new();
    for s in traj.iter().filter(|s| s.time > 0.0) {
        q.push(s.metric.sup_rm()? * s.time);
    }
    let c_estimate = q.iter().fold(0.0f64, |a, v| a.max(*v));
    if q.len() < 4 {
        return Ok(TypeIiiReport { c_estimate, is_type_iii: true });
    }
    let tail = &q[q.len() - q.len() / 4 - 1..];
    let increasing = tail.windows(2).all(|w| w[1] >= w[0]);
    let blowup = increasing && tail[tail.len() - 1] > 1.5 * tail[0];
    Ok(TypeIiiReport { c_estimate, is_type_iii: !blowup })
}

/// Parabolic rescaling g_s(t) = g(st)/s.
#[derive(Debug, Clone, PartialEq)]
pub struct Blowdown {
    pub snapshots: Vec<Snapshot>,
    /// max relative deviation from |Rm_{g_s}|(t) = s·|Rm_g|(st).
    pub identity_residual: f64,
}

/// Rescale the snapshots with times in [0, s·t_max]; the trajectory must
/// reach s·t_max.
pub fn blowdown_rescale(traj: &[Snapshot], s: f64, t_max: f64) -> Result<Blowdown> {
    if !(s > 0.0 && s.is_finite()) || !(t_max >= 0.0) {
        return Err(Error::InvalidInput("scale must be positive and t_max non-negative"));
    }
    let reach = traj.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x.time));
    if traj.is_empty() || reach < s * t_max * (1.0 - 1e-12) {
        return Err(Error::TrajectoryTooShort);
    }
    let mut snapshots = Vec::new();
    let mut residual = 0.0f64;
    for x in traj.iter().filter(|x| x.time <= s * t_max * (1.0 + 1e-12)) {
        let metric = x.metric.scaled(1.0 / s)?;
        let (a, b) = (metric.sup_rm()?, s * x.metric.sup_rm()?);
        residual = residual.max(if b > 0.0 { abs(a - b) / b } else { a });
        snapshots.push(Snapshot { time: x.time / s, metric });
    }
    Ok(Blowdown { snapshots, identity_residual: residual })
}

/// ∫₀^θ sinᵏ.
fn sin_power_integral(k: usize, theta: f64) -> f64 {
    match k {
        0 => theta,
        1 => 1.0 - cos(theta),
        _ => {
            -powi(sin(theta), k as i32 - 1) * cos(theta) / k as f64
                + (k - 1) as f64 / k as f64 * sin_power_integral(k - 2, theta)
        }
    }
}

/// Volume of the geodesic ball of radius ρ about the pole at `basepoint`.
fn ball_volume_at(metric: &SliceMetric, basepoint: f64, rho: f64) -> Result<f64> {
    match metric {
        SliceMetric::Flat { dim } => {
            if !basepoint.is_finite() {
                return Err(Error::BadBasepoint);
            }
            Ok(ball_volume(*dim) * powi(rho, *dim as i32))
        }
        SliceMetric::Link(LinkGeometry::RoundSphere { dim, beta }) => {
            if !(abs(basepoint) <= 1e-12 || abs(basepoint - PI) <= 1e-12) {
                return Err(Error::BadBasepoint);
            }
            let theta = (rho / beta).min(PI);
            Ok(sphere_volume(dim - 1) * powi(*beta, *dim as i32) * sin_power_integral(dim - 1, theta))
        }
        SliceMetric::Link(LinkGeometry::ProfileWarped(p)) => {
            let x = p.grid().nodes();
            let len = x.len();
            let l = x[len - 1];
            let north = abs(basepoint) <= 1e-12 * l;
            if !(north || abs(basepoint - l) <= 1e-12 * l) {
                return Err(Error::BadBasepoint);
            }
            let w = sphere_volume(p.dim() - 1);
            let idx = |k: usize| if north { k } else { len - 1 - k };
            let dens = |k: usize| w * powi(p.psi()[idx(k)], p.dim() as i32 - 1) * p.phi()[idx(k)];
            let h = p.grid().step();
            let (mut s, mut v) = (0.0, 0.0);
            for k in 0..len - 1 {
                let ds = 0.5 * h * (p.phi()[idx(k)] + p.phi()[idx(k + 1)]);
                let dv = 0.5 * h * (dens(k) + dens(k + 1));
                if s + ds >= rho {
                    return Ok(v + dv * (rho - s) / ds);
                }
                s += ds;
                v += dv;
            }
            Ok(v)
        }
        SliceMetric::Link(LinkGeometry::Einstein { .. }) => Err(Error::Unsupported("einstein links carry no balls")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRatioTrace {
    pub times: Vec<f64>,
    /// Vol(B(p, √t))/t^{n/2}.
    pub ratios: Vec<f64>,
    /// The trace falls below 5% of its maximum and is nonincreasing over its last quartile.
    pub collapsed: bool,
}

/// Vol(B(p, √t))/t^{n/2} along the snapshots with t > 0. Balls are centred
/// at a pole (x = 0 or x = L); other basepoints are rejected.
pub fn volume_ratio_monitor(traj: &[Snapshot], basepoint: f64) -> Result<VolumeRatioTrace> {
    let mut times = Vec::new();
    let mut ratios = Vec::new();
    for s in traj.iter().filter(|s| s.time > 0.0) {
        let v = ball_volume_at(&s.metric, basepoint, sqrt(s.time))?;
        times.push(s.time);
        ratios.push(v / powf(s.time, s.metric.dim() as f64 / 2.0));
    }
    let collapsed = if ratios.len() >= 4 {
        let max = ratios.iter().fold(0.0f64, |a, v| a.max(*v));
        let tail = &ratios[ratios.len() - ratios.len() / 4 - 1..];
        tail.windows(2).all(|w| w[1] <= w[0]) && ratios[ratios.len() - 1] < 0.05 * max
    } else {
        false
    };
    Ok(VolumeRatioTrace { times, ratios, collapsed })
}

/// Closed-form round snapshots β(t)² = β₀² + 2(n−1)·sign·t at the given times
/// (sign −1 is Ricci flow, +1 the expanding family with reversed sign).
pub fn round_family(dim: usize, beta0: f64, sign: f64, times: &[f64]) -> Result<Vec<Snapshot>> {
    times
        .iter()
        .map(|&t| {
            let b2 = beta0 * beta0 + sign * 2.0 * (dim - 1) as f64 * t;
            if !(b2 > 0.0) {
                return Err(Error::PastExtinction { t, extinction: beta0 * beta0 / (2.0 * (dim - 1) as f64) });
            }
            Ok(Snapshot { time: t, metric: SliceMetric::Link(LinkGeometry::round_sphere(dim, sqrt(b2))?) })
        })
        .collect()
}
