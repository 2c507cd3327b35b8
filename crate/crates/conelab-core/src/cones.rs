//! Cones C(N) = (ℝ⁺ × N, dr² + r²g^N) over links, and the finiteness
//! dichotomy for their entropy.
//!
//! Fields on a cone are sampled on (logarithmic radial grid) × (link polar
//! grid). The two evaluation paths of W — the direct "basic" double
//! integral and the separated form ∫[W^N(f̃, τ/r²) − n(n−1)τ/r²]dμ_a + radial
//! term — share quadratures, so they agree to round-off.
//!
//! The finiteness verdict compares λ^N with n − 1: below it the probe
//! v = b r^{-a} ũ χ drives W to −∞ like ε^{n−2a−1} as the inner cutoff ε → 0.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::links::{
    default_tau_grid, ground_state, lambda_link, mu_link, FunctionalQuery, LinkDiscretization,
    LinkGeometry, MuEnvelope,
};
use crate::math::{abs, exp, ln, powf, sphere_volume, sqrt, xlogx2, PI};
use crate::numcore::stencil::{self, End};
use crate::numcore::{
    minimize_normalized, BoundaryKind, MinimizeConfig, MinimizeStatus, NormalizedFunctional,
    RadialGrid, ScalarField, SturmLiouvilleProblem, DEFAULT_NODES,
};

/// Link grid size used for round links on cones.
pub const LINK_NODES: usize = 257;

/// Tolerance band around λ^N = n − 1 for numerically computed λ.
pub const CLASSIFY_BAND: f64 = 1e-6;
/// Closed-form λ (round, Einstein) is compared at round-off level.
const EXACT_BAND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ConeGeometry {
    link: LinkGeometry,
    link_disc: Option<LinkDiscretization>,
    radial: Arc<RadialGrid>,
}

impl ConeGeometry {
    pub fn new(link: LinkGeometry, r_min: f64, r_max: f64, radial_nodes: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::InvalidInput("cone window needs 0 < r_min < r_max"));
        }
        let radial = Arc::new(RadialGrid::logarithmic(r_min, r_max, radial_nodes)?);
        let link_disc = match link {
            LinkGeometry::Einstein { .. } => None,
            _ => Some(link.discretize_with(LINK_NODES)?),
        };
        Ok(Self { link, link_disc, radial })
    }

    /// Default window [1e-4, 1e2]·√τ on the default number of radial nodes.
    pub fn for_tau(link: LinkGeometry, tau: f64) -> Result<Self> {
        let s = sqrt(tau);
        Self::new(link, 1e-4 * s, 1e2 * s, DEFAULT_NODES)
    }

    pub fn link(&self) -> &LinkGeometry {
        &self.link
    }
    pub fn radial_grid(&self) -> &Arc<RadialGrid> {
        &self.radial
    }
    pub fn window(&self) -> (f64, f64) {
        (self.radial.first(), self.radial.last())
    }
    pub fn dim(&self) -> usize {
        self.link.dim()
    }

    /// Link coefficients; Einstein links carry none.
    pub fn link_discretization(&self) -> Result<&LinkDiscretization> {
        self.link_disc
            .as_ref()
            .ok_or(Error::Unsupported("fields on cones need a link with coordinates"))
    }

    /// Cone scalar curvature (R^N(x) − n(n−1))/r² at grid point (i, j).
    pub fn scalar_curvature(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.link_discretization()?;
        let n = self.dim() as f64;
        let r = self.radial.nodes()[i];
        Ok((d.curvature[j] - n * (n - 1.0)) / (r * r))
    }

    /// Cone volume density rⁿ·m^N(x) at grid point (i, j).
    pub fn volume_density(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.link_discretization()?;
        Ok(powf(self.radial.nodes()[i], self.dim() as f64) * d.measure[j])
    }

    /// Same link, window scaled by c.
    pub fn rescaled_window(&self, c: f64) -> Result<Self> {
        let (a, b) = self.window();
        Self::new(self.link.clone(), a * c, b * c, self.radial.len())
    }

    /// Link quadrature weights w_j·m(x_j).
    fn link_weights(&self) -> Result<Vec<f64>> {
        let d = self.link_discretization()?;
        Ok(d.grid.weights().iter().zip(&d.measure).map(|(w, m)| w * m).collect())
    }
}

/// Values f(r_i, x_j) on a cone grid, stored row-major by radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeField {
    radial_len: usize,
    link_len: usize,
    values: Vec<f64>,
}

impl ConeField {
    pub fn from_fn(cone: &ConeGeometry, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let d = cone.link_discretization()?;
        let mut values = Vec::with_capacity(cone.radial.len() * d.grid.len());
        for &r in cone.radial.nodes() {
            for &x in d.grid.nodes() {
                values.push(f(r, x));
            }
        }
        Self::new(cone, values)
    }

    pub fn new(cone: &ConeGeometry, values: Vec<f64>) -> Result<Self> {
        let link_len = cone.link_discretization()?.grid.len();
        let radial_len = cone.radial.len();
        if values.len() != radial_len * link_len {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite potential"));
        }
        Ok(Self { radial_len, link_len, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.link_len + j]
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.link_len..(i + 1) * self.link_len]
    }
    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.radial_len).map(|i| self.get(i, j)).collect()
    }
    fn matches(&self, cone: &ConeGeometry) -> Result<()> {
        let l = cone.link_discretization()?.grid.len();
        if self.radial_len != cone.radial.len() || self.link_len != l {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// f + c.
    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v + c).collect(), ..self.clone() }
    }

    /// Radial derivative ∂_r f on every link column.
    fn radial_derivative(&self, grid: &RadialGrid) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.values.len()];
        for j in 0..self.link_len {
            let d = grid.derivative(&self.column(j));
            for (i, v) in d.into_iter().enumerate() {
                out[i * self.link_len + j] = v;
            }
        }
        out
    }

    /// |∇^N f|² on every radius (even parity at the poles).
    fn link_gradient_sq(&self, d: &LinkDiscretization) -> Vec<f64> {
        let h = d.grid.step();
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.radial_len {
            let dx = stencil::d1(self.row(i), h, End::Even, End::Even);
            out.extend(dx.iter().zip(&d.metric_inv).map(|(g, m)| m * g * g));
        }
        out
    }
}

/// log ∫ e^{−f(r_i, ·)} dv^N at every radius, evaluated relative to the row
/// minimum so that large potentials do not underflow.
fn log_link_mass(cone: &ConeGeometry, f: &ConeField) -> Result<Vec<f64>> {
    let w = cone.link_weights()?;
    let mut out = Vec::with_capacity(f.radial_len);
    for i in 0..f.radial_len {
        let row = f.row(i);
        let fmin = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let s: f64 = row.iter().zip(&w).map(|(v, wj)| wj * exp(-(v - fmin))).sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::MassUnderflow { radius: cone.radial.nodes()[i] });
        }
        out.push(ln(s) - fmin);
    }
    Ok(out)
}

/// ∫ e^{−f}(4πτ)^{−(n+1)/2} dv over the window.
pub fn cone_mass(cone: &ConeGeometry, f: &ConeField, tau: f64) -> Result<f64> {
    f.matches(cone)?;
    let n = cone.dim() as f64;
    let lm = log_link_mass(cone, f)?;
    let vals: Vec<f64> = cone
        .radial
        .nodes()
        .iter()
        .zip(&lm)
        .map(|(r, l)| exp(l + n * ln(*r) - (n + 1.0) / 2.0 * ln(4.0 * PI * tau)))
        .collect();
    Ok(cone.radial.quad(&vals))
}

/// The constant shift making ∫ e^{−f}(4πτ)^{−(n+1)/2} dv = 1 on the window.
pub fn normalize_potential(cone: &ConeGeometry, f: &ConeField, tau: f64) -> Result<ConeField> {
    let m = cone_mass(cone, f, tau)?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::MassUnderflow { radius: cone.radial.first() });
    }
    Ok(f.shifted(ln(m)))
}

fn check_normalized(cone: &ConeGeometry, f: &ConeField, tau: f64) -> Result<()> {
    let mass = cone_mass(cone, f, tau)?;
    if abs(mass - 1.0) > 1e-6 {
        return Err(Error::NotNormalized { mass });
    }
    Ok(())
}

/// W^{C(N)}(f, τ) = ∫∫[τ((∂_r f)² + (|∇^N f|² + R^N − n(n−1))/r²) + f − (n+1)]
/// e^{−f}(4πτ)^{−(n+1)/2} rⁿ dv dr over the truncated window.
pub fn w_cone_basic(cone: &ConeGeometry, f: &ConeField, tau: f64) -> Result<f64> {
    f.matches(cone)?;
    check_normalized(cone, f, tau)?;
    let d = cone.link_discretization()?;
    let w = cone.link_weights()?;
    let n = cone.dim() as f64;
    let fr = f.radial_derivative(&cone.radial);
    let gx = f.link_gradient_sq(d);
    let norm = -(n + 1.0) / 2.0 * ln(4.0 * PI * tau);
    let mut radial_vals = Vec::with_capacity(f.radial_len);
    for (i, &r) in cone.radial.nodes().iter().enumerate() {
        let mut s = 0.0;
        for j in 0..f.link_len {
            let k = i * f.link_len + j;
            let v = f.values[k];
            let weight = exp(norm - v);
            if weight == 0.0 {
                continue;
            }
            let integrand = tau * (fr[k] * fr[k] + (gx[k] + d.curvature[j] - n * (n - 1.0)) / (r * r)) + v
                - (n + 1.0);
            s += w[j] * integrand * weight;
        }
        radial_vals.push(s * powf(r, n));
    }
    Ok(cone.radial.quad(&radial_vals))
}

/// f = f̃ + a_r with ∫_N (4πτr^{−2})^{−n/2}e^{−f̃}dv = 1 at every radius and
/// ∫(4πτ)^{−1/2}e^{−a_r}dr = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedPotential {
    pub f_tilde: ConeField,
    pub a_r: ScalarField,
    pub tau: f64,
}

impl SeparatedPotential {
    /// f̃ + a_r.
    pub fn reassemble(&self) -> ConeField {
        let a = self.a_r.values();
        let l = self.f_tilde.link_len;
        let values = self.f_tilde.values.iter().enumerate().map(|(k, v)| v + a[k / l]).collect();
        ConeField { values, ..self.f_tilde.clone() }
    }

    /// ∫_N (4πτr^{−2})^{−n/2}e^{−f̃}dv at each radius.
    pub fn link_masses(&self, cone: &ConeGeometry) -> Result<Vec<f64>> {
        let w = cone.link_weights()?;
        let n = cone.dim() as f64;
        Ok(cone
            .radial
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let c = -n / 2.0 * ln(4.0 * PI * self.tau / (r * r));
                self.f_tilde.row(i).iter().zip(&w).map(|(v, wj)| wj * exp(c - v)).sum()
            })
            .collect())
    }

    /// ∫(4πτ)^{−1/2}e^{−a_r}dr over the window.
    pub fn radial_mass(&self, cone: &ConeGeometry) -> f64 {
        let c = -0.5 * ln(4.0 * PI * self.tau);
        let vals: Vec<f64> = self.a_r.values().iter().map(|a| exp(c - a)).collect();
        cone.radial.quad(&vals)
    }

    /// ∫_N (4πτr^{−2})^{−n/2}e^{−f̃}∂_r f̃ dv at each radius (≡ n/r).
    pub fn radial_identity(&self, cone: &ConeGeometry) -> Result<Vec<f64>> {
        let w = cone.link_weights()?;
        let n = cone.dim() as f64;
        let dr = self.f_tilde.radial_derivative(&cone.radial);
        let l = self.f_tilde.link_len;
        Ok(cone
            .radial
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let c = -n / 2.0 * ln(4.0 * PI * self.tau / (r * r));
                (0..l).map(|j| w[j] * exp(c - self.f_tilde.get(i, j)) * dr[i * l + j]).sum()
            })
            .collect())
    }
}

pub fn separate_variables(cone: &ConeGeometry, f: &ConeField, tau: f64) -> Result<SeparatedPotential> {
    f.matches(cone)?;
    let n = cone.dim() as f64;
    let lm = log_link_mass(cone, f)?;
    // (4πτ)^{−1/2}e^{−a_r} = ∫_N rⁿe^{−f}(4πτ)^{−(n+1)/2}dv.
    let a: Vec<f64> = cone
        .radial
        .nodes()
        .iter()
        .zip(&lm)
        .map(|(r, l)| -(l + n * ln(*r)) + n / 2.0 * ln(4.0 * PI * tau))
        .collect();
    let l = f.link_len;
    let f_tilde: Vec<f64> = f.values.iter().enumerate().map(|(k, v)| v - a[k / l]).collect();
    let bk = (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero);
    Ok(SeparatedPotential {
        f_tilde: ConeField { values: f_tilde, ..f.clone() },
        a_r: ScalarField::new(cone.radial.clone(), a, bk)?,
        tau,
    })
}

/// The two terms of the separated expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatedTerms {
    /// ∫[W^N(f̃, τ/r²) − n(n−1)τ/r²] dμ_a.
    pub link_term: f64,
    /// ∫∫[τ(∂_r f)² + a_r − 1] dμ_a dν_r.
    pub radial_term: f64,
}

impl SeparatedTerms {
    pub fn total(&self) -> f64 {
        self.link_term + self.radial_term
    }
}

pub fn separated_terms(cone: &ConeGeometry, sep: &SeparatedPotential) -> Result<SeparatedTerms> {
    sep.f_tilde.matches(cone)?;
    let d = cone.link_discretization()?;
    let w = cone.link_weights()?;
    let n = cone.dim() as f64;
    let tau = sep.tau;
    let f = sep.reassemble();
    let fr = f.radial_derivative(&cone.radial);
    let gx = sep.f_tilde.link_gradient_sq(d);
    let a = sep.a_r.values();
    let l = f.link_len;
    let mut link_vals = Vec::with_capacity(f.radial_len);
    let mut radial_vals = Vec::with_capacity(f.radial_len);
    for (i, &r) in cone.radial.nodes().iter().enumerate() {
        let da = exp(-0.5 * ln(4.0 * PI * tau) - a[i]);
        let ts = tau / (r * r);
        let c = -n / 2.0 * ln(4.0 * PI * ts);
        let (mut wn, mut rad) = (0.0, 0.0);
        for j in 0..l {
            let k = i * l + j;
            let ft = sep.f_tilde.values[k];
            let nu = exp(c - ft);
            if nu == 0.0 {
                continue;
            }
            wn += w[j] * (ts * (gx[k] + d.curvature[j]) + ft - n) * nu;
            rad += w[j] * (tau * fr[k] * fr[k] + a[i] - 1.0) * nu;
        }
        link_vals.push((wn - n * (n - 1.0) * ts) * da);
        radial_vals.push(rad * da);
    }
    Ok(SeparatedTerms { link_term: cone.radial.quad(&link_vals), radial_term: cone.radial.quad(&radial_vals) })
}

/// Separated evaluation of W^{C(N)}.
pub fn w_from_separated(cone: &ConeGeometry, sep: &SeparatedPotential) -> Result<f64> {
    Ok(separated_terms(cone, sep)?.total())
}

/// ∫[τ(∂_r(a_r + n log r))² + a_r − 1] dμ_a: the radial term after Jensen's
/// inequality removes f̃ (never larger than the original radial term).
pub fn reduced_radial_term(cone: &ConeGeometry, sep: &SeparatedPotential) -> Result<f64> {
    let n = cone.dim() as f64;
    let tau = sep.tau;
    let a = sep.a_r.values();
    let b: Vec<f64> = a.iter().zip(cone.radial.nodes()).map(|(v, r)| v + n * ln(*r)).collect();
    let db = cone.radial.derivative(&b);
    let vals: Vec<f64> = (0..a.len())
        .map(|i| (tau * db[i] * db[i] + a[i] - 1.0) * exp(-0.5 * ln(4.0 * PI * tau) - a[i]))
        .collect();
    Ok(cone.radial.quad(&vals))
}

// ---------------------------------------------------------------------------
// Divergence probe.

/// v = (b/r^a)·ũ·χ on [ε, 2r₀], with ũ the unit-mass ground state of −4Δ + R
/// on the link and χ a C¹ cubic ramp from 1 to 0 on [r₀, 2r₀].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFamily {
    pub a: f64,
    pub r0: f64,
    pub dim: usize,
    pub lambda: f64,
    /// ∫ũ² log ũ² dv^N.
    pub ground_entropy: f64,
}

impl ProbeFamily {
    pub fn new(link: &LinkGeometry, a: f64, r0: f64) -> Result<Self> {
        let n = link.dim() as f64;
        if !((n - 1.0) / 2.0 <= a && a < (n + 1.0) / 2.0) {
            return Err(Error::ProbeOutOfWindow { a });
        }
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput("probe needs r0 > 0"));
        }
        let (lambda, ground_entropy) = match link {
            LinkGeometry::RoundSphere { .. } | LinkGeometry::Einstein { .. } => {
                (lambda_link(link)?, -ln(link.volume()))
            }
            LinkGeometry::ProfileWarped(_) => {
                let (l, u, d) = ground_state(link)?;
                let vals: Vec<f64> = u.values().iter().zip(&d.measure).map(|(v, m)| xlogx2(*v) * m).collect();
                (l, d.grid.quad(&vals))
            }
        };
        Ok(Self { a, r0, dim: link.dim(), lambda, ground_entropy })
    }

    /// Default exponent: the middle of [(n−1)/2, √(−K)/2) when that window is
    /// open (the divergent regime), else (n−1)/2 + 0.05.
    pub fn default_exponent(link_dim: usize, lambda: f64) -> f64 {
        let n = link_dim as f64;
        let k = lambda - n * (n - 1.0);
        let lo = (n - 1.0) / 2.0;
        let hi = if k < 0.0 { sqrt(-k) / 2.0 } else { 0.0 };
        if hi > lo {
            0.5 * (lo + hi.min((n + 1.0) / 2.0))
        } else {
            lo + 0.05
        }
    }

    /// K = λ^N − n(n−1).
    pub fn k(&self) -> f64 {
        let n = self.dim as f64;
        self.lambda - n * (n - 1.0)
    }

    /// Strict form of a < √(−K)/2, with a round-off margin so that the
    /// equality case a = √(−K)/2 is never counted as divergent.
    pub fn drives_to_minus_infinity(&self) -> bool {
        let k = self.k();
        k < 0.0 && self.a < sqrt(-k) / 2.0 - 1e-12
    }

    /// Exponent of the divergent term: W(ε) ≈ W₀ + C·ε^{n−2a−1}.
    pub fn predicted_exponent(&self) -> f64 {
        self.dim as f64 - 2.0 * self.a - 1.0
    }
}

/// (ε^p − 1)/p, continued by log ε at p = 0.
fn power_basis(x: f64, p: f64) -> f64 {
    if abs(p) < 1e-12 {
        ln(x)
    } else {
        (exp(p * ln(x)) - 1.0) / p
    }
}

/// ∫_ε^{R} r^s dr.
fn power_integral(eps: f64, big: f64, s: f64) -> f64 {
    if abs(s + 1.0) < 1e-14 {
        ln(big / eps)
    } else {
        (powf(big, s + 1.0) - powf(eps, s + 1.0)) / (s + 1.0)
    }
}

/// ∫_ε^{R} r^s log r dr.
fn power_log_integral(eps: f64, big: f64, s: f64) -> f64 {
    if abs(s + 1.0) < 1e-14 {
        return 0.5 * (ln(big) * ln(big) - ln(eps) * ln(eps));
    }
    let q = s + 1.0;
    let prim = |r: f64| powf(r, q) * (ln(r) / q - 1.0 / (q * q));
    prim(big) - prim(eps)
}

/// b-free pieces of the probe: ∫s²rⁿ, ∫s'²rⁿ, ∫s²r^{n−2}, ∫s² log s² rⁿ with
/// s = r^{−a}χ over [ε, 2r₀]; closed form on [ε, r₀], Simpson on the ramp.
fn probe_integrals(p: &ProbeFamily, eps: f64) -> [f64; 4] {
    let n = p.dim as f64;
    let a = p.a;
    let r0 = p.r0;
    let q = n - 2.0 * a;
    let mut out = [
        power_integral(eps, r0, q),
        a * a * power_integral(eps, r0, q - 2.0),
        power_integral(eps, r0, q - 2.0),
        -2.0 * a * power_log_integral(eps, r0, q),
    ];
    let m = 4000;
    let h = r0 / m as f64;
    for k in 0..=m {
        let t = k as f64 / m as f64;
        let r = r0 * (1.0 + t);
        let chi = 1.0 - 3.0 * t * t + 2.0 * t * t * t;
        let dchi = (-6.0 * t + 6.0 * t * t) / r0;
        let s = powf(r, -a) * chi;
        let ds = powf(r, -a) * (dchi - a * chi / r);
        let wt = h / 3.0 * if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let rn = powf(r, n);
        out[0] += wt * s * s * rn;
        out[1] += wt * ds * ds * rn;
        out[2] += wt * s * s * rn / (r * r);
        out[3] += wt * xlogx2(s) * rn;
    }
    out
}

/// W at scale τ of the probe truncated to [ε, 2r₀], normalized to unit mass.
pub fn probe_w(p: &ProbeFamily, tau: f64, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < p.r0) {
        return Err(Error::InvalidInput("inner cutoff must lie in (0, r0)"));
    }
    let n = p.dim as f64;
    let [s0, s1, s2, s3] = probe_integrals(p, eps);
    let b2 = 1.0 / s0;
    let w = tau * b2 * (4.0 * s1 + p.k() * s2) - ln(b2) - b2 * s3 - p.ground_entropy
        - (n + 1.0) / 2.0 * ln(4.0 * PI * tau)
        - (n + 1.0);
    Ok((w, sqrt(b2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub b_norms: Vec<f64>,
    /// Values strictly decrease as ε decreases.
    pub strictly_decreasing: bool,
    /// p in the least-squares fit W ≈ W₀ + C(ε^p − 1)/p (None with < 3 points).
    pub fitted_exponent: Option<f64>,
    pub fitted_coefficient: Option<f64>,
    pub predicted_exponent: f64,
    pub divergent: bool,
}

/// W along a decreasing sequence of inner cutoffs.
pub fn divergence_probe(cone: &ConeGeometry, probe: &ProbeFamily, tau: f64, eps: &[f64]) -> Result<ProbeTrace> {
    if probe.dim != cone.dim() {
        return Err(Error::InvalidInput("probe and cone dimensions differ"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("cutoffs must be strictly decreasing"));
    }
    let mut values = Vec::with_capacity(eps.len());
    let mut b_norms = Vec::with_capacity(eps.len());
    for &e in eps {
        let (w, b) = probe_w(probe, tau, e)?;
        values.push(w);
        b_norms.push(b);
    }
    let strictly_decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let fit = if eps.len() >= 3 { Some(fit_power_law(eps, &values)) } else { None };
    Ok(ProbeTrace {
        eps: eps.to_vec(),
        values,
        b_norms,
        strictly_decreasing,
        fitted_exponent: fit.map(|f| f.0),
        fitted_coefficient: fit.map(|f| f.1),
        predicted_exponent: probe.predicted_exponent(),
        divergent: probe.drives_to_minus_infinity(),
    })
}

/// Least squares W ≈ W₀ + C·(ε^p − 1)/p, golden section over p ∈ [−4, 4].
fn fit_power_law(eps: &[f64], w: &[f64]) -> (f64, f64) {
    let residual = |p: f64| -> (f64, f64) {
        let x: Vec<f64> = eps.iter().map(|e| power_basis(*e, p)).collect();
        let m = x.len() as f64;
        let (mx, mw) = (x.iter().sum::<f64>() / m, w.iter().sum::<f64>() / m);
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let sxw: f64 = x.iter().zip(w).map(|(a, b)| (a - mx) * (b - mw)).sum();
        let c = if sxx > 0.0 { sxw / sxx } else { 0.0 };
        let r: f64 = x.iter().zip(w).map(|(a, b)| { let e = b - mw - c * (a - mx); e * e }).sum();
        (r, c)
    };
    // Coarse scan to pick the basin, then golden section.
    let mut best = (-4.0, f64::INFINITY);
    for k in 0..=160 {
        let p = -4.0 + 0.05 * k as f64;
        let r = residual(p).0;
        if r < best.1 {
            best = (p, r);
        }
    }
    let g = (sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (best.0 - 0.05, best.0 + 0.05);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if residual(c).0 < residual(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let p = 0.5 * (a + b);
    (p, residual(p).1)
}

// ---------------------------------------------------------------------------
// Classification.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuVerdict {
    MuInfinite,
    MuFinite,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaCone {
    Zero,
    MinusInfinity,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeClassification {
    pub verdict: MuVerdict,
    pub lambda_cone: LambdaCone,
    pub lambda_link: f64,
    pub threshold: f64,
    /// Whether λ^N came from a closed form (exact comparison) or the eigensolver.
    pub exact: bool,
}

impl MuVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            MuVerdict::MuInfinite => "mu_infinite",
            MuVerdict::MuFinite => "mu_finite",
            MuVerdict::Undetermined => "undetermined",
        }
    }
}

impl LambdaCone {
    pub fn as_str(&self) -> &'static str {
        match self {
            LambdaCone::Zero => "0",
            LambdaCone::MinusInfinity => "-inf",
            LambdaCone::Undetermined => "undetermined",
        }
    }
}

/// μ^{C(N)} = −∞ iff λ^N ≤ n − 1; λ^{C(N)} = −∞ iff λ^N < n − 1, else 0.
pub fn cone_finiteness_classify(link: &LinkGeometry) -> Result<ConeClassification> {
    let n = link.dim() as f64;
    let threshold = n - 1.0;
    let (lambda, exact) = match link.exact_lambda() {
        Some(l) => (l, true),
        None => (lambda_link(link)?, false),
    };
    let band = if exact { EXACT_BAND * threshold.max(1.0) } else { CLASSIFY_BAND };
    let (verdict, lambda_cone) = if lambda < threshold - band {
        (MuVerdict::MuInfinite, LambdaCone::MinusInfinity)
    } else if lambda > threshold + band {
        (MuVerdict::MuFinite, LambdaCone::Zero)
    } else if exact {
        (MuVerdict::MuInfinite, LambdaCone::Zero)
    } else {
        (MuVerdict::Undetermined, LambdaCone::Undetermined)
    };
    Ok(ConeClassification { verdict, lambda_cone, lambda_link: lambda, threshold, exact })
}

// ---------------------------------------------------------------------------
// Lower and upper bounds on ν^{C(N)}.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeBoundParams {
    /// K = λ^N − n(n−1).
    pub k: f64,
    /// Smallest τ admissible for the Hardy step, τ₀/(1 − (−K)/(n−1)²).
    pub tau: f64,
    /// Largest grid τ ≤ 1/(2n(n−1)) below which μ^N ≥ −1/2 on the grid.
    pub tau0: f64,
    /// Far-field radius factor C = 1/√τ₀.
    pub c_const: f64,
    pub a_const: f64,
    pub d_const: f64,
}

/// μ^N on the default τ grid and the fitted envelope.
pub fn fit_envelope(link: &LinkGeometry) -> Result<(MuEnvelope, Vec<(f64, f64)>)> {
    let lambda = lambda_link(link)?;
    let dim = link.dim();
    let samples: Vec<(f64, f64)> = default_tau_grid()
        .into_iter()
        .map(|t| Ok((t, mu_link(link, FunctionalQuery::new(t, dim)?)?)))
        .collect::<Result<_>>()?;
    Ok((MuEnvelope::fit(&samples, lambda, dim), samples))
}

fn far_field_tau0(link: &LinkGeometry) -> Result<f64> {
    let n = link.dim() as f64;
    let cap = 1.0 / (2.0 * n * (n - 1.0));
    let mut tau0 = 0.0;
    for t in default_tau_grid().into_iter().filter(|t| *t <= cap).chain(core::iter::once(cap)) {
        if mu_link(link, FunctionalQuery::new(t, link.dim())?)? >= -0.5 {
            tau0 = t;
        } else {
            break;
        }
    }
    if tau0 == 0.0 {
        return Err(Error::InsufficientSampling { states: 0 });
    }
    Ok(tau0)
}

/// ν^{C(N)} ≥ −D with D = 1 + A − (n+1)/2·log(1 − (−K)₊/(n−1)²) − log vol(Sⁿ).
pub fn cone_nu_lower_bound(link: &LinkGeometry, envelope: &MuEnvelope) -> Result<(f64, ConeBoundParams)> {
    let n = link.dim() as f64;
    let lambda = envelope.lambda;
    if !(lambda > n - 1.0) {
        return Err(Error::DichotomyInfinite { lambda, threshold: n - 1.0 });
    }
    let k = lambda - n * (n - 1.0);
    let kappa = (-k).max(0.0) / ((n - 1.0) * (n - 1.0));
    let tau0 = far_field_tau0(link)?;
    let log_term = (n + 1.0) / 2.0 * ln(1.0 - kappa);
    let d = 1.0 + envelope.offset_a - log_term - ln(sphere_volume(link.dim()));
    let params = ConeBoundParams {
        k,
        tau: tau0 / (1.0 - kappa),
        tau0,
        c_const: 1.0 / sqrt(tau0),
        a_const: envelope.offset_a,
        d_const: d,
    };
    Ok((-d, params))
}

#[derive(Debug, Clone)]
pub struct RadialNuBound {
    pub value: f64,
    pub status: MinimizeStatus,
    /// Radial profile ρ(r) with ∫ρ²rⁿvol(N)dr = 1 on the window.
    pub minimizer: ScalarField,
}

/// Upper bound on ν^{C(N)} from link-constant fields u = ρ(r): W reduces to
/// ∫[τ(4ρ'² + K̄ρ²/r²) − ρ² log ρ²]vol·rⁿdr − (n+1)/2·log 4πτ − (n+1) with
/// K̄ = R_av − n(n−1).
pub fn cone_nu_upper_bound(cone: &ConeGeometry, tau: f64) -> Result<RadialNuBound> {
    let n = cone.dim() as f64;
    let link = cone.link();
    let vol = link.volume();
    let r_av = match link {
        LinkGeometry::Einstein { lambda, .. } => *lambda,
        _ => {
            let d = cone.link_discretization()?;
            let m: Vec<f64> = d.measure.iter().zip(&d.curvature).map(|(a, b)| a * b).collect();
            d.grid.quad(&m) / d.grid.quad(&d.measure)
        }
    };
    let k = r_av - n * (n - 1.0);
    let g = cone.radial.clone();
    let measure: Vec<f64> = g.nodes().iter().map(|r| vol * powf(*r, n)).collect();
    let stiffness: Vec<f64> = measure.iter().map(|m| 4.0 * m).collect();
    let potential: Vec<f64> = g.nodes().iter().map(|r| k / (r * r)).collect();
    let bk = (BoundaryKind::NeumannZero, BoundaryKind::DirichletZero);
    let problem = SturmLiouvilleProblem::new(g.clone(), measure, stiffness, potential, bk)?;
    let objective = NormalizedFunctional {
        problem,
        quad_scale: tau,
        entropy: 1.0,
        constant: -(n + 1.0) / 2.0 * ln(4.0 * PI * tau) - (n + 1.0),
    };
    let cfg = MinimizeConfig::with_tolerance(1e-10);
    let mut best: Option<RadialNuBound> = None;
    for s in [0.7, 1.0, 1.6] {
        let len = g.len();
        let mut vals: Vec<f64> = g.nodes().iter().map(|r| exp(-r * r / (8.0 * tau * s * s))).collect();
        vals[len - 1] = 0.0;
        let init = ScalarField::new(g.clone(), vals, bk)?;
        let out = minimize_normalized(&objective, &init, &cfg)?;
        if best.as_ref().map_or(true, |b| out.value < b.value) {
            best = Some(RadialNuBound { value: out.value, status: out.status, minimizer: out.minimizer });
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaVerdict {
    Finite,
    Infinite,
    Undetermined,
}

/// λ^M for a closed manifold with conical singularities modelled on C(N_i):
/// −∞ if some λ^{N_i} < dim N_i − 1, finite if all exceed it, undetermined
/// at equality. The threshold is taken from each link's own dimension
/// (ambient dimension = link dimension + 1).
pub fn conical_singularity_lambda_classify(links: &[LinkGeometry]) -> Result<LambdaVerdict> {
    if links.is_empty() {
        return Err(Error::NoSingularities);
    }
    let mut undetermined = false;
    for link in links {
        let c = cone_finiteness_classify(link)?;
        let band = if c.exact { EXACT_BAND * c.threshold.max(1.0) } else { CLASSIFY_BAND };
        if c.lambda_link < c.threshold - band {
            return Ok(LambdaVerdict::Infinite);
        }
        if c.lambda_link <= c.threshold + band {
            undetermined = true;
        }
    }
    Ok(if undetermined { LambdaVerdict::Undetermined } else { LambdaVerdict::Finite })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcNuBound {
    MinusInfinity,
    UpperBound(f64),
}

/// ν^M ≤ ν^{C(N)} for M asymptotic to C(N).
pub fn asymptotically_conical_nu_bound(link: &LinkGeometry) -> Result<AcNuBound> {
    let c = cone_finiteness_classify(link)?;
    match c.verdict {
        MuVerdict::MuFinite => {
            let cone = ConeGeometry::for_tau(link.clone(), 1.0)?;
            Ok(AcNuBound::UpperBound(cone_nu_upper_bound(&cone, 1.0)?.value))
        }
        _ if c.lambda_link <= c.threshold + CLASSIFY_BAND => Ok(AcNuBound::MinusInfinity),
        _ => Err(Error::InvalidInput("classification undetermined")),
    }
}
