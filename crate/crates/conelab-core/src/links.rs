//! Closed links N in rotationally symmetric form, and the functionals F,
//! Nash entropy, W, λ, μ, ν evaluated on them.
//!
//! A link is discretized on its polar coordinate x ∈ [0, L] with
//! g = φ(x)²dx² + ψ(x)²g_{Sⁿ⁻¹}; functionals are minimized over functions
//! of x only (the invariant class). Every μ produced here is an upper bound
//! on the true infimum; for round links at τ ≥ T_N it is exact.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, log_plus, powi, sin, sphere_volume, sqrt, PI};
use crate::numcore::stencil::{self, End};
use crate::numcore::{
    eigen_smallest, minimize_normalized, BoundaryKind, MinimizeConfig, MinimizeStatus,
    NormalizedFunctional, RadialGrid, ScalarField, Spacing, SturmLiouvilleProblem, DEFAULT_NODES,
};

const POLES: (BoundaryKind, BoundaryKind) = (BoundaryKind::PoleRegular, BoundaryKind::PoleRegular);

/// g = φ(x)²dx² + ψ(x)²g_{Sⁿ⁻¹} on a uniform grid over [0, L_x], closing
/// smoothly at both poles. Arclength profiles have φ ≡ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedProfile {
    dim: usize,
    grid: Arc<RadialGrid>,
    psi: Vec<f64>,
    phi: Vec<f64>,
}

impl WarpedProfile {
    /// Profile ψ sampled uniformly in arclength over [0, length].
    pub fn arclength(dim: usize, psi: Vec<f64>, length: f64) -> Result<Self> {
        let grid = Arc::new(RadialGrid::uniform(0.0, length, psi.len())?);
        let phi = alloc::vec![1.0; psi.len()];
        Self::new(dim, grid, psi, phi)
    }

    pub fn new(dim: usize, grid: Arc<RadialGrid>, mut psi: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput("link dimension must be at least 2"));
        }
        if grid.spacing() != Spacing::Uniform || psi.len() != grid.len() || phi.len() != grid.len() {
            return Err(Error::InvalidInput("profile needs a uniform grid matching its samples"));
        }
        let n = psi.len();
        let scale = psi.iter().fold(0.0f64, |a, b| a.max(abs(*b)));
        if abs(psi[0]) > 1e-9 * scale || abs(psi[n - 1]) > 1e-9 * scale {
            return Err(Error::InvalidInput("profile must vanish at both poles"));
        }
        psi[0] = 0.0;
        psi[n - 1] = 0.0;
        if let Some(i) = (1..n - 1).find(|&i| !(psi[i] > 0.0)) {
            return Err(Error::DegenerateProfile { index: i });
        }
        if phi.iter().any(|v| !(*v > 0.0 && v.is_finite())) || psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("metric coefficients must be finite, phi positive"));
        }
        let p = Self { dim, grid, psi, phi };
        let (ps, _) = p.psi_derivatives_one_sided();
        if abs(abs(ps[0]) - 1.0) > 1e-2 || abs(abs(ps[n - 1]) - 1.0) > 1e-2 {
            return Err(Error::InvalidInput("profile does not close smoothly (|psi'| != 1 at a pole)"));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Total arclength between the poles.
    pub fn length(&self) -> f64 {
        self.grid.quad(&self.phi)
    }

    fn psi_derivatives_one_sided(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.step();
        let dx = stencil::d1(&self.psi, h, End::OneSided, End::OneSided);
        let ps: Vec<f64> = dx.iter().zip(&self.phi).map(|(d, f)| d / f).collect();
        (ps, Vec::new())
    }

    /// (ψ_s, ψ_ss) with s the arclength, using the parity of ψ (odd) and
    /// φ (even) at the poles.
    pub fn psi_derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.step();
        let dx = stencil::d1(&self.psi, h, End::Odd, End::Odd);
        let ps: Vec<f64> = dx.iter().zip(&self.phi).map(|(d, f)| d / f).collect();
        let dps = stencil::d1(&ps, h, End::Even, End::Even);
        let pss: Vec<f64> = dps.iter().zip(&self.phi).map(|(d, f)| d / f).collect();
        (ps, pss)
    }

    /// R = (n−1)[(n−2)(1−ψ_s²) − 2ψψ_ss]/ψ²; pole values by even extrapolation.
    pub fn scalar_curvature(&self) -> Vec<f64> {
        let n = self.dim as f64;
        let (ps, pss) = self.psi_derivatives();
        let len = self.psi.len();
        let mut r = alloc::vec![0.0; len];
        for i in 1..len - 1 {
            let p = self.psi[i];
            r[i] = (n - 1.0) * ((n - 2.0) * (1.0 - ps[i] * ps[i]) - 2.0 * p * pss[i]) / (p * p);
        }
        r[0] = (4.0 * r[1] - r[2]) / 3.0;
        r[len - 1] = (4.0 * r[len - 2] - r[len - 3]) / 3.0;
        r
    }

    pub fn volume(&self) -> f64 {
        let w = sphere_volume(self.dim - 1);
        let m: Vec<f64> =
            self.psi.iter().zip(&self.phi).map(|(p, f)| w * powi(*p, self.dim as i32 - 1) * f).collect();
        self.grid.quad(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkGeometry {
    RoundSphere { dim: usize, beta: f64 },
    ProfileWarped(WarpedProfile),
    Einstein { dim: usize, lambda: f64, volume: f64, shrinking_time: f64 },
}

impl LinkGeometry {
    pub fn round_sphere(dim: usize, beta: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput("link dimension must be at least 2"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput("beta must be positive"));
        }
        Ok(LinkGeometry::RoundSphere { dim, beta })
    }

    /// Homogeneous Einstein data; `Ric = g/(2T_N)` forces T_N = n/(2λ).
    pub fn einstein(dim: usize, lambda: f64, volume: f64, shrinking_time: f64) -> Result<Self> {
        if dim < 2 || !(lambda > 0.0) || !(volume > 0.0) {
            return Err(Error::InvalidInput("einstein link needs dim >= 2, lambda > 0, volume > 0"));
        }
        let t = dim as f64 / (2.0 * lambda);
        if abs(shrinking_time - t) > 1e-9 * t {
            return Err(Error::InvalidInput("shrinking time must equal n/(2 lambda)"));
        }
        Ok(LinkGeometry::Einstein { dim, lambda, volume, shrinking_time })
    }

    /// Round unit sphere as Einstein data.
    pub fn einstein_sphere(dim: usize) -> Self {
        let lambda = (dim * (dim - 1)) as f64;
        LinkGeometry::Einstein {
            dim,
            lambda,
            volume: sphere_volume(dim),
            shrinking_time: dim as f64 / (2.0 * lambda),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinkGeometry::RoundSphere { dim, .. } | LinkGeometry::Einstein { dim, .. } => *dim,
            LinkGeometry::ProfileWarped(p) => p.dim,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            LinkGeometry::RoundSphere { dim, beta } => powi(*beta, *dim as i32) * sphere_volume(*dim),
            LinkGeometry::ProfileWarped(p) => p.volume(),
            LinkGeometry::Einstein { volume, .. } => *volume,
        }
    }

    /// Closed-form λ when the scalar curvature is constant.
    pub fn exact_lambda(&self) -> Option<f64> {
        match self {
            LinkGeometry::RoundSphere { dim, beta } => Some((dim * (dim - 1)) as f64 / (beta * beta)),
            LinkGeometry::Einstein { lambda, .. } => Some(*lambda),
            LinkGeometry::ProfileWarped(_) => None,
        }
    }

    /// The same link with metric multiplied by c² (round and profile links).
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        match self {
            LinkGeometry::RoundSphere { dim, beta } => Self::round_sphere(*dim, beta * c),
            LinkGeometry::ProfileWarped(p) => {
                let g = Arc::new(RadialGrid::uniform(0.0, p.grid.last() * c, p.grid.len())?);
                let psi = p.psi.iter().map(|v| v * c).collect();
                Ok(LinkGeometry::ProfileWarped(WarpedProfile::new(p.dim, g, psi, p.phi.clone())?))
            }
            LinkGeometry::Einstein { dim, lambda, volume, shrinking_time } => Self::einstein(
                *dim,
                lambda / (c * c),
                volume * powi(c, *dim as i32),
                shrinking_time * c * c,
            ),
        }
    }

    /// Discretization with the default node count.
    pub fn discretize(&self) -> Result<LinkDiscretization> {
        self.discretize_with(DEFAULT_NODES)
    }

    /// Round spheres use `nodes` uniform polar-angle nodes; profiles keep their own grid.
    pub fn discretize_with(&self, nodes: usize) -> Result<LinkDiscretization> {
        match self {
            LinkGeometry::RoundSphere { dim, beta } => {
                let grid = Arc::new(RadialGrid::uniform(0.0, PI, nodes)?);
                let n = *dim;
                let w = powi(*beta, n as i32) * sphere_volume(n - 1);
                let measure = grid.nodes().iter().map(|t| w * powi(sin(*t), n as i32 - 1)).collect();
                let mut measure: Vec<f64> = measure;
                measure[0] = 0.0;
                measure[nodes - 1] = 0.0;
                let r = (n * (n - 1)) as f64 / (beta * beta);
                Ok(LinkDiscretization {
                    dim: n,
                    grid,
                    measure,
                    metric_inv: alloc::vec![1.0 / (beta * beta); nodes],
                    curvature: alloc::vec![r; nodes],
                })
            }
            LinkGeometry::ProfileWarped(p) => {
                let w = sphere_volume(p.dim - 1);
                let measure =
                    p.psi.iter().zip(&p.phi).map(|(s, f)| w * powi(*s, p.dim as i32 - 1) * f).collect();
                Ok(LinkDiscretization {
                    dim: p.dim,
                    grid: p.grid.clone(),
                    measure,
                    metric_inv: p.phi.iter().map(|f| 1.0 / (f * f)).collect(),
                    curvature: p.scalar_curvature(),
                })
            }
            LinkGeometry::Einstein { .. } => {
                Err(Error::Unsupported("einstein links carry no coordinates; only constant fields"))
            }
        }
    }
}

/// Coefficients of a link on its polar grid: dv = measure·dx,
/// |∇u|² = metric_inv·u_x², scalar curvature R.
#[derive(Debug, Clone)]
pub struct LinkDiscretization {
    pub dim: usize,
    pub grid: Arc<RadialGrid>,
    pub measure: Vec<f64>,
    pub metric_inv: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl LinkDiscretization {
    fn problem(&self, potential: Vec<f64>) -> Result<SturmLiouvilleProblem> {
        let stiffness = self.measure.iter().zip(&self.metric_inv).map(|(m, g)| 4.0 * m * g).collect();
        SturmLiouvilleProblem::new(self.grid.clone(), self.measure.clone(), stiffness, potential, POLES)
    }

    /// −4Δ + R.
    pub fn schrodinger(&self) -> Result<SturmLiouvilleProblem> {
        self.problem(self.curvature.clone())
    }

    /// W(·, g, τ) in the u-form of the functional.
    pub fn w_objective(&self, tau: f64) -> Result<NormalizedFunctional> {
        let n = self.dim as f64;
        Ok(NormalizedFunctional {
            problem: self.schrodinger()?,
            quad_scale: tau,
            entropy: 1.0,
            constant: -n / 2.0 * ln(4.0 * PI * tau) - n,
        })
    }

    /// F in the u-form, u² = e^{−φ}.
    pub fn f_objective(&self) -> Result<NormalizedFunctional> {
        Ok(NormalizedFunctional { problem: self.schrodinger()?, quad_scale: 1.0, entropy: 0.0, constant: 0.0 })
    }

    /// Nash entropy −∫u² log u² in the u-form (N = ∫φe^{−φ}).
    pub fn nash_objective(&self) -> Result<NormalizedFunctional> {
        Ok(NormalizedFunctional { problem: self.schrodinger()?, quad_scale: 0.0, entropy: 1.0, constant: 0.0 })
    }

    /// Constant field with unit mass in the discrete inner product.
    pub fn unit_constant(&self) -> Result<ScalarField> {
        let f = self.f_objective()?;
        let one = ScalarField::constant(self.grid.clone(), 1.0)?;
        let m = f.mass(&one);
        Ok(one.scaled(1.0 / sqrt(m)))
    }

    /// Discrete ∫u²dv.
    pub fn mass(&self, u: &ScalarField) -> Result<f64> {
        Ok(self.f_objective()?.mass(u))
    }

    /// H¹ distance sqrt(∫|∇(u−v)|² + (u−v)²) in the link metric.
    pub fn h1_distance(&self, u: &ScalarField, v: &ScalarField) -> Result<f64> {
        let diff: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
        let diff = ScalarField::new(self.grid.clone(), diff, POLES)?;
        let p = self.problem(alloc::vec![1.0; self.grid.len()])?;
        let d = p.discretize();
        let vals = &diff.values()[d.lo..d.hi];
        let mut pot = 0.0;
        for i in 0..d.len() {
            pot += d.mass[i] * vals[i] * vals[i];
        }
        Ok(sqrt(d.gradient_energy(vals) / 4.0 + pot))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalQuery {
    pub tau: f64,
    pub dim: usize,
}

impl FunctionalQuery {
    pub fn new(tau: f64, dim: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput("tau must be positive"));
        }
        Ok(Self { tau, dim })
    }
}

/// Envelope μ(τ) ≥ λτ − A − (n/2)log₊τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEnvelope {
    pub lambda: f64,
    pub offset_a: f64,
    pub dim: usize,
}

impl MuEnvelope {
    pub fn value(&self, tau: f64) -> f64 {
        self.lambda * tau - self.offset_a - self.dim as f64 / 2.0 * log_plus(tau)
    }

    /// A = max over samples of (λτ − (n/2)log₊τ − μ(τ)), clamped below at 0.
    pub fn fit(samples: &[(f64, f64)], lambda: f64, dim: usize) -> Self {
        let n = dim as f64;
        let a = samples
            .iter()
            .map(|(t, m)| lambda * t - n / 2.0 * log_plus(*t) - m)
            .fold(0.0f64, f64::max);
        Self { lambda, offset_a: a, dim }
    }
}

pub fn scalar_curvature_link(link: &LinkGeometry) -> Result<ScalarField> {
    match link {
        LinkGeometry::ProfileWarped(p) => {
            ScalarField::new(p.grid.clone(), p.scalar_curvature(), POLES)
        }
        LinkGeometry::RoundSphere { .. } => {
            let d = link.discretize()?;
            ScalarField::new(d.grid, d.curvature, POLES)
        }
        LinkGeometry::Einstein { lambda, .. } => {
            // R = n/(2T_N) = λ for Einstein data.
            let g = Arc::new(RadialGrid::uniform(0.0, 1.0, 16)?);
            ScalarField::constant(g, *lambda)
        }
    }
}

/// Smallest eigenvalue of −4Δ + R on invariant functions.
pub fn lambda_link(link: &LinkGeometry) -> Result<f64> {
    match link {
        LinkGeometry::Einstein { lambda, .. } => Ok(*lambda),
        _ => Ok(eigen_smallest(&link.discretize()?.schrodinger()?)?.0),
    }
}

/// λ with its ground state (not available for Einstein data).
pub fn ground_state(link: &LinkGeometry) -> Result<(f64, ScalarField, LinkDiscretization)> {
    let d = link.discretize()?;
    let (l, u) = eigen_smallest(&d.schrodinger()?)?;
    Ok((l, u, d))
}

fn einstein_w_constant(dim: usize, lambda: f64, volume: f64, tau: f64) -> f64 {
    let n = dim as f64;
    tau * lambda + ln(volume) - n / 2.0 * ln(4.0 * PI * tau) - n
}

/// W(u, g, τ) for a field on the link's default grid. The field is checked
/// against ∫u²dv = 1 (tolerance 1e-6) and then renormalized exactly.
pub fn w_functional_link(link: &LinkGeometry, u: &ScalarField, q: FunctionalQuery) -> Result<f64> {
    if let LinkGeometry::Einstein { dim, lambda, volume, .. } = link {
        let v = u.values();
        if v.iter().any(|x| abs(x - v[0]) > 1e-12 * abs(v[0]).max(1.0)) {
            return Err(Error::Unsupported("einstein links only accept constant fields"));
        }
        let mass = v[0] * v[0] * volume;
        if abs(mass - 1.0) > 1e-6 {
            return Err(Error::NotNormalized { mass });
        }
        return Ok(einstein_w_constant(*dim, *lambda, *volume, q.tau));
    }
    let d = match link {
        LinkGeometry::RoundSphere { .. } => link.discretize_with(u.grid().len())?,
        _ => link.discretize()?,
    };
    w_on_discretization(&d, u, q.tau)
}

pub fn w_on_discretization(d: &LinkDiscretization, u: &ScalarField, tau: f64) -> Result<f64> {
    let obj = d.w_objective(tau)?;
    if u.grid().nodes() != d.grid.nodes() {
        return Err(Error::GridMismatch);
    }
    let mass = obj.mass(u);
    if abs(mass - 1.0) > 1e-6 {
        return Err(Error::NotNormalized { mass });
    }
    obj.evaluate(u)
}

/// Detailed μ estimate.
#[derive(Debug, Clone)]
pub struct MuEstimate {
    pub value: f64,
    pub minimizer: Option<ScalarField>,
    pub status: MinimizeStatus,
    /// False only when the value is the exact closed form.
    pub upper_bound: bool,
}

/// Starting fields for the μ search: the constant plus Gaussians centred at
/// each pole on scales √τ and 2√τ (the constant is a critical point that is
/// not the minimizer below T_N).
fn mu_inits(d: &LinkDiscretization, tau: f64) -> Result<Vec<ScalarField>> {
    let mut inits = alloc::vec![ScalarField::constant(d.grid.clone(), 1.0)?];
    // Arclength from the north pole.
    let phi: Vec<f64> = d.metric_inv.iter().map(|g| 1.0 / sqrt(*g)).collect();
    let h = d.grid.step();
    let mut s = alloc::vec![0.0; phi.len()];
    for i in 1..phi.len() {
        s[i] = s[i - 1] + 0.5 * h * (phi[i] + phi[i - 1]);
    }
    let total = s[s.len() - 1];
    for scale in [1.0, 2.0] {
        let w = 8.0 * tau * scale * scale;
        for north in [true, false] {
            let vals: Vec<f64> = s
                .iter()
                .map(|&x| {
                    let y = if north { x } else { total - x };
                    exp(-y * y / w).max(1e-150)
                })
                .collect();
            inits.push(ScalarField::new(d.grid.clone(), vals, POLES)?);
        }
    }
    Ok(inits)
}

pub fn mu_on_discretization(d: &LinkDiscretization, tau: f64) -> Result<MuEstimate> {
    let obj = d.w_objective(tau)?;
    let cfg = MinimizeConfig::with_tolerance(1e-10);
    let mut best: Option<MuEstimate> = None;
    for init in mu_inits(d, tau)? {
        let out = minimize_normalized(&obj, &init, &cfg)?;
        if best.as_ref().map_or(true, |b| out.value < b.value) {
            best = Some(MuEstimate {
                value: out.value,
                minimizer: Some(out.minimizer),
                status: out.status,
                upper_bound: true,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

pub fn mu_link_detailed(link: &LinkGeometry, q: FunctionalQuery) -> Result<MuEstimate> {
    if let LinkGeometry::Einstein { dim, lambda, volume, shrinking_time } = link {
        // Constant fields give the closed form at every τ; it is the infimum for τ ≥ T_N.
        return Ok(MuEstimate {
            value: einstein_w_constant(*dim, *lambda, *volume, q.tau),
            minimizer: None,
            status: MinimizeStatus::Converged,
            upper_bound: q.tau < *shrinking_time,
        });
    }
    mu_on_discretization(&link.discretize()?, q.tau)
}

/// Upper-bound estimate of μ(g, τ) over the invariant class.
pub fn mu_link(link: &LinkGeometry, q: FunctionalQuery) -> Result<f64> {
    Ok(mu_link_detailed(link, q)?.value)
}

/// Default τ grid for ν: 31 logarithmic points on [1e-3, 1e3].
pub fn default_tau_grid() -> Vec<f64> {
    (0..31).map(|k| powi(10.0, -3) * crate::math::powf(10.0, 6.0 * k as f64 / 30.0)).collect()
}

/// ν = inf_τ μ over the grid, refined by golden-section search in log τ
/// around the grid minimizer. Returns (ν, argmin τ).
pub fn nu_link(link: &LinkGeometry, tau_grid: &[f64]) -> Result<(f64, f64)> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidInput("empty tau grid"));
    }
    match link {
        LinkGeometry::Einstein { .. } => {
            nu_search(tau_grid, |t| mu_link(link, FunctionalQuery::new(t, link.dim())?))
        }
        _ => {
            let d = link.discretize()?;
            nu_search(tau_grid, |t| Ok(mu_on_discretization(&d, t)?.value))
        }
    }
}

fn nu_search(tau_grid: &[f64], eval: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut grid: Vec<f64> = tau_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let vals: Vec<f64> = grid.iter().map(|t| eval(*t)).collect::<Result<_>>()?;
    let (k, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    if grid.len() < 3 {
        return Ok((vals[k], grid[k]));
    }
    let lo = ln(grid[k.saturating_sub(1)]);
    let hi = ln(grid[(k + 1).min(grid.len() - 1)]);
    let g = (sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = eval(exp(c))?;
    let mut fd = eval(exp(d))?;
    while b - a > 1e-4 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(exp(c))?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(exp(d))?;
        }
    }
    let (mut best, mut arg) = (vals[k], grid[k]);
    for (v, t) in [(fc, exp(c)), (fd, exp(d))] {
        if v < best {
            best = v;
            arg = t;
        }
    }
    Ok((best, arg))
}

/// Exact μ for Einstein data at τ ≥ T_N.
pub fn mu_einstein_closed_form(link: &LinkGeometry, q: FunctionalQuery) -> Result<f64> {
    match link {
        LinkGeometry::Einstein { dim, lambda, volume, shrinking_time } => {
            if q.tau < *shrinking_time {
                return Err(Error::BelowShrinkingTime { tau: q.tau, shrinking_time: *shrinking_time });
            }
            Ok(einstein_w_constant(*dim, *lambda, *volume, q.tau))
        }
        _ => Err(Error::InvalidInput("closed form needs an einstein link")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub pairs_checked: usize,
    /// Largest amount by which μ(τ₁) falls below the chain bound (0 when none).
    pub worst_violation: f64,
    pub worst_pair: Option<(f64, f64)>,
}

/// Checks μ(τ₁) ≥ μ(τ₂) + (τ₁−τ₂)λ − (n/2)log(τ₁/τ₂) for every pair τ₁ > τ₂.
pub fn mu_envelope_check(samples: &[(f64, f64)], lambda: f64, dim: usize) -> EnvelopeReport {
    let n = dim as f64;
    let mut rep = EnvelopeReport { pairs_checked: 0, worst_violation: 0.0, worst_pair: None };
    for (j, &(t1, m1)) in samples.iter().enumerate() {
        for &(t2, m2) in &samples[..j] {
            if t1 <= t2 {
                continue;
            }
            rep.pairs_checked += 1;
            let bound = m2 + (t1 - t2) * lambda - n / 2.0 * ln(t1 / t2);
            let v = bound - m1;
            if v > rep.worst_violation {
                rep.worst_violation = v;
                rep.worst_pair = Some((t1, t2));
            }
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub taus: Vec<f64>,
    pub distances: Vec<f64>,
    /// Distances non-increasing over the last half of the τ range.
    pub tail_nonincreasing: bool,
}

/// H¹ distance between the W-minimizer at each τ and the F ground state.
pub fn minimizer_drift_check(link: &LinkGeometry, taus: &[f64]) -> Result<DriftReport> {
    if taus.len() < 3 || taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("need at least 3 non-decreasing tau values"));
    }
    let (_, ground, d) = ground_state(link)?;
    let mut distances = Vec::with_capacity(taus.len());
    for &t in taus {
        let est = mu_on_discretization(&d, t)?;
        let u = est.minimizer.expect("discretized estimate carries its minimizer");
        distances.push(d.h1_distance(&u, &ground)?);
    }
    let tail = &distances[taus.len() / 2..];
    let tail_nonincreasing = tail.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    Ok(DriftReport { taus: taus.to_vec(), distances, tail_nonincreasing })
}
