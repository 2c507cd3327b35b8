use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, ln, sqrt, xlogx2};
use crate::numcore::eigen::Discrete;
use crate::numcore::{ScalarField, SturmLiouvilleProblem};

/// Objective `a·(∫p u'² + ∫V u² m) − b·∫u² log u² m + c` restricted to
/// `∫u² m = 1`, where p, V, m come from the embedded problem. With `a = τ`,
/// p = 4m, V = R, b = 1 this is W; with a = 1, b = 0 it is F.
#[derive(Debug, Clone)]
pub struct NormalizedFunctional {
    pub problem: SturmLiouvilleProblem,
    pub quad_scale: f64,
    pub entropy: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeConfig {
    pub tolerance: f64,
    pub floor: f64,
    pub max_iter: usize,
    pub window: usize,
    pub runaway_steps: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self { tolerance: 1e-9, floor: -1e6, max_iter: 20_000, window: 20, runaway_steps: 50 }
    }
}

impl MinimizeConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self { tolerance, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeStatus {
    Converged,
    UnboundedBelow,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub status: MinimizeStatus,
    /// Objective at the returned field; an upper bound on the discrete infimum.
    pub value: f64,
    pub minimizer: ScalarField,
    pub residual: f64,
    pub iterations: usize,
    /// Objective after every accepted step.
    pub trace: Vec<f64>,
}

struct Workspace<'a> {
    d: Discrete,
    f: &'a NormalizedFunctional,
}

impl Workspace<'_> {
    fn energy(&self, u: &[f64]) -> f64 {
        let d = &self.d;
        let mut pot = 0.0;
        let mut ent = 0.0;
        for i in 0..d.len() {
            pot += d.mass[i] * d.potential[i] * u[i] * u[i];
            ent += d.mass[i] * xlogx2(u[i]);
        }
        self.f.quad_scale * (d.gradient_energy(u) + pot) - self.f.entropy * ent + self.f.constant
    }

    fn gradient(&self, u: &[f64], g: &mut [f64]) {
        let d = &self.d;
        d.apply_stiffness(u, g);
        let (a, b) = (self.f.quad_scale, self.f.entropy);
        for i in 0..d.len() {
            let ent = if u[i] == 0.0 { 0.0 } else { 2.0 * u[i] * (2.0 * ln(abs(u[i])) + 1.0) };
            g[i] = 2.0 * a * (g[i] + d.mass[i] * d.potential[i] * u[i]) - b * d.mass[i] * ent;
        }
    }

    /// Energy at normalize(u + t·dir), written into `out`; +∞ if degenerate.
    fn trial_energy(&self, u: &[f64], dir: &[f64], t: f64, out: &mut [f64]) -> f64 {
        for i in 0..u.len() {
            out[i] = u[i] + t * dir[i];
        }
        match self.normalize(out) {
            Ok(()) => {
                let e = self.energy(out);
                if e.is_finite() { e } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn normalize(&self, u: &mut [f64]) -> Result<()> {
        let n = sqrt(self.d.mass_norm2(u));
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroField);
        }
        for v in u.iter_mut() {
            *v /= n;
        }
        Ok(())
    }
}

/// Projected gradient descent on the unit sphere of the discrete mass
/// inner product: renormalization after every step, Armijo backtracking,
/// and Polak–Ribière+ conjugation of successive preconditioned gradients.
///
/// The preconditioner is `2a·K + diag(2M·(a·V₊ + b(|log u²| + 2) + 1))`, a
/// tridiagonal approximation of the Hessian, so the iteration count does not
/// grow with the grid size. Runaway descent (value below `floor`, or a drop
/// larger than 1 on `runaway_steps` consecutive steps) ends the run with
/// status `UnboundedBelow`.
pub fn minimize_normalized(
    objective: &NormalizedFunctional,
    init: &ScalarField,
    config: &MinimizeConfig,
) -> Result<MinimizeOutcome> {
    let grid = &objective.problem.grid;
    if init.grid().nodes() != grid.nodes() {
        return Err(Error::GridMismatch);
    }
    let ws = Workspace { d: objective.problem.discretize(), f: objective };
    let m = ws.d.len();
    let mut u: Vec<f64> = init.values()[ws.d.lo..ws.d.hi].to_vec();
    ws.normalize(&mut u)?;

    let (a, b) = (objective.quad_scale, objective.entropy);
    let mut e = ws.energy(&u);
    let mut trace = alloc::vec![e];
    let mut g = alloc::vec![0.0; m];
    let mut r = alloc::vec![0.0; m];
    let mut q = alloc::vec![0.0; m];
    let mut mu = alloc::vec![0.0; m];
    let mut shift = alloc::vec![0.0; m];
    let mut trial = alloc::vec![0.0; m];
    let mut dir = alloc::vec![0.0; m];
    let mut r_old = alloc::vec![0.0; m];
    let mut res2_old = 0.0;
    let mut t: f64 = 1.0;
    let mut quiet = 0;
    let mut runaway = 0;
    let mut residual = f64::INFINITY;
    let mut status = MinimizeStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..config.max_iter {
        iterations = it + 1;
        ws.gradient(&u, &mut g);
        for i in 0..m {
            let ent = if u[i] == 0.0 { 60.0 } else { abs(2.0 * ln(abs(u[i]))).min(60.0) + 2.0 };
            shift[i] = 2.0 * ws.d.mass[i] * (a * ws.d.potential[i].max(0.0) + b * ent + 1.0);
            mu[i] = ws.d.mass[i] * u[i];
        }
        ws.d.solve_shifted(2.0 * a, &shift, &g, &mut r);
        ws.d.solve_shifted(2.0 * a, &shift, &mu, &mut q);
        let ur: f64 = mu.iter().zip(&r).map(|(x, y)| x * y).sum();
        let uq: f64 = mu.iter().zip(&q).map(|(x, y)| x * y).sum();
        let lagrange = ur / uq;
        // Projected preconditioned gradient r and the tangent gradient g.
        let mut res2 = 0.0;
        for i in 0..m {
            r[i] -= lagrange * q[i];
            g[i] -= lagrange * mu[i];
            res2 += g[i] * r[i];
        }
        residual = sqrt(res2.max(0.0));
        if residual <= config.tolerance * 1e-3 {
            status = MinimizeStatus::Converged;
            break;
        }
        // Polak–Ribière+ conjugate direction, transported by projection onto
        // the new tangent space; restart whenever it is not a descent direction.
        let mut beta = 0.0;
        if it > 0 && res2_old > 0.0 {
            let cross: f64 = g.iter().zip(&r_old).map(|(x, y)| x * y).sum();
            beta = ((res2 - cross) / res2_old).max(0.0);
        }
        for i in 0..m {
            dir[i] = -r[i] + beta * dir[i];
        }
        let du: f64 = dir.iter().zip(&mu).map(|(x, y)| x * y).sum();
        for i in 0..m {
            dir[i] -= du * u[i];
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(x, y)| x * y).sum();
        if !(slope < 0.0) {
            for i in 0..m {
                dir[i] = -r[i];
            }
            slope = -res2;
        }
        r_old.copy_from_slice(&r);
        res2_old = res2;

        // Armijo backtracking with quadratic interpolation, starting from a
        // little more than the last accepted step.
        t = (1.5 * t).min(1e3);
        let mut accepted = false;
        let mut e_new = e;
        for _ in 0..80 {
            let e_t = ws.trial_energy(&u, &dir, t, &mut trial);
            let curv = 2.0 * (e_t - e - t * slope) / (t * t);
            let t_q = if curv > 0.0 && curv.is_finite() { -slope / curv } else { f64::NAN };
            if e_t <= e + 1e-4 * t * slope {
                accepted = true;
                e_new = e_t;
                if t_q.is_finite() && abs(t_q - t) > 0.1 * t {
                    let mut alt = alloc::vec![0.0; m];
                    let e_q = ws.trial_energy(&u, &dir, t_q, &mut alt);
                    if e_q < e_new {
                        e_new = e_q;
                        t = t_q;
                        trial = alt;
                    }
                }
                break;
            }
            t = if t_q.is_finite() { t_q.clamp(0.1 * t, 0.5 * t) } else { 0.5 * t };
        }
        if !accepted {
            // No descent left at machine precision: stationary.
            status = MinimizeStatus::Converged;
            break;
        }
        let de = e_new - e;
        u.copy_from_slice(&trial);
        e = e_new;
        trace.push(e);
        if e < config.floor {
            status = MinimizeStatus::UnboundedBelow;
            break;
        }
        runaway = if de < -1.0 { runaway + 1 } else { 0 };
        if runaway >= config.runaway_steps {
            status = MinimizeStatus::UnboundedBelow;
            break;
        }
        quiet = if abs(de) <= config.tolerance * 1e-3 * e.abs().max(1.0) { quiet + 1 } else { 0 };
        if quiet >= config.window {
            status = MinimizeStatus::Converged;
            break;
        }
    }
    let sign = if u.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for v in u.iter_mut() {
        *v *= sign;
    }
    let full = ws.d.expand(&u, grid.len(), objective.problem.boundary);
    let minimizer = ScalarField::new(grid.clone(), full, objective.problem.boundary)?;
    Ok(MinimizeOutcome { status, value: e, minimizer, residual, iterations, trace })
}

impl NormalizedFunctional {
    /// Objective value at a field, after normalizing it in the discrete mass.
    pub fn evaluate(&self, u: &ScalarField) -> Result<f64> {
        let ws = Workspace { d: self.problem.discretize(), f: self };
        let mut v: Vec<f64> = u.values()[ws.d.lo..ws.d.hi].to_vec();
        ws.normalize(&mut v)?;
        Ok(ws.energy(&v))
    }

    /// Discrete mass ∫u² m of a field in the objective's inner product.
    pub fn mass(&self, u: &ScalarField) -> f64 {
        let d = self.problem.discretize();
        d.mass_norm2(&u.values()[d.lo..d.hi])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{exp, ln, powi, sin, PI};
    use crate::numcore::{eigen_smallest, BoundaryKind, RadialGrid};
    use alloc::sync::Arc;

    fn sphere_w(tau: f64, nodes: usize) -> NormalizedFunctional {
        let g = Arc::new(RadialGrid::uniform(0.0, PI, nodes).unwrap());
        let m: Vec<f64> = g.nodes().iter().map(|s| 2.0 * PI * sin(*s)).collect();
        let p: Vec<f64> = m.iter().map(|v| 4.0 * v).collect();
        let b = (BoundaryKind::PoleRegular, BoundaryKind::PoleRegular);
        let problem = SturmLiouvilleProblem::new(g, m, p, alloc::vec![2.0; nodes], b).unwrap();
        NormalizedFunctional {
            problem,
            quad_scale: tau,
            entropy: 1.0,
            constant: -ln(4.0 * PI * tau) - 2.0,
        }
    }

    #[test]
    fn w_on_unit_sphere_at_half() {
        let w = sphere_w(0.5, 513);
        let init = ScalarField::constant(w.problem.grid.clone(), 1.0).unwrap();
        let out = minimize_normalized(&w, &init, &MinimizeConfig::default()).unwrap();
        assert_eq!(out.status, MinimizeStatus::Converged);
        assert!(abs(out.value - (ln(2.0) - 1.0)) < 1e-3);
    }

    #[test]
    fn f_minimum_is_eigenvalue() {
        let mut w = sphere_w(1.0, 257);
        w.entropy = 0.0;
        w.constant = 0.0;
        let pot: Vec<f64> = w.problem.grid.nodes().iter().map(|s| 2.0 + 0.5 * sin(3.0 * s)).collect();
        w.problem = w.problem.with_potential(pot);
        let (lambda, _) = eigen_smallest(&w.problem).unwrap();
        let init = ScalarField::from_fn(w.problem.grid.clone(), |s| 1.0 + 0.3 * s).unwrap();
        let out = minimize_normalized(&w, &init, &MinimizeConfig::default()).unwrap();
        assert!(out.value >= lambda - 1e-10);
        assert!(abs(out.value - lambda) < 1e-8, "{} vs {}", out.value, lambda);
    }

    #[test]
    fn concentrated_start_finds_lower_value_at_small_tau() {
        let tau = 1e-2;
        let w = sphere_w(tau, 1025);
        let init = ScalarField::from_fn(w.problem.grid.clone(), |s| exp(-s * s / (8.0 * tau))).unwrap();
        let out = minimize_normalized(&w, &init, &MinimizeConfig::default()).unwrap();
        assert!(out.value < 0.0 && out.value > -0.05, "{}", out.value);
        let _ = powi(1.0, 1);
    }
}
