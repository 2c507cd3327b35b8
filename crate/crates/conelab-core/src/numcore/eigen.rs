use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};
use crate::numcore::{BoundaryKind, RadialGrid, ScalarField};

/// The operator −(1/m)(p u')' + V u on a grid, with per-end boundary kinds.
#[derive(Debug, Clone)]
pub struct SturmLiouvilleProblem {
    pub grid: Arc<RadialGrid>,
    pub measure: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub potential: Vec<f64>,
    pub boundary: (BoundaryKind, BoundaryKind),
}

impl SturmLiouvilleProblem {
    pub fn new(
        grid: Arc<RadialGrid>,
        measure: Vec<f64>,
        stiffness: Vec<f64>,
        potential: Vec<f64>,
        boundary: (BoundaryKind, BoundaryKind),
    ) -> Result<Self> {
        let n = grid.len();
        if measure.len() != n || stiffness.len() != n || potential.len() != n {
            return Err(Error::GridMismatch);
        }
        for i in 1..n - 1 {
            if !(measure[i] > 0.0 && stiffness[i] > 0.0) {
                return Err(Error::InvalidInput("measure and stiffness must be positive inside"));
            }
        }
        if potential.iter().chain(&measure).chain(&stiffness).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient"));
        }
        Ok(Self { grid, measure, stiffness, potential, boundary })
    }

    /// Same problem with V replaced.
    pub fn with_potential(&self, potential: Vec<f64>) -> Self {
        Self { potential, ..self.clone() }
    }

    pub(crate) fn discretize(&self) -> Discrete {
        Discrete::new(self)
    }
}

/// Lumped-mass, two-point-flux discretization. Unknowns are the nodes in
/// `lo..hi`; pole-regular and Dirichlet ends are eliminated.
#[derive(Debug, Clone)]
pub(crate) struct Discrete {
    pub lo: usize,
    pub hi: usize,
    pub mass: Vec<f64>,
    pub edge: Vec<f64>,
    pub diag_extra: Vec<f64>,
    pub potential: Vec<f64>,
}

impl Discrete {
    fn new(p: &SturmLiouvilleProblem) -> Self {
        let x = p.grid.nodes();
        let n = x.len();
        let lo = if p.boundary.0 == BoundaryKind::NeumannZero { 0 } else { 1 };
        let hi = if p.boundary.1 == BoundaryKind::NeumannZero { n } else { n - 1 };
        // Dual-cell integral of the piecewise-linear interpolant of m.
        let mm = &p.measure;
        let cell_mass = |i: usize| -> f64 {
            let mut s = 0.0;
            if i > 0 {
                s += (x[i] - x[i - 1]) / 8.0 * (3.0 * mm[i] + mm[i - 1]);
            }
            if i + 1 < n {
                s += (x[i + 1] - x[i]) / 8.0 * (3.0 * mm[i] + mm[i + 1]);
            }
            s
        };
        let k = |i: usize| (p.stiffness[i] + p.stiffness[i + 1]) / 2.0 / (x[i + 1] - x[i]);
        let m = hi - lo;
        let mut mass: Vec<f64> = (lo..hi).map(cell_mass).collect();
        // A pole node is eliminated with u equal to its neighbour, so its
        // half cell belongs to the neighbour.
        if p.boundary.0 == BoundaryKind::PoleRegular {
            mass[0] += (x[1] - x[0]) / 8.0 * (3.0 * mm[0] + mm[1]);
        }
        if p.boundary.1 == BoundaryKind::PoleRegular {
            mass[m - 1] += (x[n - 1] - x[n - 2]) / 8.0 * (3.0 * mm[n - 1] + mm[n - 2]);
        }
        let edge: Vec<f64> = (lo..hi - 1).map(k).collect();
        let mut diag_extra = alloc::vec![0.0; m];
        if p.boundary.0 == BoundaryKind::DirichletZero {
            diag_extra[0] += k(0);
        }
        if p.boundary.1 == BoundaryKind::DirichletZero {
            diag_extra[m - 1] += k(n - 2);
        }
        let potential = p.potential[lo..hi].to_vec();
        Self { lo, hi, mass, edge, diag_extra, potential }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    /// Σ k (Δu)² + boundary terms (the gradient energy).
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, k) in self.edge.iter().enumerate() {
            let d = u[i + 1] - u[i];
            s += k * d * d;
        }
        for (d, ui) in self.diag_extra.iter().zip(u) {
            s += d * ui * ui;
        }
        s
    }

    /// Stiffness matrix (gradient part only) applied to u.
    pub fn apply_stiffness(&self, u: &[f64], out: &mut [f64]) {
        let m = self.len();
        for i in 0..m {
            let mut v = self.diag_extra[i] * u[i];
            if i > 0 {
                v += self.edge[i - 1] * (u[i] - u[i - 1]);
            }
            if i + 1 < m {
                v += self.edge[i] * (u[i] - u[i + 1]);
            }
            out[i] = v;
        }
    }

    pub fn mass_norm2(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).map(|(m, v)| m * v * v).sum()
    }

    /// Solve (a·K + diag(c)) x = rhs, where K is the stiffness matrix.
    pub fn solve_shifted(&self, a: f64, c: &[f64], rhs: &[f64], out: &mut [f64]) {
        let m = self.len();
        let mut diag: Vec<f64> = (0..m)
            .map(|i| {
                let mut d = self.diag_extra[i];
                if i > 0 {
                    d += self.edge[i - 1];
                }
                if i + 1 < m {
                    d += self.edge[i];
                }
                a * d + c[i]
            })
            .collect();
        let off: Vec<f64> = self.edge.iter().map(|k| -a * k).collect();
        thomas(&mut diag, &off, rhs, out);
    }

    /// Expand an active-node vector to the full grid.
    pub fn expand(&self, u: &[f64], n: usize, boundary: (BoundaryKind, BoundaryKind)) -> Vec<f64> {
        let mut full = alloc::vec![0.0; n];
        full[self.lo..self.hi].copy_from_slice(u);
        if self.lo == 1 {
            full[0] = if boundary.0 == BoundaryKind::PoleRegular { u[0] } else { 0.0 };
        }
        if self.hi == n - 1 {
            full[n - 1] = if boundary.1 == BoundaryKind::PoleRegular { u[u.len() - 1] } else { 0.0 };
        }
        full
    }
}

/// Symmetric tridiagonal solve; `diag` is overwritten.
fn thomas(diag: &mut [f64], off: &[f64], rhs: &[f64], out: &mut [f64]) {
    let m = diag.len();
    out.copy_from_slice(rhs);
    for i in 1..m {
        let w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        out[i] -= w * out[i - 1];
    }
    out[m - 1] /= diag[m - 1];
    for i in (0..m - 1).rev() {
        out[i] = (out[i] - off[i] * out[i + 1]) / diag[i];
    }
}

const MAX_ITER: usize = 500;
const RESIDUAL_TOL: f64 = 1e-10;

/// Smallest eigenvalue and positive, m-normalized ground state of the
/// discretized problem (normalized in the lumped-mass inner product).
pub fn eigen_smallest(problem: &SturmLiouvilleProblem) -> Result<(f64, ScalarField)> {
    let d = problem.discretize();
    let m = d.len();
    // Symmetric form A = M^{-1/2} K M^{-1/2} + V.
    let s: Vec<f64> = d.mass.iter().map(|v| 1.0 / sqrt(*v)).collect();
    let mut a = alloc::vec![0.0; m];
    for i in 0..m {
        let mut k = d.diag_extra[i];
        if i > 0 {
            k += d.edge[i - 1];
        }
        if i + 1 < m {
            k += d.edge[i];
        }
        a[i] = k * s[i] * s[i] + d.potential[i];
    }
    let b: Vec<f64> = (0..m - 1).map(|i| -d.edge[i] * s[i] * s[i + 1]).collect();

    // Gershgorin bracket, then Sturm-count bisection for the lowest eigenvalue.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { abs(b[i - 1]) } else { 0.0 } + if i + 1 < m { abs(b[i]) } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    let norm = hi.max(-lo).max(1.0);
    let count_below = |x: f64| -> usize {
        let mut c = 0;
        let mut q = a[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..m {
            let prev = if q == 0.0 { f64::EPSILON * norm } else { q };
            q = a[i] - x - b[i - 1] * b[i - 1] / prev;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let (mut l, mut h) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (l + h);
        if count_below(mid) >= 1 {
            h = mid;
        } else {
            l = mid;
        }
        if h - l <= 4.0 * f64::EPSILON * norm {
            break;
        }
    }
    // `l` sits below the lowest eigenvalue, so A − σ stays positive definite.
    let sigma = l - 1e-12 * norm;

    // Inverse iteration on the positive definite A − σ.
    let mut y = alloc::vec![1.0 / sqrt(m as f64); m];
    let mut z = alloc::vec![0.0; m];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut diag: Vec<f64> = a.iter().map(|v| v - sigma).collect();
        thomas(&mut diag, &b, &y, &mut z);
        let nz = sqrt(z.iter().map(|v| v * v).sum::<f64>());
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi = zi / nz;
        }
        // Rayleigh quotient and residual.
        let mut ay = alloc::vec![0.0; m];
        for i in 0..m {
            let mut v = a[i] * y[i];
            if i > 0 {
                v += b[i - 1] * y[i - 1];
            }
            if i + 1 < m {
                v += b[i] * y[i + 1];
            }
            ay[i] = v;
        }
        let lambda: f64 = y.iter().zip(&ay).map(|(p, q)| p * q).sum();
        residual = sqrt(ay.iter().zip(&y).map(|(p, q)| (p - lambda * q) * (p - lambda * q)).sum::<f64>())
            / norm;
        if residual < RESIDUAL_TOL {
            break;
        }
    }
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::EigenNoConvergence { residual });
    }
    let mut u: Vec<f64> = y.iter().zip(&s).map(|(yi, si)| yi * si).collect();
    // M^{-1/2} amplifies round-off where the mass is tiny (near poles), so
    // polish in the generalized form (K + MV − σM)x = Mu, which has no such
    // scaling.
    let shift: Vec<f64> = (0..m).map(|i| d.mass[i] * (d.potential[i] - sigma)).collect();
    let mut x = alloc::vec![0.0; m];
    for _ in 0..2 {
        let mu: Vec<f64> = (0..m).map(|i| d.mass[i] * u[i]).collect();
        d.solve_shifted(1.0, &shift, &mu, &mut x);
        let nrm = sqrt(d.mass_norm2(&x));
        for (ui, xi) in u.iter_mut().zip(&x) {
            *ui = xi / nrm;
        }
    }
    let mut pot = 0.0;
    for i in 0..m {
        pot += d.mass[i] * d.potential[i] * u[i] * u[i];
    }
    let lambda = d.gradient_energy(&u) + pot;
    let sign = if u.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for v in u.iter_mut() {
        *v *= sign;
    }
    let full = d.expand(&u, problem.grid.len(), problem.boundary);
    let field = ScalarField::new(problem.grid.clone(), full, problem.boundary)?;
    Ok((lambda, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{powi, sin, PI};

    fn sphere_problem(n: usize, beta: f64, nodes: usize) -> SturmLiouvilleProblem {
        // Arclength coordinate on [0, βπ], ψ = β sin(s/β).
        let g = Arc::new(RadialGrid::uniform(0.0, beta * PI, nodes).unwrap());
        let m: Vec<f64> = g.nodes().iter().map(|s| powi(beta * sin(s / beta), n as i32 - 1)).collect();
        let p: Vec<f64> = m.iter().map(|v| 4.0 * v).collect();
        let r = (n * (n - 1)) as f64 / (beta * beta);
        let v = alloc::vec![r; nodes];
        let b = (BoundaryKind::PoleRegular, BoundaryKind::PoleRegular);
        SturmLiouvilleProblem::new(g, m, p, v, b).unwrap()
    }

    #[test]
    fn round_spheres() {
        let (l, u) = eigen_smallest(&sphere_problem(2, 1.0, 2048)).unwrap();
        assert!(abs(l - 2.0) < 1e-6);
        let v = u.values();
        assert!(v.iter().all(|x| abs(x - v[1]) < 1e-6 * abs(v[1])));
        let (l, _) = eigen_smallest(&sphere_problem(3, 2.0, 2048)).unwrap();
        assert!(abs(l - 1.5) < 1e-6);
    }

    #[test]
    fn shift_moves_eigenvalue() {
        let p = sphere_problem(2, 1.0, 257);
        // Break the constant ground state so the shift test is not trivial.
        let pot: Vec<f64> = p.grid.nodes().iter().map(|s| 2.0 + sin(*s)).collect();
        let p = p.with_potential(pot.clone());
        let (l0, _) = eigen_smallest(&p).unwrap();
        let (l1, _) = eigen_smallest(&p.with_potential(pot.iter().map(|v| v + 0.7).collect())).unwrap();
        assert!(abs(l1 - l0 - 0.7) < 1e-9);
    }

    #[test]
    fn dirichlet_interval() {
        // −u'' on [0, π] with Dirichlet ends: λ = 1.
        let g = Arc::new(RadialGrid::uniform(0.0, PI, 2001).unwrap());
        let n = g.len();
        let b = (BoundaryKind::DirichletZero, BoundaryKind::DirichletZero);
        let p = SturmLiouvilleProblem::new(g, alloc::vec![1.0; n], alloc::vec![1.0; n], alloc::vec![0.0; n], b)
            .unwrap();
        let (l, u) = eigen_smallest(&p).unwrap();
        assert!(abs(l - 1.0) < 1e-5);
        assert_eq!(u.values()[0], 0.0);
        assert!(u.values().iter().all(|v| *v >= 0.0));
    }
}
