use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::numcore::stencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Uniform,
    Logarithmic,
}

/// A strictly increasing 1D grid together with positive quadrature weights.
///
/// Weights are composite Simpson on consecutive interval pairs (the
/// non-uniform variant, exact for quadratics) with a trapezoid panel on the
/// last interval when the interval count is odd. Very coarse logarithmic
/// grids fall back to trapezoid panels so the weights stay positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    spacing: Spacing,
    weights: Vec<f64>,
    step: f64,
}

pub(crate) const MIN_NODES: usize = 16;

impl RadialGrid {
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidGrid("need finite a < b"));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid("at least 16 nodes"));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
        nodes[n - 1] = b;
        Ok(Self::build(nodes, Spacing::Uniform, h))
    }

    pub fn logarithmic(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b.is_finite() && a < b) {
            return Err(Error::InvalidGrid("need 0 < a < b"));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid("at least 16 nodes"));
        }
        let (la, lb) = (ln(a), ln(b));
        let h = (lb - la) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| exp(la + h * i as f64)).collect();
        nodes[0] = a;
        nodes[n - 1] = b;
        Ok(Self::build(nodes, Spacing::Logarithmic, h))
    }

    fn build(nodes: Vec<f64>, spacing: Spacing, step: f64) -> Self {
        let weights = simpson_weights(&nodes);
        Self { nodes, spacing, weights, step }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn first(&self) -> f64 {
        self.nodes[0]
    }
    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
    /// Step in the natural coordinate (x for uniform grids, log r for logarithmic ones).
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Σ wᵢ fᵢ.
    pub fn quad(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Fourth-order derivative d/dx of sampled values, one-sided at the ends.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let mut d = stencil::d1(values, self.step, stencil::End::OneSided, stencil::End::OneSided);
        if self.spacing == Spacing::Logarithmic {
            for (di, r) in d.iter_mut().zip(&self.nodes) {
                *di /= r;
            }
        }
        d
    }
}

fn simpson_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = alloc::vec![0.0; n];
    let intervals = n - 1;
    let pairs = intervals / 2;
    for p in 0..pairs {
        let i = 2 * p;
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let s = h0 + h1;
        if h1 / h0 > 1.9 || h0 / h1 > 1.9 {
            // Strongly graded pair: Simpson weights would turn negative.
            w[i] += h0 / 2.0;
            w[i + 1] += s / 2.0;
            w[i + 2] += h1 / 2.0;
            continue;
        }
        w[i] += s / 6.0 * (2.0 - h1 / h0);
        w[i + 1] += s * s * s / (6.0 * h0 * h1);
        w[i + 2] += s / 6.0 * (2.0 - h0 / h1);
    }
    if intervals % 2 == 1 {
        let h = x[n - 1] - x[n - 2];
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    w
}
