//! Elementary functions for a `no_std` build, backed by `libm`.

pub use core::f64::consts::{E, PI};

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn powi(x: f64, k: i32) -> f64 {
    libm::pow(x, k as f64)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `x² log x²`, continuously extended by 0 at `x = 0`.
#[inline]
pub fn xlogx2(x: f64) -> f64 {
    let s = x * x;
    if s == 0.0 {
        0.0
    } else {
        s * ln(s)
    }
}

/// Volume of the unit round sphere Sⁿ ⊂ ℝⁿ⁺¹.
pub fn sphere_volume(n: usize) -> f64 {
    let k = (n + 1) as f64 / 2.0;
    2.0 * powf(PI, k) / exp(lgamma(k))
}

/// Volume of the unit ball in ℝⁿ.
pub fn ball_volume(n: usize) -> f64 {
    let k = n as f64 / 2.0;
    powf(PI, k) / exp(lgamma(k + 1.0))
}

/// `log` clamped below at 0, written log₊ in the envelope bounds.
#[inline]
pub fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        ln(x)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_volumes() {
        assert!(abs(sphere_volume(1) - 2.0 * PI) < 1e-12);
        assert!(abs(sphere_volume(2) - 4.0 * PI) < 1e-12);
        assert!(abs(sphere_volume(3) - 2.0 * PI * PI) < 1e-12);
        assert!(abs(ball_volume(3) - 4.0 * PI / 3.0) < 1e-12);
        assert!(abs(ball_volume(2) - PI) < 1e-12);
    }
}
