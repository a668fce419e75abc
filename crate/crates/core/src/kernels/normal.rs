//! Standard normal distribution functions.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, evaluated through `erfc` so the lower tail keeps
/// full relative precision.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail probability `1 - Φ(x)` without cancellation.
#[inline]
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// Standard normal quantile. Returns `-inf` / `+inf` at `p = 0` / `p = 1`
/// and NaN outside `[0, 1]`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    // Work in the smaller tail, then polish with one Halley step.
    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 && x.is_finite() {
        let u = (std_normal_cdf(x) - q) / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    sign * -x
}

/// Quantile of the upper tail: returns `x` with `1 - Φ(x) = q`.
pub fn std_normal_isf(q: f64) -> f64 {
    -std_normal_quantile(q)
}

/// `Φ(hi) - Φ(lo)` for `lo <= hi`, computed on whichever tail keeps
/// precision.
pub fn normal_interval_mass(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    if lo >= 0.0 {
        (std_normal_sf(lo) - std_normal_sf(hi)).max(0.0)
    } else {
        (std_normal_cdf(hi) - std_normal_cdf(lo)).max(0.0)
    }
}

/// Normal CDF with mean `mu` and variance `var`.
#[inline]
pub fn normal_cdf(x: f64, mu: f64, var: f64) -> f64 {
    std_normal_cdf((x - mu) / var.sqrt())
}
