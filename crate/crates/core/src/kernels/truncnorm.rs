//! Truncated normal sampling.
//!
//! Central intervals use the inverse CDF, evaluated on the lower tail so
//! that upper-tail intervals keep precision. Intervals whose standardized
//! mass is below [`TAIL_MASS_THRESHOLD`] switch to rejection samplers
//! (exponential proposals for wide tail intervals, uniform proposals for
//! narrow ones) that stay exact arbitrarily far into the tails.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::{std_normal_cdf, std_normal_quantile};
use crate::error::{Error, Result};

/// Mass below which the inverse-CDF route is abandoned for rejection.
pub const TAIL_MASS_THRESHOLD: f64 = 1e-10;

/// Half-open interval `(lo, hi]` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationInterval {
    pub lo: f64,
    pub hi: f64,
}

impl TruncationInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Contract(format!("empty truncation interval ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub const fn unbounded() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub const fn positive() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY }
    }

    pub const fn negative() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: 0.0 }
    }

    /// Sign interval for a probit latent: `(0, inf)` when `on`, else `(-inf, 0)`.
    pub const fn sign(on: bool) -> Self {
        if on {
            Self::positive()
        } else {
            Self::negative()
        }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

/// Mean and variance of a univariate Gaussian full conditional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoments {
    pub mu: f64,
    pub sigma2: f64,
}

impl ConditionalMoments {
    pub fn new(mu: f64, sigma2: f64) -> Self {
        Self { mu, sigma2 }
    }

    #[inline]
    pub fn sd(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Draws from `N(mu, sigma2)` restricted to `interval`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    moments: ConditionalMoments,
    interval: TruncationInterval,
) -> f64 {
    let sd = moments.sd();
    if interval.is_unbounded() {
        let w: f64 = StandardNormal.sample(rng);
        return moments.mu + sd * w;
    }
    let a = (interval.lo - moments.mu) / sd;
    let b = (interval.hi - moments.mu) / sd;
    let x = sample_standard(rng, a, b);
    let value = moments.mu + sd * x;
    keep_inside(value, interval)
}

/// Draws from the standard normal restricted to `(a, b)`.
pub fn sample_standard<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    // Work with an interval whose left end is on the non-positive side,
    // where CDF values carry full relative precision.
    if a > 0.0 {
        return -sample_standard(rng, -b, -a);
    }
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    let mass = pb - pa;
    if mass >= TAIL_MASS_THRESHOLD {
        let u: f64 = rng.random();
        let x = std_normal_quantile(pa + u * mass);
        return x.clamp(a, b);
    }
    if b <= 0.0 {
        // Entirely in the lower tail: mirror onto (−b, −a) with −b >= 0.
        -tail_rejection(rng, -b, -a)
    } else {
        // Narrow interval straddling zero; the density is nearly flat.
        uniform_rejection(rng, a, b)
    }
}

/// Exact sampler for the standard normal restricted to `(lo, hi)` with
/// `lo >= 0`.
fn tail_rejection<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo >= 0.0);
    if hi.is_finite() && lo * (hi - lo) < 1.0 {
        return uniform_rejection(rng, lo, hi);
    }
    // Exponential proposal with the optimal rate for a one-sided tail.
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = lo + e / rate;
        if x >= hi {
            continue;
        }
        let u: f64 = rng.random();
        let d = x - rate;
        if u.ln() <= -0.5 * d * d {
            return x;
        }
    }
}

/// Uniform proposal on `(lo, hi)`, accepted with the density ratio to its
/// maximum over the interval.
fn uniform_rejection<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let peak = if lo > 0.0 {
        lo
    } else if hi < 0.0 {
        hi
    } else {
        0.0
    };
    loop {
        let u: f64 = rng.random();
        let x = lo + u * (hi - lo);
        let v: f64 = rng.random();
        if v.ln() <= 0.5 * (peak * peak - x * x) {
            return x;
        }
    }
}

/// Pulls a value rounded onto an endpoint back inside `(lo, hi]`.
fn keep_inside(value: f64, interval: TruncationInterval) -> f64 {
    if value <= interval.lo {
        let nudged = interval.lo.next_up();
        if nudged <= interval.hi {
            return nudged;
        }
        return interval.hi;
    }
    if value > interval.hi {
        return interval.hi;
    }
    value
}

/// CDF of `N(mu, sigma2)` truncated to `interval`, for goodness-of-fit checks.
pub fn truncated_normal_cdf(x: f64, moments: ConditionalMoments, interval: TruncationInterval) -> f64 {
    use super::normal::normal_interval_mass;
    let sd = moments.sd();
    let a = (interval.lo - moments.mu) / sd;
    let b = (interval.hi - moments.mu) / sd;
    let t = ((x - moments.mu) / sd).clamp(a, b);
    let total = normal_interval_mass(a, b);
    if total == 0.0 {
        return f64::NAN;
    }
    (normal_interval_mass(a, t) / total).clamp(0.0, 1.0)
}
