//! Fully specified marginal distributions.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::kernels::quadrature::integrate;
use crate::kernels::{std_normal_cdf, std_normal_quantile};

/// A monotone CDF.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Parametric marginal families used for known-margin fitting and for
/// simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    NoncentralT { df: f64, ncp: f64 },
}

impl Marginal {
    /// Support of the distribution (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Normal { .. } | Marginal::NoncentralT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Gamma { .. } => (0.0, f64::INFINITY),
            Marginal::Beta { .. } => (0.0, 1.0),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.support();
        if p <= 0.0 {
            return lo;
        }
        if p >= 1.0 {
            return hi;
        }
        match *self {
            Marginal::Normal { mean, sd } => mean + sd * std_normal_quantile(p),
            Marginal::Gamma { shape, scale } if shape == 1.0 => -scale * (-p).ln_1p(),
            Marginal::Beta { a, b } if a == 1.0 => 1.0 - (1.0 - p).powf(1.0 / b),
            _ => invert_cdf(|x| self.cdf(x), p, lo, hi),
        }
    }

    /// Composite of the quantile function with Φ, i.e. the copula map from
    /// a standard-normal latent to the data scale.
    pub fn from_latent(&self, z: f64) -> f64 {
        self.quantile(std_normal_cdf(z))
    }
}

impl Cdf for Marginal {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            Marginal::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(shape, x / scale)
                }
            }
            Marginal::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Marginal::NoncentralT { df, ncp } => noncentral_t_cdf(x, df, ncp),
        }
    }
}

/// CDF of the noncentral t distribution,
/// `P(T <= t) = E[Φ(t·√(V/ν) − δ)]` with `V ~ χ²_ν`, integrated over
/// `u = √V`.
pub fn noncentral_t_cdf(t: f64, df: f64, ncp: f64) -> f64 {
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    let log_norm = (df / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma(df / 2.0);
    let scale = 1.0 / df.sqrt();
    // Density of u = √V: u^{ν−1} e^{−u²/2} / (2^{ν/2−1} Γ(ν/2)).
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let log_density = (df - 1.0) * u.ln() - 0.5 * u * u - log_norm;
        std_normal_cdf(t * u * scale - ncp) * log_density.exp()
    };
    let upper = df.sqrt() + 12.0;
    let mode = (df - 1.0).max(0.0).sqrt();
    let total = integrate(&integrand, 0.0, mode, 1e-14) + integrate(&integrand, mode, upper, 1e-14);
    total.clamp(0.0, 1.0)
}

/// Solves `cdf(x) = p` by bracketing, then regula falsi with the Illinois
/// modification, falling back to bisection when it stalls.
pub fn invert_cdf(cdf: impl Fn(f64) -> f64, p: f64, support_lo: f64, support_hi: f64) -> f64 {
    let mut lo = if support_lo.is_finite() { support_lo } else { -1.0 };
    let mut hi = if support_hi.is_finite() { support_hi } else { 1.0 };
    let mut step = 1.0;
    while !support_lo.is_finite() && cdf(lo) > p {
        hi = hi.min(lo);
        lo -= step;
        step *= 2.0;
    }
    step = 1.0;
    while !support_hi.is_finite() && cdf(hi) < p {
        lo = lo.max(hi);
        hi += step;
        step *= 2.0;
    }
    let mut flo = cdf(lo) - p;
    let mut fhi = cdf(hi) - p;
    if flo >= 0.0 {
        return lo;
    }
    let mut side = 0i8;
    for _ in 0..300 {
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) || hi - lo < f64::MIN_POSITIVE {
            break;
        }
        let mut x = if fhi > flo { lo - flo * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
        // Keep the secant point well inside the bracket.
        let margin = 0.01 * (hi - lo);
        if !(x > lo + margin && x < hi - margin) {
            x = 0.5 * (lo + hi);
        }
        let fx = cdf(x) - p;
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else if fx > 0.0 {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        } else {
            return x;
        }
    }
    0.5 * (lo + hi)
}

/// Latent value `Φ⁻¹(F(y))` of an observation under a known, continuous
/// marginal.
pub fn known_marginal_transform(f: &impl Cdf, y: f64) -> Result<f64> {
    let level = f.cdf(y);
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::DegenerateCdf { value: y, level });
    }
    Ok(std_normal_quantile(level))
}
