//! Rectangle probabilities under the standard bivariate normal.

use super::normal::{normal_interval_mass, std_normal_pdf};
use super::quadrature::integrate;

// Beyond this the standard normal density underflows relative to the
// required accuracy.
const LATENT_CUTOFF: f64 = 38.0;

/// `P(a_lo < X <= a_hi, b_lo < Y <= b_hi)` for standard normal `(X, Y)`
/// with correlation `rho`, |rho| < 1. Integrates the conditional
/// probability of the `Y` interval against the density of `X`.
pub fn bivariate_normal_rect(rho: f64, a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    debug_assert!(rho.abs() < 1.0);
    if a_lo >= a_hi || b_lo >= b_hi {
        return 0.0;
    }
    if rho == 0.0 {
        return normal_interval_mass(a_lo, a_hi) * normal_interval_mass(b_lo, b_hi);
    }
    let lo = a_lo.max(-LATENT_CUTOFF);
    let hi = a_hi.min(LATENT_CUTOFF);
    if lo >= hi {
        return 0.0;
    }
    let s = (1.0 - rho * rho).sqrt();
    let integrand = |x: f64| {
        let m = rho * x;
        std_normal_pdf(x) * normal_interval_mass((b_lo - m) / s, (b_hi - m) / s)
    };
    integrate(integrand, lo, hi, 1e-12).clamp(0.0, 1.0)
}
