//! Marginal CDF recovery from latent draws: per-draw levels at
//! intermediate points, a monotone cubic interpolant through the known and
//! estimated knots, and its generalized inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::std_normal_cdf;
use crate::types::BinnedColumn;

/// Levels `Φ(max z)` at the upper edge of every bin whose upper edge is an
/// intermediate point, for bins holding at least one observation.
/// `z_obs` holds the current latents of the observed entries in the order
/// used to build `bins`.
pub fn estimate_levels(bins: &BinnedColumn, z_obs: &[f64]) -> Vec<(f64, f64)> {
    let mut max = vec![f64::NEG_INFINITY; bins.n_bins()];
    for (&q, &z) in bins.assignments().iter().zip(z_obs) {
        max[q] = max[q].max(z);
    }
    bins.bins()
        .iter()
        .zip(&max)
        .filter(|(b, m)| !b.hi_known && **m > f64::NEG_INFINITY)
        .map(|(b, &m)| (b.value_hi, std_normal_cdf(m)))
        .collect()
}

/// Monotone piecewise-cubic Hermite interpolant of a CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    values: Vec<f64>,
    levels: Vec<f64>,
    slopes: Vec<f64>,
}

/// Fits the interpolant through `knots` given as `(value, level)` pairs in
/// any order. Repeated values keep the largest level. Tangents are secant
/// averages limited per Fritsch and Carlson, with secant end slopes.
pub fn fit_monotone(knots: &[(f64, f64)]) -> Result<MarginalEstimate> {
    let mut sorted: Vec<(f64, f64)> = knots.to_vec();
    if sorted.iter().any(|(v, l)| !v.is_finite() || !l.is_finite()) {
        return Err(Error::Data("non-finite spline knot".into()));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut levels: Vec<f64> = Vec::with_capacity(sorted.len());
    for (v, l) in sorted {
        if values.last() == Some(&v) {
            *levels.last_mut().unwrap() = l;
        } else {
            values.push(v);
            levels.push(l);
        }
    }
    if values.len() < 2 {
        return Err(Error::TooFew { column: "spline".into(), count: values.len() });
    }
    if let Some(w) = levels.windows(2).zip(&values[1..]).find(|(w, _)| w[1] < w[0]) {
        return Err(Error::NonMonotoneKnots { value: *w.1 });
    }
    let n = values.len();
    let secant: Vec<f64> = (0..n - 1).map(|k| (levels[k + 1] - levels[k]) / (values[k + 1] - values[k])).collect();
    let mut slopes = vec![0.0; n];
    slopes[0] = secant[0];
    slopes[n - 1] = secant[n - 2];
    for k in 1..n - 1 {
        slopes[k] = if secant[k - 1] * secant[k] <= 0.0 { 0.0 } else { 0.5 * (secant[k - 1] + secant[k]) };
    }
    for k in 0..n - 1 {
        if secant[k] == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let a = slopes[k] / secant[k];
        let b = slopes[k + 1] / secant[k];
        let r = a * a + b * b;
        if r > 9.0 {
            let t = 3.0 / r.sqrt();
            slopes[k] = t * a * secant[k];
            slopes[k + 1] = t * b * secant[k];
        }
    }
    Ok(MarginalEstimate { values, levels, slopes })
}

impl MarginalEstimate {
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.levels.iter().copied())
    }

    pub fn lower(&self) -> f64 {
        self.values[0]
    }

    pub fn upper(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    fn segment(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x).saturating_sub(1).min(self.values.len() - 2)
    }

    /// Interpolated CDF, constant beyond the outer knots.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        if x <= self.values[0] {
            return self.levels[0];
        }
        if x >= self.values[n - 1] {
            return self.levels[n - 1];
        }
        let k = self.segment(x);
        let (lo, hi) = (self.levels[k], self.levels[k + 1]);
        // Flat pieces stay exactly flat; rounding would otherwise wobble by an ulp.
        if lo == hi {
            return lo;
        }
        let h = self.values[k + 1] - self.values[k];
        let t = (x - self.values[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * lo + h10 * h * self.slopes[k] + h01 * hi + h11 * h * self.slopes[k + 1];
        v.clamp(lo, hi)
    }

    fn derivative(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.values[k + 1] - self.values[k];
        let t = (x - self.values[k]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.levels[k] + d10 * self.slopes[k] + d01 * self.levels[k + 1] + d11 * self.slopes[k + 1]
    }

    /// Smallest `x` with `F(x) >= p`, found by bisection on the bracketing
    /// segment and polished with Newton steps that stay in the bracket.
    pub fn inverse(&self, p: f64) -> f64 {
        let n = self.values.len();
        if p <= self.levels[0] {
            return self.values[0];
        }
        if p >= self.levels[n - 1] {
            // First knot reaching the top level.
            let k = self.levels.partition_point(|&l| l < self.levels[n - 1]);
            return self.values[k];
        }
        let k = self.levels.partition_point(|&l| l < p) - 1;
        let (mut lo, mut hi) = (self.values[k], self.values[k + 1]);
        if self.levels[k + 1] == p {
            // Leftmost point of a possible flat run at level p.
            let first = self.levels.partition_point(|&l| l < p);
            return self.values[first];
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = self.eval(mid) - p;
            if f.abs() < 1e-12 || hi - lo < 1e-14 * (1.0 + mid.abs()) {
                lo = mid;
                hi = mid;
                break;
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-6 * (self.values[k + 1] - self.values[k]) {
                break;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..20 {
            let f = self.eval(x) - p;
            if f.abs() < 1e-13 {
                break;
            }
            let d = self.derivative(x);
            if d <= 0.0 {
                break;
            }
            let next = x - f / d;
            if !(next > self.values[k] && next < self.values[k + 1]) {
                break;
            }
            x = next;
        }
        x
    }
}

/// Generalized inverse of the estimate at level `p`. Discrete columns map
/// to the integer `x` with `F(x − 1) < p ≤ F(x)`.
pub fn inverse_eval(est: &MarginalEstimate, p: f64, discrete: bool) -> f64 {
    let x = est.inverse(p.clamp(0.0, 1.0));
    if !discrete {
        return x;
    }
    let lo = est.lower().ceil();
    let hi = est.upper().floor();
    let mut c = (x - 1e-9).ceil().clamp(lo, hi);
    // Guard the bracket against interpolation round-off.
    while c > lo && est.eval(c - 1.0) >= p {
        c -= 1.0;
    }
    while c < hi && est.eval(c) < p {
        c += 1.0;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{augment_with_intermediate, bin_values, validate_aux, AuxPoint, ColumnKind, ColumnSchema, MissingnessMode};

    #[test]
    fn two_knots_are_linear() {
        let e = fit_monotone(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!((e.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((e.eval(0.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exponential_grid_accuracy() {
        let xs = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];
        let knots: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0 - (-x as f64).exp())).collect();
        let e = fit_monotone(&knots).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=390 {
            let x = 0.1 + i as f64 * 0.01;
            worst = worst.max((e.eval(x) - (1.0 - (-x).exp())).abs());
        }
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn interpolates_knots_and_dedups() {
        let knots = [(3.0, 0.9), (0.0, 0.0), (1.0, 0.2), (1.0, 0.4), (2.0, 0.4), (5.0, 1.0)];
        let e = fit_monotone(&knots).unwrap();
        for (v, l) in [(0.0, 0.0), (1.0, 0.4), (2.0, 0.4), (3.0, 0.9), (5.0, 1.0)] {
            assert!((e.eval(v) - l).abs() < 1e-12);
        }
        // Flat between equal levels.
        assert!((e.eval(1.5) - 0.4).abs() < 1e-15);
        assert_eq!(e.knots().count(), 5);
    }

    #[test]
    fn decreasing_levels_rejected() {
        let e = fit_monotone(&[(0.0, 0.0), (1.0, 0.6), (2.0, 0.5), (3.0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::NonMonotoneKnots { value } if value == 2.0));
    }

    #[test]
    fn inverse_endpoints_and_round_trip() {
        let e = fit_monotone(&[(-2.0, 0.0), (0.0, 0.3), (1.0, 0.8), (4.0, 1.0)]).unwrap();
        assert_eq!(inverse_eval(&e, 0.0, false), -2.0);
        assert_eq!(inverse_eval(&e, 1.0, false), 4.0);
        for i in 1..200 {
            let x = -2.0 + 6.0 * i as f64 / 200.0;
            let back = inverse_eval(&e, e.eval(x), false);
            assert!((back - x).abs() < 1e-8 * (1.0 + x.abs()), "{x} {back}");
        }
    }

    #[test]
    fn inverse_of_flat_run_is_leftmost() {
        let e = fit_monotone(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.5), (3.0, 1.0)]).unwrap();
        assert_eq!(e.inverse(0.5), 1.0);
    }

    #[test]
    fn count_inverse_is_integer_bracket() {
        // Poisson-like CDF on 0..=6.
        let levels = [0.0, 0.2, 0.5, 0.7, 0.85, 0.95, 1.0];
        let knots: Vec<(f64, f64)> = levels.iter().enumerate().map(|(k, &l)| (k as f64, l)).collect();
        let e = fit_monotone(&knots).unwrap();
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = inverse_eval(&e, p, true);
            assert_eq!(x.fract(), 0.0);
            assert!((0.0..=6.0).contains(&x));
            assert!(e.eval(x) >= p);
            if x > 0.0 {
                assert!(e.eval(x - 1.0) < p, "p={p} x={x}");
            }
        }
    }

    #[test]
    fn estimated_levels_only_at_intermediate_edges() {
        let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
        let aux = validate_aux(&s, [(0.0, 0.0), (0.5, 5.0), (1.0, 10.0)].map(AuxPoint::from).to_vec()).unwrap();
        let obs = [1.0, 1.5, 3.0, 6.0, 9.5];
        let aug = augment_with_intermediate(&aux, &obs, &ColumnKind::Continuous, 4);
        let bins = bin_values(&aug, &obs).unwrap();
        let z = [-0.5, 0.1, 0.2, 0.4, 1.0];
        let levels = estimate_levels(&bins, &z);
        for (v, _) in &levels {
            assert!(aug.intermediate_values().contains(v));
        }
        // Candidate edges 3.125 and 7.375 survive; 5.25 bounds an empty bin.
        assert_eq!(levels, vec![(3.125, std_normal_cdf(0.2)), (7.375, std_normal_cdf(0.4))]);
    }
}
