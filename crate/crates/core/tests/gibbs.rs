//! Law-level checks of the factor updates and the generators.

use nalgebra::DMatrix;
use qcopula::factor::{FactorState, Hyperparameters};
use qcopula::kernels::std_normal_cdf;
use qcopula::sim::{apply_an_missingness, AN_INTERCEPT, AN_SLOPE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn simulate_latents<R: Rng>(rng: &mut R, s: &FactorState) -> DMatrix<f64> {
    let (n, d) = (s.factors.nrows(), s.dim());
    DMatrix::from_fn(n, d, |i, j| {
        let e: f64 = rng.sample(StandardNormal);
        s.alpha[j] + s.loadings.row(j).dot(&s.factors.row(i)) + s.sigma2[j].sqrt() * e
    })
}

fn stats(s: &FactorState) -> [f64; 8] {
    [
        s.alpha[0],
        1.0 / s.sigma2[1],
        s.delta[0],
        s.delta[1],
        s.phi[(2, 1)],
        s.factors[(3, 0)],
        (s.loadings[(0, 0)] > 0.0) as u8 as f64,
        (s.loadings[(1, 1)].abs() < 0.5) as u8 as f64,
    ]
}

fn mean_and_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len() / batches * batches;
    let mean = xs[..n].iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let bm: Vec<f64> = xs[..n].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let var = bm.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Successive-conditional simulator: alternating fresh data given the
/// parameters with one sweep of updates must leave the prior invariant.
#[test]
fn getting_it_right() {
    let hyper = Hyperparameters { rank: Some(2), ..Default::default() };
    let (n, d) = (5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 200_000;
    let prior: Vec<[f64; 8]> =
        (0..draws).map(|_| stats(&FactorState::from_prior(&mut rng, n, d, &hyper, vec![true; d]))).collect();
    let mut state = FactorState::from_prior(&mut rng, n, d, &hyper, vec![true; d]);
    let mut chain = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = simulate_latents(&mut rng, &state);
        state.sweep(&mut rng, &z, &hyper).unwrap();
        chain.push(stats(&state));
    }
    let names = ["alpha", "1/sigma2", "delta1", "delta2", "phi", "eta", "P(lambda>0)", "P(|lambda|<0.5)"];
    for (s, name) in names.iter().enumerate() {
        let p: Vec<f64> = prior.iter().map(|x| x[s]).collect();
        let c: Vec<f64> = chain.iter().map(|x| x[s]).collect();
        let (mp, sp) = mean_and_se(&p, 100);
        let (mc, sc) = mean_and_se(&c, 100);
        let z = (mc - mp) / (sp * sp + sc * sc).sqrt();
        assert!(z.abs() < 4.5, "{name}: chain {mc:.4} ± {sc:.4}, prior {mp:.4} ± {sp:.4}");
    }
}

#[test]
fn global_shrinkage_grows_with_column_index() {
    let hyper = Hyperparameters { rank: Some(6), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 40_000;
    let mut sums = vec![0.0; 6];
    for _ in 0..draws {
        let s = FactorState::from_prior(&mut rng, 1, 6, &hyper, vec![false; 6]);
        for (h, x) in s.xi.iter().enumerate() {
            sums[h] += x.ln();
        }
    }
    // Log scale: E[ln ξ_h] = ψ(a₁) + (h − 1) ψ(a₂) with ψ(3) > 0.
    let means: Vec<f64> = sums.iter().map(|s| s / draws as f64).collect();
    for h in 1..6 {
        assert!(means[h] > means[h - 1], "{means:?}");
    }
    let digamma3 = 1.5 - 0.5772156649015329;
    assert!((means[1] - means[0] - digamma3).abs() < 0.02, "{means:?}");
}

#[test]
fn an_mask_follows_the_probit_law_per_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mask = apply_an_missingness(&mut rng, &y, AN_INTERCEPT, AN_SLOPE);
    let edges = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    for w in edges.windows(2) {
        let rows: Vec<usize> = (0..n).filter(|&i| y[i] > w[0] && y[i] <= w[1]).collect();
        let rate = rows.iter().filter(|&&i| mask[i]).count() as f64 / rows.len() as f64;
        let center = 0.5 * (w[0] + w[1]);
        let expected = std_normal_cdf(AN_INTERCEPT + AN_SLOPE * center);
        assert!((rate - expected).abs() < 0.03, "bin {w:?}: {rate} vs {expected}");
    }
    let overall = mask.iter().filter(|&&m| m).count() as f64 / n as f64;
    // Marginally Φ(a / √(1 + b²)) ≈ 0.380, "approximately 40%".
    let analytic = std_normal_cdf(AN_INTERCEPT / (1.0 + AN_SLOPE * AN_SLOPE).sqrt());
    assert!((overall - analytic).abs() < 0.005, "{overall} vs {analytic}");
    assert!((overall - 0.40).abs() < 0.025, "{overall}");
}
