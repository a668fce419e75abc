use super::*;
use crate::kernels::{std_normal_cdf, std_normal_quantile, truncnorm::truncated_normal_cdf, ConditionalMoments, TruncationInterval};
use crate::types::{build_bins, validate_aux, AuxPoint, ColumnSchema, MissingnessMode};
use nalgebra::dmatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn aux(schema: &ColumnSchema, e: &[(f64, f64)]) -> AuxiliaryQuantileSet {
    validate_aux(schema, e.iter().copied().map(AuxPoint::from).collect()).unwrap()
}

fn figure_one() -> AuxiliaryQuantileSet {
    let s = ColumnSchema::continuous("y", MissingnessMode::Modeled);
    aux(&s, &[(0.0, -5.0), (0.25, -2.0), (0.5, 0.0), (0.75, 3.0), (1.0, 5.0)])
}

fn null_state(n: usize, d: usize, free: Vec<bool>) -> FactorState {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = FactorState::initial(&mut rng, n, d, 1, free, DVector::zeros(d));
    s.loadings.fill(0.0);
    s
}

fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the one-sample KS statistic.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[test]
fn eql_bounds_figure_one() {
    let b = build_bins(&figure_one(), &[1.0, -3.0]).unwrap();
    let iv = eql_bounds(&b, 0);
    assert_eq!((iv.lo, iv.hi), (std_normal_quantile(0.5), std_normal_quantile(0.75)));
    let iv = eql_bounds(&b, 1);
    assert_eq!((iv.lo, iv.hi), (f64::NEG_INFINITY, std_normal_quantile(0.25)));
}

#[test]
fn eql_bounds_median_split() {
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let b = build_bins(&aux(&s, &[(0.0, 0.0), (0.5, 1.0), (1.0, 2.0)]), &[0.3, 1.7]).unwrap();
    assert_eq!(eql_bounds(&b, 0), TruncationInterval { lo: f64::NEG_INFINITY, hi: 0.0 });
    assert_eq!(eql_bounds(&b, 1), TruncationInterval { lo: 0.0, hi: f64::INFINITY });
}

#[test]
fn ehql_bounds_use_neighbor_extrema() {
    let aug = crate::types::AugmentedQuantiles::from(&figure_one());
    // Insert an intermediate point at −1 by binning against a hand-built set.
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let a = aux(&s, &[(0.0, -5.0), (0.25, -2.0), (0.5, 0.0), (0.75, 3.0), (1.0, 5.0)]);
    let aug2 = crate::types::augment_with_intermediate(&a, &[-1.5, -0.5], &crate::types::ColumnKind::Continuous, 2);
    assert_eq!(aug2.n_intermediate(), 1);
    let bins = crate::types::bin_values(&aug2, &[-1.5, -0.5]).unwrap();
    // Without neighbours the hybrid bound reduces to the known quantiles.
    let lone = crate::types::bin_values(&aug2, &[-1.5]).unwrap();
    let iv = ehql_bounds(&lone, &[-0.9], 0);
    assert_eq!((iv.lo, iv.hi), (std_normal_quantile(0.25), std_normal_quantile(0.5)));
    let z = [-0.3, -0.2];
    let iv = ehql_bounds(&bins, &z, 1);
    assert_eq!(iv.lo, -0.3);
    assert_eq!(iv.hi, 0.0);
    let iv = ehql_bounds(&bins, &z, 0);
    assert_eq!(iv.lo, std_normal_quantile(0.25));
    assert_eq!(iv.hi, (-0.2f64).next_down());
    assert_eq!(aug.n_bins(), 4);
}

#[test]
fn ehql_lower_bound_example() {
    // Known lower bound Φ⁻¹(0.25) against a neighbour maximum of 0.3.
    let known = std_normal_quantile(0.25);
    assert!((known + 0.674).abs() < 1e-3);
    assert_eq!(known.max(0.3), 0.3);
}

fn one_column(values: Vec<Option<f64>>, schema: ColumnSchema) -> Dataset {
    Dataset::new(vec![schema], vec![values]).unwrap()
}

#[test]
fn median_only_eql_draws_are_half_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let values: Vec<Option<f64>> = (0..4000).map(|i| Some(if i % 2 == 0 { 0.25 } else { 0.75 })).collect();
    let data = one_column(values, s.clone());
    let margin = ColumnMargin::aux(aux(&s, &[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]));
    let mut ls = LatentSampler::new(&data, &[margin], LikelihoodMode::Eql, 20).unwrap();
    let state = null_state(4000, 1, vec![false]);
    let (mut z, _) = ls.initial();
    ls.update(&mut rng, &state, &mut z).unwrap();
    let (pos, neg): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
        z.column(0).iter().copied().enumerate().partition(|(i, _)| i % 2 == 1);
    assert!(pos.iter().all(|p| p.1 > 0.0) && neg.iter().all(|p| p.1 <= 0.0));
    let pos: Vec<f64> = pos.into_iter().map(|p| p.1).collect();
    let d = ks_stat(pos, |x| 2.0 * std_normal_cdf(x) - 1.0);
    assert!(d < ks_critical(2000), "{d}");
}

#[test]
fn full_marginal_latents_stay_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = ColumnSchema::continuous("y", MissingnessMode::Modeled);
    let m = Marginal::Gamma { shape: 1.0, scale: 1.0 };
    let data = one_column(vec![Some(2f64.ln()), None, Some(1.0)], s);
    let mut ls = LatentSampler::new(&data, &[ColumnMargin::known(m)], LikelihoodMode::FullMarginal, 20).unwrap();
    let (mut z, _) = ls.initial();
    assert!(z[(0, 0)].abs() < 1e-15);
    let state = null_state(3, 2, vec![false, true]);
    for _ in 0..5 {
        ls.update(&mut rng, &state, &mut z).unwrap();
    }
    assert!(z[(0, 0)].abs() < 1e-15);
    assert!((z[(2, 0)] - std_normal_quantile(1.0 - (-1.0f64).exp())).abs() < 1e-12);
    // Indicator signs.
    assert!(z[(1, 1)] > 0.0 && z[(0, 1)] <= 0.0 && z[(2, 1)] <= 0.0);
}

#[test]
fn full_marginal_rejects_count_and_missing_cdf() {
    let s = ColumnSchema::count("c", MissingnessMode::Mcar);
    let data = one_column(vec![Some(1.0)], s);
    let e = LatentSampler::new(&data, &[ColumnMargin::default()], LikelihoodMode::FullMarginal, 20).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let data = one_column(vec![Some(1.0)], s);
    let e = LatentSampler::new(&data, &[ColumnMargin::default()], LikelihoodMode::Eql, 20).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
}

#[test]
fn missing_latents_follow_the_prior_under_independence() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let data = one_column(vec![None; 5000], s.clone());
    let margin = ColumnMargin::aux(aux(&s, &[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]));
    let mut ls = LatentSampler::new(&data, &[margin], LikelihoodMode::Ehql, 20).unwrap();
    let state = null_state(5000, 1, vec![false]);
    let (mut z, _) = ls.initial();
    ls.update(&mut rng, &state, &mut z).unwrap();
    let d = ks_stat(z.column(0).iter().copied().collect(), std_normal_cdf);
    assert!(d < ks_critical(5000), "{d}");
}

#[test]
fn indicators_with_very_negative_intercept() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s = ColumnSchema::binary("b", MissingnessMode::Modeled);
    let data = one_column(vec![Some(1.0); 2000], s);
    let mut ls = LatentSampler::new(&data, &[ColumnMargin::default()], LikelihoodMode::Eql, 20).unwrap();
    let (mut z, _) = ls.initial();
    let mut state = null_state(2000, 2, vec![true, true]);
    state.alpha[1] = -4.0;
    ls.update(&mut rng, &state, &mut z).unwrap();
    let r: Vec<f64> = z.column(1).iter().copied().collect();
    assert!(r.iter().all(|&x| x <= 0.0));
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    assert!((mean + 4.0).abs() < 0.1, "{mean}");
    assert!(z.column(0).iter().all(|&x| x > 0.0));
}

#[test]
fn empty_dataset_is_a_no_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let s = ColumnSchema::continuous("y", MissingnessMode::Modeled);
    let data = one_column(vec![], s.clone());
    let margin = ColumnMargin::aux(aux(&s, &[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]));
    let mut ls = LatentSampler::new(&data, &[margin.clone()], LikelihoodMode::Ehql, 20).unwrap();
    let (mut z, _) = ls.initial();
    ls.update(&mut rng, &null_state(0, 2, vec![false, true]), &mut z).unwrap();
    assert_eq!(z.nrows(), 0);
    let out = run_chain(&data, &[margin], &ChainConfig { iters: 3, burnin: 0, ..Default::default() }).unwrap();
    assert_eq!(out.draws.len(), 3);
}

fn categorical_data(cells: Vec<Option<f64>>, levels: usize) -> Dataset {
    let names = (0..levels).map(|c| format!("l{c}")).collect();
    one_column(cells, ColumnSchema::categorical("g", names).unwrap())
}

#[test]
fn observed_category_sets_its_orthant() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let data = categorical_data(vec![Some(1.0); 50], 4);
    let mut ls = LatentSampler::new(&data, &[ColumnMargin::default()], LikelihoodMode::Eql, 20).unwrap();
    let (mut z, _) = ls.initial();
    ls.update(&mut rng, &null_state(50, 4, vec![true; 4]), &mut z).unwrap();
    for i in 0..50 {
        assert!(z[(i, 1)] > 0.0);
        assert!(z[(i, 0)] <= 0.0 && z[(i, 2)] <= 0.0 && z[(i, 3)] <= 0.0);
    }
}

#[test]
fn symmetric_categorical_probabilities_are_uniform() {
    let cell = vec![ConditionalMoments::new(0.3, 0.8); 5];
    for p in categorical_probabilities(&cell) {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn two_level_predictive_matches_probit() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let data = categorical_data(vec![None; 10_000], 2);
    let mut ls = LatentSampler::new(&data, &[ColumnMargin::default()], LikelihoodMode::Eql, 20).unwrap();
    let (mut z, _) = ls.initial();
    let mut state = null_state(10_000, 2, vec![true; 2]);
    state.alpha[0] = 0.4;
    state.alpha[1] = -0.3;
    ls.update(&mut rng, &state, &mut z).unwrap();
    let levels = &ls.missing_values(&z)[0];
    let freq0 = levels.iter().filter(|&&c| c == 0.0).count() as f64 / 1e4;
    // Unit scales under zero loadings and unit variances.
    let (p0, p1) = (std_normal_cdf(0.4), std_normal_cdf(-0.3));
    let w0 = p0 * (1.0 - p1);
    let w1 = p1 * (1.0 - p0);
    assert!((freq0 - w0 / (w0 + w1)).abs() < 0.02, "{freq0} vs {}", w0 / (w0 + w1));
    for (i, &c) in levels.iter().enumerate() {
        let lvl = c as usize;
        assert!(z[(i, lvl)] > 0.0 && z[(i, 1 - lvl)] <= 0.0);
    }
}

fn mixed_dataset(rng: &mut ChaCha8Rng, n: usize) -> (Dataset, Vec<ColumnMargin>) {
    let sx = ColumnSchema::continuous("x", MissingnessMode::Modeled);
    let sc = ColumnSchema::count("c", MissingnessMode::Mcar);
    let sb = ColumnSchema::binary("b", MissingnessMode::Mcar);
    let sg = ColumnSchema::categorical("g", vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let mut cols = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..n {
        let u: f64 = StandardNormal.sample(rng);
        let v: f64 = StandardNormal.sample(rng);
        let x = u;
        cols[0].push(if u + v > 1.0 { None } else { Some(x.clamp(-4.0, 4.0)) });
        cols[1].push(if rng.random::<f64>() < 0.1 { None } else { Some(((u + 0.5 * v).abs() * 2.0).floor().min(9.0)) });
        cols[2].push(if rng.random::<f64>() < 0.1 { None } else { Some(if v > 0.0 { 1.0 } else { 0.0 }) });
        cols[3].push(if rng.random::<f64>() < 0.1 { None } else { Some(rng.random_range(0..3) as f64) });
    }
    let data = Dataset::new(vec![sx.clone(), sc.clone(), sb, sg], cols).unwrap();
    let margins = vec![
        ColumnMargin::aux(aux(&sx, &[(0.0, -4.0), (0.25, -0.674), (0.5, 0.0), (0.75, 0.674), (1.0, 4.0)])),
        ColumnMargin::aux(aux(&sc, &[(0.0, 0.0), (0.4, 1.0), (0.8, 3.0), (1.0, 9.0)])),
        ColumnMargin::default(),
        ColumnMargin::default(),
    ];
    (data, margins)
}

#[test]
fn restrictions_hold_after_every_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (data, margins) = mixed_dataset(&mut rng, 300);
    for mode in [LikelihoodMode::Eql, LikelihoodMode::Ehql] {
        let mut ls = LatentSampler::new(&data, &margins, mode, 20).unwrap();
        let layout = ls.layout().clone();
        let (mut z, alpha) = ls.initial();
        let d = layout.dim();
        let mut state = FactorState::initial(&mut rng, 300, d, d, layout.free_intercepts(), alpha);
        let hyper = Hyperparameters::default();
        for _ in 0..30 {
            state.sweep(&mut rng, &z, &hyper).unwrap();
            ls.update(&mut rng, &state, &mut z).unwrap();
            for j in 0..2 {
                let (bins, rows) = ls.binned(j).unwrap();
                let lat = layout.study(j).start;
                for (e, &i) in rows.iter().enumerate() {
                    // Interval compliance.
                    let b = bins.bin(bins.bin_of_entry(e));
                    let p = std_normal_cdf(z[(i, lat)]);
                    assert!(p >= b.tau_lo && p <= b.tau_hi, "{p} not in ({}, {}]", b.tau_lo, b.tau_hi);
                }
                if mode == LikelihoodMode::Ehql {
                    // Order preservation across bins.
                    let mut by_bin: Vec<(usize, f64)> =
                        rows.iter().enumerate().map(|(e, &i)| (bins.bin_of_entry(e), z[(i, lat)])).collect();
                    by_bin.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                    for w in by_bin.windows(2) {
                        if w[0].0 < w[1].0 {
                            assert!(w[0].1 < w[1].1);
                        }
                    }
                }
            }
            let r = layout.indicator(0).unwrap();
            for i in 0..300 {
                assert_eq!(z[(i, r)] > 0.0, data.is_missing(i, 0));
            }
            let g = layout.study(3);
            for i in 0..300 {
                assert_eq!(g.clone().filter(|&l| z[(i, l)] > 0.0).count(), 1);
            }
        }
    }
}

#[test]
fn zero_iterations_keep_only_initialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (data, margins) = mixed_dataset(&mut rng, 50);
    let out = run_chain(&data, &margins, &ChainConfig { iters: 0, burnin: 0, ..Default::default() }).unwrap();
    assert!(out.draws.is_empty() && out.imputations.is_empty());
    assert_eq!(out.initial.sweep, 0);
    assert_eq!(out.mean_correlation(), out.initial.correlation);
}

#[test]
fn same_seed_same_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (data, margins) = mixed_dataset(&mut rng, 80);
    let cfg = ChainConfig { iters: 40, burnin: 20, thin: 2, seed: 9, ..Default::default() };
    let a = run_chain(&data, &margins, &cfg).unwrap();
    let b = run_chain(&data, &margins, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.draws.len(), 10);
    assert_eq!(a.draws[0].sweep, 22);
    let c = run_chain(&data, &margins, &ChainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws[9].correlation, c.draws[9].correlation);
    for d in &a.draws {
        assert!(d.correlation.diagonal().iter().all(|&x| x == 1.0));
    }
}

#[test]
fn config_validation() {
    assert!(ChainConfig { iters: 10, burnin: 10, ..Default::default() }.validate().is_err());
    assert!(ChainConfig { thin: 0, ..Default::default() }.validate().is_err());
    assert!(ChainConfig::default().validate().is_ok());
    assert_eq!(ChainConfig::default().retained(), 2500);
    assert_eq!("EHQL".parse::<LikelihoodMode>().unwrap(), LikelihoodMode::Ehql);
    assert_eq!("full".parse::<LikelihoodMode>().unwrap(), LikelihoodMode::FullMarginal);
    assert!("rl".parse::<LikelihoodMode>().is_err());
}

#[test]
fn factor_and_dense_latent_updates_share_a_stationary_law() {
    // Fixed Λ and Σ: alternating factor and latent draws targets the same
    // truncated law as single-site updates under the induced correlation.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sx = ColumnSchema::continuous("x", MissingnessMode::Modeled);
    let sy = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let a = aux(&sx, &[(0.0, -3.0), (0.3, -0.5), (0.7, 0.5), (1.0, 3.0)]);
    let values = |k: usize| [Some(-1.0), Some(0.0), Some(2.0), None][k % 4];
    let cols = vec![(0..4).map(values).collect(), (0..4).map(|k| values(k + 1)).collect()];
    let data = Dataset::new(vec![sx, sy], cols).unwrap();
    let margins = vec![ColumnMargin::aux(a.clone()), ColumnMargin::aux(a)];
    let mut ls = LatentSampler::new(&data, &margins, LikelihoodMode::Eql, 20).unwrap();
    let (z0, _) = ls.initial();
    let mut state = null_state(4, 3, vec![false, false, true]);
    state.loadings = dmatrix![0.8; -0.5; 0.6];
    state.sigma2 = DVector::from_vec(vec![0.5, 1.0, 0.7]);
    state.alpha[2] = -0.3;
    let cond = DenseConditional::new(&state.correlation(), &state.standardized_alpha()).unwrap();
    let intervals = ls.static_intervals().unwrap();
    let sweeps = 60_000;
    let (mut za, mut zb, mut zc) = (z0.clone(), z0.clone(), z0);
    let (mut sa, mut sb, mut sc) = (DMatrix::zeros(4, 3), DMatrix::zeros(4, 3), DMatrix::zeros(4, 3));
    let scales = state.scales();
    for _ in 0..sweeps {
        // Factors given the latents on the factor-model scale.
        let mut work = za.clone();
        for (j, mut col) in work.column_iter_mut().enumerate() {
            col *= scales[j];
        }
        state.update_factors(&mut rng, &work).unwrap();
        ls.update(&mut rng, &state, &mut za).unwrap();
        dense_latent_sweep(&mut rng, &cond, &mut zb, &intervals);
        ls.update_with(&mut rng, &cond, &mut zc).unwrap();
        sa += &za;
        sb += &zb;
        sc += &zc;
    }
    let diff = (&sa - &sb).abs().max() / sweeps as f64;
    assert!(diff < 0.03, "{diff}");
    let diff = (sc - sb).abs().max() / sweeps as f64;
    assert!(diff < 0.03, "{diff}");
}

#[test]
fn truncated_law_of_a_bin_draw() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let s = ColumnSchema::continuous("y", MissingnessMode::Mcar);
    let data = one_column(vec![Some(1.0); 3000], s);
    let mut ls = LatentSampler::new(&data, &[ColumnMargin::aux(figure_one())], LikelihoodMode::Eql, 20).unwrap();
    let (mut z, _) = ls.initial();
    let mut state = null_state(3000, 1, vec![false]);
    state.sigma2[0] = 1.0;
    ls.update(&mut rng, &state, &mut z).unwrap();
    let iv = TruncationInterval { lo: std_normal_quantile(0.5), hi: std_normal_quantile(0.75) };
    let m = ConditionalMoments::new(0.0, 1.0);
    let d = ks_stat(z.column(0).iter().copied().collect(), |x| truncated_normal_cdf(x, m, iv));
    assert!(d < ks_critical(3000), "{d}");
}
