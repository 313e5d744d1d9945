mod common;

use common::{central, mean_and_se, rng, two_group};
use hazrisk_core::group_diff::{
    estimate_group_difference, estimate_group_difference_curve, estimate_rho, group_terms, rho_bias, rho_variance, smooth_bias,
};
use hazrisk_core::local_fit::fit_local;
use hazrisk_core::relative_risk::PairLikTerms;
use hazrisk_core::survival::two_sample_partial_likelihood_mle;
use hazrisk_core::{Error, GroupDiffConfig, Kernel, LocalPolyFit, SurvivalDataset, SurvivalSample};
use rand::Rng;

fn brute_objective(data: &SurvivalDataset, terms: &PairLikTerms, rho: f64) -> f64 {
    let s = data.samples();
    let t = &terms.terms;
    let mut total = 0.0;
    for j in (0..s.len()).filter(|&j| s[j].event && t[j].k1 + t[j].k2 > 0.0) {
        let risk: f64 = (0..s.len())
            .filter(|&i| s[i].time >= s[j].time)
            .map(|i| t[i].eta.exp() * t[i].k1 + (rho + t[i].zeta).exp() * t[i].k2)
            .sum();
        total += t[j].k1 * t[j].eta + t[j].k2 * (rho + t[j].zeta) - (t[j].k1 + t[j].k2) * risk.ln();
    }
    total
}

fn per_group_fits(data: &SurvivalDataset, x: f64, degree: usize, h1: f64) -> (LocalPolyFit, LocalPolyFit) {
    let g1 = data.group_subset(1).unwrap();
    let g2 = data.group_subset(2).unwrap();
    (fit_local(&g1, x, degree, h1, Kernel::Epanechnikov).unwrap(), fit_local(&g2, x, degree, h1, Kernel::Epanechnikov).unwrap())
}

#[test]
fn whole_support_uniform_window_is_two_sample_likelihood() {
    let mut r = rng(40);
    for _ in 0..10 {
        let rho = r.random_range(-1.0..1.0);
        let data = two_group(&mut r, 200, rho, Some(3.0));
        let zero = LocalPolyFit::with_coefficients(0.0, 10.0, vec![0.0]);
        let est = estimate_rho(&data, 0.0, 1, 2, &zero, &zero, 10.0, Kernel::Uniform).unwrap();
        // same survival data with the group label as the covariate
        let relabelled = SurvivalDataset::new(
            data.samples().iter().map(|s| SurvivalSample::new(s.group.unwrap() as f64, s.time, s.event)).collect(),
        )
        .unwrap();
        let mle = two_sample_partial_likelihood_mle(&relabelled, 1.0, 2.0).unwrap();
        assert!((est - mle.alpha).abs() < 1e-8, "{est} vs {}", mle.alpha);
    }
}

#[test]
fn score_matches_finite_differences_and_is_concave() {
    let mut r = rng(41);
    for fixture in 0..20 {
        let data = two_group(&mut r, 400, 0.5, Some(3.0));
        let (f1, f2) = per_group_fits(&data, 0.1, 1, 0.4);
        let terms = group_terms(&data, 0.1, 1, 2, &f1, &f2, 0.32, Kernel::Epanechnikov).unwrap();
        if fixture < 1 {
            for _ in 0..10 {
                let rho = r.random_range(-3.0..3.0);
                let direct = brute_objective(&data, &terms, rho);
                assert!((terms.objective(&data, rho) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
                let fd = central(|t| brute_objective(&data, &terms, t), rho, 1e-5);
                let score = terms.score(&data, rho);
                assert!((fd - score).abs() <= 1e-6 * score.abs().max(1.0), "{fd} vs {score}");
            }
        }
        for k in 0..81 {
            let rho = -4.0 + 0.1 * k as f64;
            assert!(terms.second_derivative(&data, rho) <= 0.0);
        }
    }
}

#[test]
fn relabelling_negates_and_shift_is_invisible() {
    let data = two_group(&mut rng(42), 600, 0.7, Some(3.0));
    let (f1, f2) = per_group_fits(&data, -0.2, 1, 0.4);
    let forward = estimate_rho(&data, -0.2, 1, 2, &f1, &f2, 0.32, Kernel::Epanechnikov).unwrap();
    let backward = estimate_rho(&data, -0.2, 2, 1, &f2, &f1, 0.32, Kernel::Epanechnikov).unwrap();
    assert!((forward + backward).abs() < 1e-8);
    let terms = group_terms(&data, -0.2, 1, 2, &f1, &f2, 0.32, Kernel::Epanechnikov).unwrap();
    for c in [-5.0, 1.0, 17.0] {
        assert!((terms.shifted(c).maximize(&data).unwrap() - forward).abs() <= 1e-10);
    }
}

#[test]
fn bias_plug_in_examples() {
    let g1 = LocalPolyFit::with_coefficients(0.0, 0.6, vec![0.0, -1.0]);
    let g2 = LocalPolyFit::with_coefficients(0.0, 0.6, vec![0.0, 1.0]);
    let b = rho_bias(&g1, &g2, 1, 0.5, Kernel::Epanechnikov).unwrap();
    assert!((b - 0.1).abs() < 1e-15, "{b}");
    let halved = rho_bias(&g1, &g2, 1, 0.25, Kernel::Epanechnikov).unwrap();
    assert!((halved - b / 4.0).abs() < 1e-15);
    assert_eq!(rho_bias(&g2, &g2, 1, 0.5, Kernel::Epanechnikov).unwrap(), 0.0);
    assert!(rho_bias(&g1.truncated(1), &g2, 1, 0.5, Kernel::Epanechnikov).is_err());
}

#[test]
fn variance_examples() {
    // ten failures per group, all at the centre of the window
    let samples: Vec<SurvivalSample> =
        (0..20).map(|i| SurvivalSample::new(0.0, 1.0 + i as f64, true).with_group(1 + (i % 2) as i64)).collect();
    let data = SurvivalDataset::new(samples.clone()).unwrap();
    let h = 0.4;
    let mass = 10.0 * 0.75 / h / 20.0;
    let v = rho_variance(&data, 0.0, 1, 2, h, Kernel::Epanechnikov).unwrap();
    assert!((v - 2.0 * 0.6 / mass).abs() < 1e-12, "{v}");

    let doubled = SurvivalDataset::new(samples.iter().chain(&samples).copied().collect()).unwrap();
    let v2 = rho_variance(&doubled, 0.0, 1, 2, h, Kernel::Epanechnikov).unwrap();
    assert!((v2 - v).abs() < 1e-12);
    assert_eq!(rho_variance(&data, 0.0, 2, 1, h, Kernel::Epanechnikov).unwrap(), v);

    // censored rows only enter through n, so σ̂²/n is unchanged by dropping them
    let mut with_censored = samples.clone();
    with_censored.extend((0..7).map(|i| SurvivalSample::new(0.1, 0.5 + i as f64, false).with_group(1)));
    let data_c = SurvivalDataset::new(with_censored).unwrap();
    let vc = rho_variance(&data_c, 0.0, 1, 2, h, Kernel::Epanechnikov).unwrap();
    assert!((vc / 27.0 - v / 20.0).abs() < 1e-12);

    let one_sided = SurvivalDataset::new(samples.iter().map(|s| s.with_group(1)).collect::<Vec<_>>()).unwrap();
    assert!(matches!(rho_variance(&one_sided, 0.0, 1, 2, h, Kernel::Epanechnikov), Err(Error::StarvedGroup { label: 2 })));
}

#[test]
fn bias_smoothing_examples() {
    let grid: Vec<f64> = (0..2001).map(|k| -2.0 + 0.002 * k as f64).collect();
    let constant: Vec<(f64, f64)> = grid.iter().map(|&y| (y, 0.3)).collect();
    for x in [-2.0, -0.4, 1.99] {
        assert!((smooth_bias(&constant, x, 0.5, Kernel::Epanechnikov).unwrap() - 0.3).abs() < 1e-14);
    }
    let linear: Vec<(f64, f64)> = grid.iter().map(|&y| (y, 1.0 + 2.0 * y)).collect();
    let v = smooth_bias(&linear, 0.3, 0.5, Kernel::Epanechnikov).unwrap();
    assert!((v - 1.6).abs() < 1e-12, "{v}");
    let quadratic: Vec<(f64, f64)> = grid.iter().map(|&y| (y, y * y)).collect();
    let v = smooth_bias(&quadratic, 0.0, 1.0, Kernel::Epanechnikov).unwrap();
    assert!((v - 0.2).abs() < 1e-5, "{v}");
    assert!(smooth_bias(&constant, 5.0, 0.5, Kernel::Epanechnikov).is_err());
}

#[test]
fn estimate_recovers_constant_shift() {
    let cfg = GroupDiffConfig::new(0.3);
    let mut rhos = Vec::new();
    for rep in 0..200 {
        let data = two_group(&mut rng(20_000 + rep), 2000, 0.7, None);
        let est = estimate_group_difference(&data, 0.2, 1, 2, &cfg).unwrap();
        assert!(est.ci.0 <= est.rho_hat - est.bias_smoothed && est.rho_hat - est.bias_smoothed <= est.ci.1);
        assert!(est.counts.0 >= 1 && est.counts.1 >= 1);
        rhos.push(est.rho_hat);
    }
    let (mean, se) = mean_and_se(&rhos);
    assert!((mean - 0.7).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn null_groups_cover_zero() {
    let cfg = GroupDiffConfig::new(0.3);
    let reps = 200;
    let mut covered = 0;
    let mut rhos = Vec::new();
    for rep in 0..reps {
        let data = two_group(&mut rng(30_000 + rep), 1000, 0.0, Some(3.0));
        let est = estimate_group_difference(&data, -0.3, 1, 2, &cfg).unwrap();
        covered += (est.ci.0 <= 0.0 && 0.0 <= est.ci.1) as usize;
        rhos.push(est.rho_hat);
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.88..=0.99).contains(&rate), "{rate}");
    let (mean, se) = mean_and_se(&rhos);
    assert!(mean.abs() < 3.0 * se);
}

#[test]
fn curve_matches_pointwise_estimates() {
    let data = two_group(&mut rng(43), 1500, 0.4, Some(3.0));
    let cfg = GroupDiffConfig { smooth_bias: false, ..GroupDiffConfig::new(0.35) };
    let grid = [-0.5, 0.0, 0.5];
    let curve = estimate_group_difference_curve(&data, &grid, 1, 2, &cfg).unwrap();
    for (x, est) in grid.iter().zip(curve) {
        let single = estimate_group_difference(&data, *x, 1, 2, &cfg).unwrap();
        assert_eq!(est.unwrap(), single);
    }
    assert!(matches!(estimate_group_difference(&data, 0.0, 1, 3, &cfg), Err(Error::MissingGroup { label: 3 })));
}
