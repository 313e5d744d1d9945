//! Two-group fixture: `X ~ Uniform(−1, 1)`, group label 1 or 2 with equal
//! probability, `ψ(x, z) = x³ + ρ·I(z = 2)`.

use hazrisk_core::{GroupDiffConfig, Result, SurvivalDataset, SurvivalSample};
use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;

use crate::design::draw_failure_time;
use crate::study::{replication_rng, summarize_coverage, CoverageReport, IntervalDraw};

pub fn generate_two_group<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    censoring_scale: Option<f64>,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    let samples = (0..n)
        .map(|_| {
            let x = -1.0 + 2.0 * rng.sample::<f64, _>(Open01);
            let z = if rng.random_bool(0.5) { 2 } else { 1 };
            let psi = x * x * x + if z == 2 { rho } else { 0.0 };
            let t = draw_failure_time(psi, rng);
            let sample = match censoring_scale {
                Some(c) => {
                    let censor = c * rng.sample::<f64, _>(Open01);
                    SurvivalSample::new(x, t.min(censor), t <= censor)
                }
                None => SurvivalSample::new(x, t, true),
            };
            sample.with_group(z)
        })
        .collect();
    SurvivalDataset::new(samples)
}

/// Coverage of the interval for `ρ(x) = ψ(x, 2) − ψ(x, 1)`.
pub fn group_coverage(
    n: usize,
    reps: usize,
    rho: f64,
    x: f64,
    censoring_scale: Option<f64>,
    config: &GroupDiffConfig,
    seed: u64,
) -> crate::Result<CoverageReport> {
    let critical = hazrisk_core::normal::two_sided_critical(config.ci_level);
    let draws: Vec<Result<Option<IntervalDraw>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let data = generate_two_group(n, rho, censoring_scale, &mut rng)?;
            Ok(hazrisk_core::group_diff::estimate_group_difference(&data, x, 1, 2, config).ok().map(|e| IntervalDraw {
                estimate: e.rho_hat,
                bias: e.bias_smoothed,
                se: e.se_hat,
                ci: e.ci,
                critical,
            }))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize_coverage(rho, &draws))
}
