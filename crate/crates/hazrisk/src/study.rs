//! Monte Carlo comparison of the integrated-derivative curve and the
//! two-step relative-risk curve.
//!
//! Replication `r` draws from a ChaCha stream keyed by `(seed, r)` and
//! results are folded in replication order, so reports do not depend on the
//! number of worker threads.

use std::time::Instant;

use hazrisk_core::grid::{linspace, trapezoid_weights};
use hazrisk_core::local_fit::{fit_local, integrate_derivative, DerivativeCurve};
use hazrisk_core::relative_risk::{estimate_alpha, estimate_relative_risk};
use hazrisk_core::{Kernel, RelRiskConfig, SurvivalDataset, VariableBandwidthRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::censoring::{calibrate_censoring, DEFAULT_TOLERANCE};
use crate::design::{generate_replication, DesignSpec};
use crate::{HazriskError, Result};

/// Generator for replication `rep` of a study seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Runs `f` on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| HazriskError::Internal(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub design: DesignSpec,
    pub n: usize,
    pub reps: usize,
    /// Target censoring proportion; 0 disables censoring.
    pub censoring_target: f64,
    pub h0: f64,
    pub grid_points: usize,
    pub seed: u64,
    /// Degree of the second-step offsets.
    pub p: usize,
    /// Degree of the first-step fits, which also produce the integrated
    /// curve.
    pub p1: usize,
    /// Second-step bandwidth as a multiple of the local first-step one.
    pub second_step_ratio: f64,
    pub kernel: Kernel,
    /// A replication is dropped when either curve has fewer successful
    /// grid points than this share.
    pub min_success_share: f64,
    /// The study aborts when more than this share of replications is
    /// dropped.
    pub max_failure_share: f64,
    /// Also estimate bias-corrected interval coverage of `α(anchor, x)`.
    pub coverage_point: Option<f64>,
}

impl SimulationConfig {
    pub fn new(design: DesignSpec, h0: f64, censoring_target: f64, seed: u64) -> Self {
        SimulationConfig {
            design,
            n: 300,
            reps: 500,
            censoring_target,
            h0,
            grid_points: 101,
            seed,
            p: 1,
            p1: 1,
            second_step_ratio: 0.8,
            kernel: Kernel::Epanechnikov,
            min_success_share: 0.9,
            max_failure_share: 0.1,
            coverage_point: None,
        }
    }
}

/// Evaluation grid with the anchor snapped onto its nearest node.
pub fn evaluation_grid(design: &DesignSpec, points: usize) -> (Vec<f64>, usize) {
    let (lo, hi) = design.covariate_law.support();
    let mut grid = linspace(lo, hi, points);
    let anchor_index = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - design.anchor).abs().total_cmp(&(b.1 - design.anchor).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    grid[anchor_index] = design.anchor;
    (grid, anchor_index)
}

/// What an estimator sees for one replication.
pub struct StudyContext<'a> {
    pub config: &'a SimulationConfig,
    pub grid: &'a [f64],
    pub anchor_index: usize,
    pub rule: &'a VariableBandwidthRule,
}

/// Both anchored curves on the evaluation grid; `None` marks a failed point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePair {
    pub fgk: Vec<Option<f64>>,
    pub new: Vec<Option<f64>>,
}

pub trait CurveEstimator: Sync {
    fn estimate(&self, data: &SurvivalDataset, ctx: &StudyContext<'_>) -> CurvePair;
}

/// The integrated-derivative curve and the two-step curve, sharing the
/// first-step fits.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoStepEstimators;

impl CurveEstimator for TwoStepEstimators {
    fn estimate(&self, data: &SurvivalDataset, ctx: &StudyContext<'_>) -> CurvePair {
        let cfg = ctx.config;
        let fits: Vec<_> = ctx.grid.iter().map(|&x| fit_local(data, x, cfg.p1, ctx.rule.bandwidth_at(x), cfg.kernel)).collect();
        let curve = DerivativeCurve { grid: ctx.grid.to_vec(), fits };
        let fgk = match integrate_derivative(&curve, cfg.design.anchor) {
            Ok(integrated) => integrated.values,
            Err(_) => vec![None; ctx.grid.len()],
        };
        let anchor = cfg.design.anchor;
        let new = match &curve.fits[ctx.anchor_index] {
            Ok(anchor_fit) => ctx
                .grid
                .iter()
                .zip(&curve.fits)
                .enumerate()
                .map(|(k, (&x, fit))| {
                    if k == ctx.anchor_index {
                        return Some(0.0);
                    }
                    let fit = fit.as_ref().ok()?;
                    let h = cfg.second_step_ratio * ctx.rule.bandwidth_at(x);
                    estimate_alpha(data, anchor, x, &anchor_fit.truncated(cfg.p), &fit.truncated(cfg.p), h, cfg.kernel).ok()
                })
                .collect(),
            Err(_) => vec![None; ctx.grid.len()],
        };
        CurvePair { fgk, new }
    }
}

/// Returns the true anchored curve for both methods.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruthInjection;

impl CurveEstimator for TruthInjection {
    fn estimate(&self, _data: &SurvivalDataset, ctx: &StudyContext<'_>) -> CurvePair {
        let truth: Vec<Option<f64>> = ctx
            .grid
            .iter()
            .enumerate()
            .map(|(k, &x)| Some(if k == ctx.anchor_index { 0.0 } else { ctx.config.design.truth(x) }))
            .collect();
        CurvePair { fgk: truth.clone(), new: truth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointMse {
    pub x: f64,
    pub fgk: f64,
    pub new: f64,
}

/// Mean of the estimated curves over kept replications at one grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCurvePoint {
    pub x: f64,
    pub truth: f64,
    pub fgk: f64,
    pub new: f64,
}

/// Per-replication summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub censored_share: f64,
    pub failed_points_fgk: usize,
    pub failed_points_new: usize,
    pub kept: bool,
    pub ise_fgk: Option<f64>,
    pub ise_new: Option<f64>,
    /// Bias-corrected interval at the coverage point covered the truth.
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub design: Option<u8>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub h0: f64,
    pub censoring_target: f64,
    pub censoring_scale: Option<f64>,
    pub empirical_censoring: f64,
    pub grid_points: usize,
    pub anchor: f64,
    pub mise_fgk: f64,
    pub mise_new: f64,
    /// Monte Carlo standard errors of the two MISE values.
    pub mise_se_fgk: f64,
    pub mise_se_new: f64,
    /// Pointwise MSE at `−1, −0.8, …, 1`.
    pub mse_by_point: Vec<PointMse>,
    pub coverage: Option<f64>,
    pub rep_failures: usize,
    /// Grid points that failed in kept replications.
    pub point_failures_fgk: usize,
    pub point_failures_new: usize,
    /// Pointwise MSE on the whole evaluation grid.
    #[serde(skip)]
    pub mse_curve: Vec<PointMse>,
    #[serde(skip)]
    pub mean_curve: Vec<MeanCurvePoint>,
    #[serde(skip)]
    pub replications: Vec<RepRecord>,
    /// Wall-clock seconds; left out of JSON so reports are reproducible.
    #[serde(skip)]
    pub runtime: f64,
}

struct RepOutcome {
    record: RepRecord,
    curves: CurvePair,
    sq_fgk: Vec<Option<f64>>,
    sq_new: Vec<Option<f64>>,
}

fn squared_errors(curve: &[Option<f64>], truth: &[f64]) -> Vec<Option<f64>> {
    curve.iter().zip(truth).map(|(v, t)| v.map(|v| (v - t) * (v - t))).collect()
}

/// `∫ e(x)² dx` over the grid span by the trapezoid rule. Failed points are
/// dropped and the remaining weights rescaled to the full span.
fn integrated_error(squared: &[Option<f64>], weights: &[f64], span: f64) -> Option<f64> {
    let (sum, mass) = squared
        .iter()
        .zip(weights)
        .filter_map(|(e, w)| e.map(|e| (e * w, *w)))
        .fold((0.0, 0.0), |(s, m), (ew, w)| (s + ew, m + w));
    (mass > 0.0).then(|| span * sum / mass)
}

fn coverage_check(data: &SurvivalDataset, config: &SimulationConfig, x2: f64) -> Option<bool> {
    let anchor = config.design.anchor;
    let mut rr = RelRiskConfig::new(config.h0);
    rr.h = config.second_step_ratio * config.h0;
    rr.kernel = config.kernel;
    let est = estimate_relative_risk(data, anchor, x2, &rr).ok()?;
    let truth = config.design.truth(x2);
    Some(est.ci.0 <= truth && truth <= est.ci.1)
}

/// Runs every replication on the current rayon pool.
pub fn run_study(config: &SimulationConfig, estimator: &impl CurveEstimator) -> Result<SimulationReport> {
    let started = Instant::now();
    if config.n == 0 || config.reps == 0 {
        return Err(HazriskError::Argument("n and reps must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.censoring_target) {
        return Err(HazriskError::Argument(format!("censoring target {} outside [0, 1)", config.censoring_target)));
    }
    let design = &config.design;
    let (lo, hi) = design.covariate_law.support();
    if !(design.anchor >= lo && design.anchor <= hi) {
        return Err(HazriskError::Argument(format!("anchor {} outside the covariate support", design.anchor)));
    }
    let censoring_scale = if config.censoring_target > 0.0 {
        Some(calibrate_censoring(design, config.censoring_target, DEFAULT_TOLERANCE)?)
    } else {
        None
    };
    let rule = design.bandwidth_rule(config.h0)?;
    let (grid, anchor_index) = evaluation_grid(design, config.grid_points);
    let truth: Vec<f64> = grid.iter().enumerate().map(|(k, &x)| if k == anchor_index { 0.0 } else { design.truth(x) }).collect();
    let ctx = StudyContext { config, grid: &grid, anchor_index, rule: &rule };
    let weights = trapezoid_weights(&grid);
    let span = grid[grid.len() - 1] - grid[0];
    let min_points = (config.min_success_share * grid.len() as f64).ceil() as usize;

    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(config.seed, rep as u64);
            let data = generate_replication(design, config.n, censoring_scale, &mut rng)?;
            let censored_share = 1.0 - data.n_failures() as f64 / data.len() as f64;
            let curves = estimator.estimate(&data, &ctx);
            let sq_fgk = squared_errors(&curves.fgk, &truth);
            let sq_new = squared_errors(&curves.new, &truth);
            let ok_fgk = sq_fgk.iter().flatten().count();
            let ok_new = sq_new.iter().flatten().count();
            let kept = ok_fgk >= min_points && ok_new >= min_points;
            let covered = config.coverage_point.and_then(|x2| coverage_check(&data, config, x2));
            let record = RepRecord {
                rep,
                censored_share,
                failed_points_fgk: grid.len() - ok_fgk,
                failed_points_new: grid.len() - ok_new,
                kept,
                ise_fgk: if kept { integrated_error(&sq_fgk, &weights, span) } else { None },
                ise_new: if kept { integrated_error(&sq_new, &weights, span) } else { None },
                covered,
            };
            Ok(RepOutcome { record, curves, sq_fgk, sq_new })
        })
        .collect();

    let mut replications = Vec::with_capacity(config.reps);
    let mut ise = (Vec::new(), Vec::new());
    let m = grid.len();
    let mut sums = (vec![0.0; m], vec![0.0; m]);
    let mut level = (vec![0.0; m], vec![0.0; m]);
    let mut counts = (vec![0usize; m], vec![0usize; m]);
    let mut point_failures = (0, 0);
    let mut censored_total = 0.0;
    let (mut covered, mut coverage_trials) = (0usize, 0usize);
    for outcome in outcomes {
        let RepOutcome { record, curves, sq_fgk, sq_new } = outcome?;
        censored_total += record.censored_share;
        if let Some(c) = record.covered {
            coverage_trials += 1;
            covered += c as usize;
        }
        if record.kept {
            ise.0.extend(record.ise_fgk);
            ise.1.extend(record.ise_new);
            point_failures.0 += record.failed_points_fgk;
            point_failures.1 += record.failed_points_new;
            for k in 0..m {
                if let (Some(v), Some(c)) = (sq_fgk[k], curves.fgk[k]) {
                    sums.0[k] += v;
                    level.0[k] += c;
                    counts.0[k] += 1;
                }
                if let (Some(v), Some(c)) = (sq_new[k], curves.new[k]) {
                    sums.1[k] += v;
                    level.1[k] += c;
                    counts.1[k] += 1;
                }
            }
        }
        replications.push(record);
    }
    let rep_failures = replications.iter().filter(|r| !r.kept).count();
    let limit = (config.max_failure_share * config.reps as f64).floor() as usize;
    if rep_failures > limit {
        let dropped: Vec<&RepRecord> = replications.iter().filter(|r| !r.kept).collect();
        let worst_fgk = dropped.iter().map(|r| r.failed_points_fgk).max().unwrap_or(0);
        let worst_new = dropped.iter().map(|r| r.failed_points_new).max().unwrap_or(0);
        let mut weak: Vec<String> = (0..m)
            .filter(|&k| counts.0[k].min(counts.1[k]) < config.reps - rep_failures)
            .map(|k| format!("{:.2}", grid[k]))
            .collect();
        weak.truncate(8);
        return Err(HazriskError::TooManyFailures {
            failed: rep_failures,
            reps: config.reps,
            limit,
            detail: format!(
                "dropped replications lost up to {worst_fgk} (FGK) and {worst_new} (new) of {m} grid points; \
                 points failing in kept replications: [{}]",
                weak.join(", ")
            ),
        });
    }
    let ratio = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    let mse_curve: Vec<PointMse> =
        (0..m).map(|k| PointMse { x: grid[k], fgk: ratio(sums.0[k], counts.0[k]), new: ratio(sums.1[k], counts.1[k]) }).collect();
    let mean_curve: Vec<MeanCurvePoint> = (0..m)
        .map(|k| MeanCurvePoint {
            x: grid[k],
            truth: truth[k],
            fgk: ratio(level.0[k], counts.0[k]),
            new: ratio(level.1[k], counts.1[k]),
        })
        .collect();
    let mse_by_point = report_points(&grid, &mse_curve);
    let (mise_fgk, mise_se_fgk) = mean_and_se(&ise.0);
    let (mise_new, mise_se_new) = mean_and_se(&ise.1);

    Ok(SimulationReport {
        design: design.id.map(|d| d.number()),
        n: config.n,
        reps: config.reps,
        seed: config.seed,
        h0: config.h0,
        censoring_target: config.censoring_target,
        censoring_scale,
        empirical_censoring: censored_total / config.reps as f64,
        grid_points: m,
        anchor: design.anchor,
        mise_fgk,
        mise_new,
        mise_se_fgk,
        mise_se_new,
        mse_by_point,
        coverage: (coverage_trials > 0).then(|| covered as f64 / coverage_trials as f64),
        rep_failures,
        point_failures_fgk: point_failures.0,
        point_failures_new: point_failures.1,
        mse_curve,
        mean_curve,
        replications,
        runtime: started.elapsed().as_secs_f64(),
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Reporting points `−1, −0.8, …, 1` (or the anchor when it replaced one),
/// looked up on the grid.
fn report_points(grid: &[f64], curve: &[PointMse]) -> Vec<PointMse> {
    (0..=10)
        .filter_map(|k| {
            let x = -1.0 + 0.2 * k as f64;
            let (idx, g) = grid.iter().enumerate().min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))?;
            ((g - x).abs() < 1e-9).then(|| PointMse { x: *g, ..curve[idx] })
        })
        .collect()
}

/// Coverage of bias-corrected intervals over repeated samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub truth: f64,
    pub reps: usize,
    pub failures: usize,
    pub coverage: f64,
    pub coverage_uncorrected: f64,
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub mean_se: f64,
}

/// One interval: estimate, bias estimate, standard error, interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalDraw {
    pub estimate: f64,
    pub bias: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub critical: f64,
}

/// Folds interval draws (in replication order) into a coverage report.
pub fn summarize_coverage(truth: f64, draws: &[Option<IntervalDraw>]) -> CoverageReport {
    let ok: Vec<&IntervalDraw> = draws.iter().flatten().collect();
    let k = ok.len().max(1) as f64;
    let covered = ok.iter().filter(|d| d.ci.0 <= truth && truth <= d.ci.1).count();
    let uncorrected = ok.iter().filter(|d| (d.estimate - truth).abs() <= d.critical * d.se).count();
    let estimates: Vec<f64> = ok.iter().map(|d| d.estimate).collect();
    let (mean, se_of_mean) = mean_and_se(&estimates);
    CoverageReport {
        truth,
        reps: draws.len(),
        failures: draws.len() - ok.len(),
        coverage: covered as f64 / k,
        coverage_uncorrected: uncorrected as f64 / k,
        mean_estimate: mean,
        sd_estimate: se_of_mean * (estimates.len() as f64).sqrt(),
        mean_se: ok.iter().map(|d| d.se).sum::<f64>() / k,
    }
}

/// Bias-corrected interval coverage for `α(x1, x2)` on a design.
pub fn relative_risk_coverage(
    design: &DesignSpec,
    n: usize,
    reps: usize,
    censoring_target: f64,
    x1: f64,
    x2: f64,
    config: &RelRiskConfig,
    seed: u64,
) -> Result<CoverageReport> {
    let scale =
        if censoring_target > 0.0 { Some(calibrate_censoring(design, censoring_target, DEFAULT_TOLERANCE)?) } else { None };
    let critical = hazrisk_core::normal::two_sided_critical(config.ci_level);
    let draws: Vec<Result<Option<IntervalDraw>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let data = generate_replication(design, n, scale, &mut rng)?;
            Ok(estimate_relative_risk(&data, x1, x2, config).ok().map(|e| IntervalDraw {
                estimate: e.alpha_hat,
                bias: e.bias_hat,
                se: e.se_hat,
                ci: e.ci,
                critical,
            }))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize_coverage(design.psi(x2) - design.psi(x1), &draws))
}
