//! Second-step estimation of the relative risk `α = ψ(x₂) − ψ(x₁)`.
//!
//! With first-step polynomials `ηᵢ = X̃*₁ᵢᵀβ̂*₁` around `x₁` and
//! `ζᵢ = X̃*₂ᵢᵀβ̂*₂` around `x₂`, and kernel weights `k1ᵢ = K_h(Xᵢ − x₁)`,
//! `k2ᵢ = K_h(Xᵢ − x₂)`, the estimate maximizes
//!
//! ```text
//! L(α) = Σⱼ [k1₍ⱼ₎η₍ⱼ₎ + k2₍ⱼ₎(α + ζ₍ⱼ₎)]
//!      − Σⱼ (k1₍ⱼ₎ + k2₍ⱼ₎) log Σ_{i∈Rⱼ} [e^{ηᵢ}k1ᵢ + e^{α+ζᵢ}k2ᵢ]
//! ```
//!
//! which is concave in `α`. Observations outside both windows drop out.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{interpolate, linspace};
use crate::kernels::Kernel;
use crate::local_fit::{fit_local, LocalPolyFit};
use crate::normal;
use crate::solve::{self, ProfileTerm};
use crate::survival::SurvivalDataset;

/// Per-subject ingredients of the second-step likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub eta: f64,
    pub zeta: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Second-step likelihood terms aligned with [`SurvivalDataset::samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairLikTerms {
    pub terms: Vec<PairTerm>,
}

impl PairLikTerms {
    pub fn new(terms: Vec<PairTerm>) -> Self {
        PairLikTerms { terms }
    }

    /// Terms for the windows around `x1` and `x2` with the first-step
    /// polynomials of `fit1` and `fit2`.
    pub fn for_relative_risk(
        data: &SurvivalDataset,
        x1: f64,
        x2: f64,
        fit1: &LocalPolyFit,
        fit2: &LocalPolyFit,
        h: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        check_bandwidth(h)?;
        let terms = data
            .samples()
            .iter()
            .map(|s| {
                let k1 = kernel.scaled(s.covariate - x1, h);
                let k2 = kernel.scaled(s.covariate - x2, h);
                PairTerm {
                    eta: if k1 > 0.0 { fit1.polynomial(s.covariate) } else { 0.0 },
                    zeta: if k2 > 0.0 { fit2.polynomial(s.covariate) } else { 0.0 },
                    k1,
                    k2,
                }
            })
            .collect();
        Ok(PairLikTerms { terms })
    }

    /// Adds `c` to every `η` and `ζ`.
    pub fn shifted(&self, c: f64) -> Self {
        PairLikTerms { terms: self.terms.iter().map(|t| PairTerm { eta: t.eta + c, zeta: t.zeta + c, ..*t }).collect() }
    }

    /// Swaps the roles of the two windows.
    pub fn swapped(&self) -> Self {
        PairLikTerms { terms: self.terms.iter().map(|t| PairTerm { eta: t.zeta, zeta: t.eta, k1: t.k2, k2: t.k1 }).collect() }
    }

    fn check(&self, data: &SurvivalDataset) {
        assert_eq!(self.terms.len(), data.len(), "pair terms must align with the dataset");
    }

    /// Collapses the likelihood to one logistic term per failure:
    /// `w_j(α) = σ(α + log B₂ⱼ − log B₁ⱼ)` with `B₁ⱼ = Σ e^{η}k1`,
    /// `B₂ⱼ = Σ e^{ζ}k2` over `Rⱼ`.
    fn profile(&self, data: &SurvivalDataset) -> (f64, Vec<ProfileTerm>) {
        self.check(data);
        let shift = self
            .terms
            .iter()
            .flat_map(|t| {
                let a = if t.k1 > 0.0 { t.eta } else { f64::NEG_INFINITY };
                let b = if t.k2 > 0.0 { t.zeta } else { f64::NEG_INFINITY };
                [a, b]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let samples = data.samples();
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        let mut gain = 0.0;
        let mut out = Vec::new();
        for (start, end) in data.tie_blocks().into_iter().rev() {
            for t in &self.terms[start..end] {
                if t.k1 > 0.0 {
                    b1 += t.k1 * libm::exp(t.eta - shift);
                }
                if t.k2 > 0.0 {
                    b2 += t.k2 * libm::exp(t.zeta - shift);
                }
            }
            for (t, s) in self.terms[start..end].iter().zip(&samples[start..end]) {
                if !s.event || t.k1 + t.k2 <= 0.0 || (b1 == 0.0 && b2 == 0.0) {
                    continue;
                }
                gain += t.k2;
                out.push(ProfileTerm { mass: t.k1 + t.k2, offset: libm::log(b2) - libm::log(b1) });
            }
        }
        (gain, out)
    }

    /// `L(α)` evaluated directly from the risk sets.
    pub fn objective(&self, data: &SurvivalDataset, alpha: f64) -> f64 {
        self.check(data);
        let mut total = 0.0;
        for (j, &f) in data.failure_order().iter().enumerate() {
            let tf = &self.terms[f];
            let mass = tf.k1 + tf.k2;
            if mass <= 0.0 {
                continue;
            }
            let inner: f64 = data
                .risk_set(j)
                .map(|i| {
                    let t = &self.terms[i];
                    t.k1 * libm::exp(t.eta) + t.k2 * libm::exp(alpha + t.zeta)
                })
                .sum();
            total += tf.k1 * tf.eta + tf.k2 * (alpha + tf.zeta) - mass * libm::log(inner);
        }
        total
    }

    /// `dL/dα`.
    pub fn score(&self, data: &SurvivalDataset, alpha: f64) -> f64 {
        let (gain, terms) = self.profile(data);
        solve::score(gain, &terms, alpha)
    }

    /// `d²L/dα²`.
    pub fn second_derivative(&self, data: &SurvivalDataset, alpha: f64) -> f64 {
        let (_, terms) = self.profile(data);
        solve::second_derivative(&terms, alpha)
    }

    /// The maximizing `α`, with the score below `1e-10` in absolute value.
    pub fn maximize(&self, data: &SurvivalDataset) -> Result<f64> {
        let (gain, terms) = self.profile(data);
        solve::maximize(gain, &terms).map(|(a, _)| a)
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter { name: "h", value: h });
    }
    Ok(())
}

fn check_converged(fit: &LocalPolyFit) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::UnconvergedFit { x: fit.anchor })
    }
}

/// Second-step estimate `α̂` given first-step fits at `x1` and `x2`.
///
/// Every coefficient of the fits enters the offsets; a degree-`p` second
/// step takes `fit.truncated(p)`.
pub fn estimate_alpha(
    data: &SurvivalDataset,
    x1: f64,
    x2: f64,
    fit1: &LocalPolyFit,
    fit2: &LocalPolyFit,
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    check_converged(fit1)?;
    check_converged(fit2)?;
    PairLikTerms::for_relative_risk(data, x1, x2, fit1, fit2, h, kernel)?.maximize(data)
}

/// `h^{p+1}/(p+1)!·(ψ̂⁽ᵖ⁺¹⁾(b) − ψ̂⁽ᵖ⁺¹⁾(a))·∫u^{p+1}K`.
pub(crate) fn plug_in_bias(fit_a: &LocalPolyFit, fit_b: &LocalPolyFit, p: usize, h: f64, kernel: Kernel) -> Result<f64> {
    check_bandwidth(h)?;
    let order = p + 1;
    let degree = fit_a.degree.min(fit_b.degree);
    let (Some(da), Some(db)) = (fit_a.derivative(order), fit_b.derivative(order)) else {
        return Err(Error::InsufficientDegree { degree, required: order });
    };
    let factorial: f64 = (1..=order).map(|k| k as f64).product();
    Ok(libm::pow(h, order as f64) / factorial * (db - da) * kernel.moment(order as u32))
}

/// Leading bias `b̂ₙ(x₁, x₂)` of `α̂` for a degree-`p` second step, from
/// first-step fits of degree `p₁ > p`.
pub fn alpha_bias(fit1_hi: &LocalPolyFit, fit2_hi: &LocalPolyFit, p: usize, h: f64, kernel: Kernel) -> Result<f64> {
    plug_in_bias(fit1_hi, fit2_hi, p, h, kernel)
}

/// Plug-in asymptotic variance `σ̂²(x₁, x₂)`; the standard error of `α̂` is
/// `√(σ̂²/(nh))`.
///
/// `d_hat` estimates `ψ(Xᵢ) − ψ(x₁)` for every sample, aligned with
/// [`SurvivalDataset::samples`]. Only ratios of `exp(D̂ᵢ)` enter, so a common
/// shift of `d_hat` does not matter.
pub fn alpha_variance(data: &SurvivalDataset, x1: f64, x2: f64, h: f64, kernel: Kernel, d_hat: &[f64]) -> Result<f64> {
    check_bandwidth(h)?;
    if d_hat.len() != data.len() {
        return Err(Error::InvalidParameter { name: "d_hat length", value: d_hat.len() as f64 });
    }
    if let Some(bad) = d_hat.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "d_hat", value: *bad });
    }
    let shift = d_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let samples = data.samples();
    let (mut all, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut total = 0.0;
    for (start, end) in data.tie_blocks().into_iter().rev() {
        for i in start..end {
            let e = libm::exp(d_hat[i] - shift);
            all += e;
            s1 += kernel.scaled(samples[i].covariate - x1, h) * e;
            s2 += kernel.scaled(samples[i].covariate - x2, h) * e;
        }
        let deaths = samples[start..end].iter().filter(|s| s.event).count();
        if deaths > 0 && s1 > 0.0 && s2 > 0.0 {
            total += deaths as f64 * (s1 * s2) / (all * (s1 + s2));
        }
    }
    if !(total > 0.0) {
        return Err(Error::VarianceUndefined { what: "no failure has both windows in its risk set" });
    }
    Ok(kernel.square_integral() / (total / data.len() as f64))
}

/// Tuning of the two-step estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelRiskConfig {
    /// Degree of the local polynomial behind the bias expansion.
    pub p: usize,
    /// First-step degree; `p1 > p` enables the bias correction.
    pub p1: usize,
    /// Second-step bandwidth.
    pub h: f64,
    /// First-step bandwidth.
    pub h1: f64,
    pub kernel: Kernel,
    pub ci_level: f64,
    /// Grid size for the anchored curve that supplies `D̂ᵢ`.
    pub variance_grid_points: usize,
}

impl RelRiskConfig {
    /// `p = 1`, `p₁ = 2`, `h = 0.8·h₁`, Epanechnikov, 95% intervals.
    pub fn new(h1: f64) -> Self {
        RelRiskConfig { p: 1, p1: 2, h: 0.8 * h1, h1, kernel: Kernel::Epanechnikov, ci_level: 0.95, variance_grid_points: 101 }
    }

    pub fn validate(&self) -> Result<()> {
        check_bandwidth(self.h)?;
        if !(self.h1 > 0.0) || !self.h1.is_finite() {
            return Err(Error::InvalidParameter { name: "h1", value: self.h1 });
        }
        if !(self.h < self.h1) {
            return Err(Error::InvalidParameter { name: "h/h1 (must be < 1)", value: self.h / self.h1 });
        }
        if self.p1 < self.p || self.p1 == 0 {
            return Err(Error::InvalidParameter { name: "p1 (must be >= p and >= 1)", value: self.p1 as f64 });
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidParameter { name: "ci_level", value: self.ci_level });
        }
        if self.variance_grid_points < 2 {
            return Err(Error::InvalidParameter { name: "variance_grid_points", value: self.variance_grid_points as f64 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRiskEstimate {
    pub x1: f64,
    pub x2: f64,
    pub alpha_hat: f64,
    /// `b̂ₙ`; zero when `p₁ = p`.
    pub bias_hat: f64,
    pub sigma2_hat: f64,
    /// `σ̂/√(nh)`.
    pub se_hat: f64,
    pub ci_level: f64,
    /// Bias-corrected interval `α̂ − b̂ ± z·se`.
    pub ci: (f64, f64),
    pub h: f64,
    pub converged: bool,
    /// `false` when bias correction was requested with `p₁ = p`.
    pub bias_corrected: bool,
}

fn assemble(
    data: &SurvivalDataset,
    x1: f64,
    x2: f64,
    alpha_hat: f64,
    fit1: &LocalPolyFit,
    fit2: &LocalPolyFit,
    d_hat: &[f64],
    config: &RelRiskConfig,
) -> Result<RelativeRiskEstimate> {
    let (bias_hat, bias_corrected) =
        if config.p1 > config.p { (alpha_bias(fit1, fit2, config.p, config.h, config.kernel)?, true) } else { (0.0, false) };
    let sigma2_hat = alpha_variance(data, x1, x2, config.h, config.kernel, d_hat)?;
    let se_hat = libm::sqrt(sigma2_hat / (data.len() as f64 * config.h));
    let z = normal::two_sided_critical(config.ci_level);
    let center = alpha_hat - bias_hat;
    Ok(RelativeRiskEstimate {
        x1,
        x2,
        alpha_hat,
        bias_hat,
        sigma2_hat,
        se_hat,
        ci_level: config.ci_level,
        ci: (center - z * se_hat, center + z * se_hat),
        h: config.h,
        converged: true,
        bias_corrected,
    })
}

/// First-step fit at `x`, reusing `anchor_fit` when `x` is its anchor.
fn fit_at(data: &SurvivalDataset, x: f64, anchor_fit: &LocalPolyFit, config: &RelRiskConfig) -> Result<LocalPolyFit> {
    if x == anchor_fit.anchor {
        Ok(anchor_fit.clone())
    } else {
        fit_local(data, x, config.p1, config.h1, config.kernel).map_err(|e| e.at(x))
    }
}

/// `(fit, α̂(anchor, x))` at every grid point.
fn anchored_alphas(
    data: &SurvivalDataset,
    anchor_fit: &LocalPolyFit,
    grid: &[f64],
    config: &RelRiskConfig,
) -> Vec<Result<(LocalPolyFit, f64)>> {
    let x1 = anchor_fit.anchor;
    grid.iter()
        .map(|&x| {
            let fit = fit_at(data, x, anchor_fit, config)?;
            let alpha =
                estimate_alpha(data, x1, x, &anchor_fit.truncated(config.p), &fit.truncated(config.p), config.h, config.kernel)
                    .map_err(|e| e.at(x))?;
            Ok((fit, alpha))
        })
        .collect()
}

/// `D̂ᵢ` by linear interpolation of an anchored curve, clamped at its ends.
pub fn d_hat_from_curve(data: &SurvivalDataset, nodes: &[f64], alphas: &[Option<f64>]) -> Result<Vec<f64>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = nodes.iter().zip(alphas).filter_map(|(&x, a)| a.map(|a| (x, a))).unzip();
    if xs.is_empty() {
        return Err(Error::VarianceUndefined { what: "anchored curve has no successful points" });
    }
    Ok(data.samples().iter().map(|s| interpolate(&xs, &ys, s.covariate)).collect())
}

/// Full two-step estimate with bias, standard error and interval.
pub fn estimate_relative_risk(data: &SurvivalDataset, x1: f64, x2: f64, config: &RelRiskConfig) -> Result<RelativeRiskEstimate> {
    config.validate()?;
    let fit1 = fit_local(data, x1, config.p1, config.h1, config.kernel).map_err(|e| e.at(x1))?;
    let fit2 = fit_at(data, x2, &fit1, config)?;
    let alpha_hat = estimate_alpha(data, x1, x2, &fit1.truncated(config.p), &fit2.truncated(config.p), config.h, config.kernel)
        .map_err(|e| e.at(x2))?;

    let (lo, hi) = data.covariate_range();
    let grid = linspace(lo, hi, config.variance_grid_points);
    let curve = anchored_alphas(data, &fit1, &grid, config);
    let alphas: Vec<Option<f64>> = curve.iter().map(|r| r.as_ref().ok().map(|(_, a)| *a)).collect();
    let d_hat = d_hat_from_curve(data, &grid, &alphas)?;
    assemble(data, x1, x2, alpha_hat, &fit1, &fit2, &d_hat, config)
}

/// `ψ̂(x) − ψ̂(anchor)` with inference at each grid point.
#[derive(Debug, Clone)]
pub struct RiskCurve {
    pub anchor: f64,
    pub grid: Vec<f64>,
    pub estimates: Vec<Result<RelativeRiskEstimate>>,
}

impl RiskCurve {
    pub fn alphas(&self) -> Vec<Option<f64>> {
        self.estimates.iter().map(|e| e.as_ref().ok().map(|e| e.alpha_hat)).collect()
    }
}

/// Relative risk against `anchor` along `grid`. The anchor fit is computed
/// once, and `D̂ᵢ` for the variances is interpolated from this curve.
pub fn estimate_curve(data: &SurvivalDataset, anchor: f64, grid: &[f64], config: &RelRiskConfig) -> Result<RiskCurve> {
    config.validate()?;
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter { name: "grid (must be nonempty and increasing)", value: grid.len() as f64 });
    }
    let (glo, ghi) = (grid[0], grid[grid.len() - 1]);
    if !(anchor >= glo && anchor <= ghi) {
        return Err(Error::OutOfRange { x: anchor, lo: glo, hi: ghi });
    }
    let (lo, hi) = data.covariate_range();
    if !(anchor >= lo && anchor <= hi) {
        return Err(Error::OutOfRange { x: anchor, lo, hi });
    }
    let anchor_fit = fit_local(data, anchor, config.p1, config.h1, config.kernel).map_err(|e| e.at(anchor))?;
    let points = anchored_alphas(data, &anchor_fit, grid, config);
    let alphas: Vec<Option<f64>> = points.iter().map(|r| r.as_ref().ok().map(|(_, a)| *a)).collect();
    let d_hat = d_hat_from_curve(data, grid, &alphas)?;
    let estimates = grid
        .iter()
        .zip(points)
        .map(|(&x, point)| {
            let (fit, alpha) = point?;
            assemble(data, anchor, x, alpha, &anchor_fit, &fit, &d_hat, config).map_err(|e| e.at(x))
        })
        .collect();
    Ok(RiskCurve { anchor, grid: grid.to_vec(), estimates })
}

/// `α̂(x₁, x₃) + α̂(x₃, x₂)`: the relative risk chained through `x3`.
pub fn estimate_alpha_chained(data: &SurvivalDataset, x1: f64, x3: f64, x2: f64, config: &RelRiskConfig) -> Result<f64> {
    config.validate()?;
    let fit1 = fit_local(data, x1, config.p1, config.h1, config.kernel).map_err(|e| e.at(x1))?;
    let fit3 = fit_at(data, x3, &fit1, config)?;
    let fit2 = if x2 == x3 { fit3.clone() } else { fit_at(data, x2, &fit1, config)? };
    let first = estimate_alpha(data, x1, x3, &fit1.truncated(config.p), &fit3.truncated(config.p), config.h, config.kernel)
        .map_err(|e| e.at(x3))?;
    let second = estimate_alpha(data, x3, x2, &fit3.truncated(config.p), &fit2.truncated(config.p), config.h, config.kernel)
        .map_err(|e| e.at(x2))?;
    Ok(first + second)
}
