//! Risk difference `ρ(x) = ψ(x, z₂) − ψ(x, z₁)` between two groups at a
//! continuous covariate value.
//!
//! Each group gets its own first-step fit around `x`, computed from that
//! group's data alone. The second step maximizes a likelihood pooled over
//! both groups in the window around `x`, which has the same concave
//! one-dimensional form as the relative-risk objective. Only the difference
//! between groups is identified, so no per-group level is ever reported.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::linspace;
use crate::kernels::Kernel;
use crate::local_fit::{fit_local, LocalPolyFit};
use crate::normal;
use crate::relative_risk::{plug_in_bias, PairLikTerms, PairTerm};
use crate::survival::SurvivalDataset;

/// Second-step terms: `k1ᵢ = K_h(Xᵢ − x)·I(Zᵢ = z₁)`, `k2ᵢ = K_h(Xᵢ − x)·I(Zᵢ = z₂)`
/// with both polynomials centred at `x`.
pub fn group_terms(
    data: &SurvivalDataset,
    x: f64,
    z1: i64,
    z2: i64,
    fit1: &LocalPolyFit,
    fit2: &LocalPolyFit,
    h: f64,
    kernel: Kernel,
) -> Result<PairLikTerms> {
    kernel.weight(0.0, h)?;
    let terms = data
        .samples()
        .iter()
        .map(|s| {
            let w = kernel.scaled(s.covariate - x, h);
            let (k1, k2) = match s.group {
                Some(g) if g == z1 => (w, 0.0),
                Some(g) if g == z2 => (0.0, w),
                _ => (0.0, 0.0),
            };
            PairTerm {
                eta: if k1 > 0.0 { fit1.polynomial(s.covariate) } else { 0.0 },
                zeta: if k2 > 0.0 { fit2.polynomial(s.covariate) } else { 0.0 },
                k1,
                k2,
            }
        })
        .collect();
    Ok(PairLikTerms::new(terms))
}

/// Second-step estimate `ρ̂(x)` from per-group first-step fits at `x`.
/// Offsets use every coefficient of the fits, as in
/// [`estimate_alpha`](crate::relative_risk::estimate_alpha).
pub fn estimate_rho(
    data: &SurvivalDataset,
    x: f64,
    z1: i64,
    z2: i64,
    fit1: &LocalPolyFit,
    fit2: &LocalPolyFit,
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    for fit in [fit1, fit2] {
        if !fit.converged {
            return Err(Error::UnconvergedFit { x: fit.anchor });
        }
    }
    group_terms(data, x, z1, z2, fit1, fit2, h, kernel)?.maximize(data)
}

/// Leading bias `b̂₁ₙ(x)` from per-group fits of degree `p₁ > p`.
pub fn rho_bias(fit1_hi: &LocalPolyFit, fit2_hi: &LocalPolyFit, p: usize, h: f64, kernel: Kernel) -> Result<f64> {
    plug_in_bias(fit1_hi, fit2_hi, p, h, kernel)
}

/// `σ̂²(x) = ∫K² · {1/(n⁻¹ΣI₁ᵢδᵢK_h(Xᵢ−x)) + 1/(n⁻¹ΣI₂ᵢδᵢK_h(Xᵢ−x))}`.
pub fn rho_variance(data: &SurvivalDataset, x: f64, z1: i64, z2: i64, h: f64, kernel: Kernel) -> Result<f64> {
    kernel.weight(0.0, h)?;
    let n = data.len() as f64;
    let mass = |label: i64| -> Result<f64> {
        let m: f64 = data
            .samples()
            .iter()
            .filter(|s| s.event && s.group == Some(label))
            .map(|s| kernel.scaled(s.covariate - x, h))
            .sum::<f64>()
            / n;
        if m > 0.0 {
            Ok(m)
        } else {
            Err(Error::StarvedGroup { label })
        }
    };
    let (m1, m2) = (mass(z1)?, mass(z2)?);
    Ok(kernel.square_integral() * (1.0 / m1 + 1.0 / m2))
}

/// Kernel-weighted average of a bias curve around `x`, normalized by the
/// realized weight so that a constant curve maps to itself.
pub fn smooth_bias(bias_curve: &[(f64, f64)], x: f64, h: f64, kernel: Kernel) -> Result<f64> {
    kernel.weight(0.0, h)?;
    let (num, den) = bias_curve.iter().fold((0.0, 0.0), |(num, den), &(y, b)| {
        let w = kernel.scaled(y - x, h);
        (num + w * b, den + w)
    });
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::EmptyWindow { x })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupDiffConfig {
    pub p: usize,
    pub p1: usize,
    pub h: f64,
    pub h1: f64,
    pub kernel: Kernel,
    pub ci_level: f64,
    /// Center the interval on the kernel-smoothed bias instead of the
    /// pointwise one.
    pub smooth_bias: bool,
    /// Size of the grid, spanning the covariate range, on which the bias
    /// curve is smoothed.
    pub smoothing_grid_points: usize,
}

impl GroupDiffConfig {
    /// `p = 1`, `p₁ = 2`, `h = 0.8·h₁`, Epanechnikov, 95%, smoothed bias.
    pub fn new(h1: f64) -> Self {
        GroupDiffConfig {
            p: 1,
            p1: 2,
            h: 0.8 * h1,
            h1,
            kernel: Kernel::Epanechnikov,
            ci_level: 0.95,
            smooth_bias: true,
            smoothing_grid_points: 101,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter { name: "h", value: self.h });
        }
        if !(self.h1 > 0.0) || !self.h1.is_finite() {
            return Err(Error::InvalidParameter { name: "h1", value: self.h1 });
        }
        if self.p1 < self.p || self.p1 == 0 {
            return Err(Error::InvalidParameter { name: "p1 (must be >= p and >= 1)", value: self.p1 as f64 });
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidParameter { name: "ci_level", value: self.ci_level });
        }
        if self.smoothing_grid_points < 2 {
            return Err(Error::InvalidParameter { name: "smoothing_grid_points", value: self.smoothing_grid_points as f64 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDiffEstimate {
    pub x: f64,
    pub z1: i64,
    pub z2: i64,
    pub rho_hat: f64,
    /// Pointwise `b̂₁ₙ(x)`.
    pub bias_hat: f64,
    /// Smoothed `b̂ᴬ₁ₙ(x)`; equals `bias_hat` when smoothing is off.
    pub bias_smoothed: f64,
    pub sigma2_hat: f64,
    /// `σ̂(x)/√(nh)`.
    pub se_hat: f64,
    pub ci_level: f64,
    /// `ρ̂ − b̂ᴬ₁ₙ ± z·se`.
    pub ci: (f64, f64),
    /// Failures with positive second-step weight in groups `z1` and `z2`.
    pub counts: (usize, usize),
    /// Share of censored subjects among the two groups inside the window.
    pub window_censoring: f64,
    pub converged: bool,
    pub bias_corrected: bool,
}

/// Per-group datasets, built once and reused across points.
struct Groups {
    z1: i64,
    z2: i64,
    first: SurvivalDataset,
    second: SurvivalDataset,
}

impl Groups {
    fn new(data: &SurvivalDataset, z1: i64, z2: i64) -> Result<Self> {
        if z1 == z2 {
            return Err(Error::InvalidParameter { name: "z1 == z2", value: z1 as f64 });
        }
        Ok(Groups { z1, z2, first: data.group_subset(z1)?, second: data.group_subset(z2)? })
    }

    fn fits(&self, x: f64, config: &GroupDiffConfig) -> Result<(LocalPolyFit, LocalPolyFit)> {
        let f1 = fit_local(&self.first, x, config.p1, config.h1, config.kernel).map_err(|e| e.at(x))?;
        let f2 = fit_local(&self.second, x, config.p1, config.h1, config.kernel).map_err(|e| e.at(x))?;
        Ok((f1, f2))
    }

    fn bias_at(&self, x: f64, config: &GroupDiffConfig) -> Result<f64> {
        let (f1, f2) = self.fits(x, config)?;
        rho_bias(&f1, &f2, config.p, config.h, config.kernel)
    }

    /// Bias on the nodes of `grid` that fall in the window around `x`.
    fn bias_curve(&self, grid: &[f64], x: f64, config: &GroupDiffConfig) -> Vec<(f64, f64)> {
        grid.iter()
            .filter(|&&y| config.kernel.scaled(y - x, config.h) > 0.0)
            .filter_map(|&y| self.bias_at(y, config).ok().map(|b| (y, b)))
            .collect()
    }
}

fn window_summary(data: &SurvivalDataset, x: f64, z1: i64, z2: i64, h: f64, kernel: Kernel) -> ((usize, usize), f64) {
    let mut counts = (0, 0);
    let (mut inside, mut censored) = (0usize, 0usize);
    for s in data.samples() {
        if kernel.scaled(s.covariate - x, h) <= 0.0 {
            continue;
        }
        let g = match s.group {
            Some(g) if g == z1 => 1,
            Some(g) if g == z2 => 2,
            _ => continue,
        };
        inside += 1;
        if s.event {
            if g == 1 {
                counts.0 += 1;
            } else {
                counts.1 += 1;
            }
        } else {
            censored += 1;
        }
    }
    let share = if inside == 0 { 0.0 } else { censored as f64 / inside as f64 };
    (counts, share)
}

fn estimate_with(
    data: &SurvivalDataset,
    groups: &Groups,
    x: f64,
    bias_curve: Option<&[(f64, f64)]>,
    config: &GroupDiffConfig,
) -> Result<GroupDiffEstimate> {
    let (z1, z2) = (groups.z1, groups.z2);
    let (fit1, fit2) = groups.fits(x, config)?;
    let rho_hat = estimate_rho(data, x, z1, z2, &fit1.truncated(config.p), &fit2.truncated(config.p), config.h, config.kernel)
        .map_err(|e| e.at(x))?;
    let bias_corrected = config.p1 > config.p;
    let bias_hat = if bias_corrected { rho_bias(&fit1, &fit2, config.p, config.h, config.kernel)? } else { 0.0 };
    let bias_smoothed = match bias_curve {
        Some(curve) if bias_corrected && config.smooth_bias => {
            smooth_bias(curve, x, config.h, config.kernel).map_err(|e| e.at(x))?
        }
        _ => bias_hat,
    };
    let sigma2_hat = rho_variance(data, x, z1, z2, config.h, config.kernel).map_err(|e| e.at(x))?;
    let se_hat = libm::sqrt(sigma2_hat / (data.len() as f64 * config.h));
    let z = normal::two_sided_critical(config.ci_level);
    let center = rho_hat - bias_smoothed;
    let (counts, window_censoring) = window_summary(data, x, z1, z2, config.h, config.kernel);
    Ok(GroupDiffEstimate {
        x,
        z1,
        z2,
        rho_hat,
        bias_hat,
        bias_smoothed,
        sigma2_hat,
        se_hat,
        ci_level: config.ci_level,
        ci: (center - z * se_hat, center + z * se_hat),
        counts,
        window_censoring,
        converged: true,
        bias_corrected,
    })
}

fn smoothing_grid(data: &SurvivalDataset, config: &GroupDiffConfig) -> Vec<f64> {
    let (lo, hi) = data.covariate_range();
    linspace(lo, hi, config.smoothing_grid_points)
}

/// `ρ̂(x)` with bias, standard error and interval.
pub fn estimate_group_difference(
    data: &SurvivalDataset,
    x: f64,
    z1: i64,
    z2: i64,
    config: &GroupDiffConfig,
) -> Result<GroupDiffEstimate> {
    config.validate()?;
    let groups = Groups::new(data, z1, z2)?;
    let curve = if config.smooth_bias && config.p1 > config.p {
        let mut grid = smoothing_grid(data, config);
        grid.push(x);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Some(groups.bias_curve(&grid, x, config))
    } else {
        None
    };
    estimate_with(data, &groups, x, curve.as_deref(), config)
}

/// [`estimate_group_difference`] along `grid`, computing the bias curve for
/// smoothing only once. Failed points are kept as errors.
pub fn estimate_group_difference_curve(
    data: &SurvivalDataset,
    grid: &[f64],
    z1: i64,
    z2: i64,
    config: &GroupDiffConfig,
) -> Result<Vec<Result<GroupDiffEstimate>>> {
    config.validate()?;
    let groups = Groups::new(data, z1, z2)?;
    let curve = if config.smooth_bias && config.p1 > config.p {
        let nodes = smoothing_grid(data, config);
        let curve: Vec<(f64, f64)> = nodes.iter().filter_map(|&y| groups.bias_at(y, config).ok().map(|b| (y, b))).collect();
        Some(curve)
    } else {
        None
    };
    Ok(grid.iter().map(|&x| estimate_with(data, &groups, x, curve.as_deref(), config)).collect())
}
