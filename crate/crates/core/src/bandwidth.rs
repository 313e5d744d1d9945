//! Optimal-bandwidth formulas and variable bandwidth rules.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::trapezoid_weights;
use crate::kernels::Kernel;

/// A covariate interval `[lo, hi]` where the base bandwidth is multiplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPiece {
    pub lo: f64,
    pub hi: f64,
    pub multiplier: f64,
}

/// Piecewise-constant bandwidth: `base × multiplier` on each piece, `base`
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableBandwidthRule {
    base: f64,
    pieces: Vec<BandwidthPiece>,
}

impl VariableBandwidthRule {
    pub fn new(base: f64, mut pieces: Vec<BandwidthPiece>) -> Result<Self> {
        if !(base > 0.0) || !base.is_finite() {
            return Err(Error::InvalidParameter { name: "base bandwidth", value: base });
        }
        for p in &pieces {
            if !(p.multiplier > 0.0) || !p.multiplier.is_finite() {
                return Err(Error::InvalidParameter { name: "bandwidth multiplier", value: p.multiplier });
            }
            if !(p.lo <= p.hi) {
                return Err(Error::InvalidParameter { name: "bandwidth interval", value: p.lo });
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if let Some(w) = pieces.windows(2).find(|w| w[0].hi >= w[1].lo) {
            return Err(Error::InvalidParameter { name: "overlapping bandwidth intervals", value: w[1].lo });
        }
        Ok(VariableBandwidthRule { base, pieces })
    }

    pub fn constant(h: f64) -> Result<Self> {
        Self::new(h, Vec::new())
    }

    /// `base × multiplier` for `|x| ≤ half_width`, `base` otherwise.
    pub fn centered(base: f64, half_width: f64, multiplier: f64) -> Result<Self> {
        Self::new(base, alloc::vec![BandwidthPiece { lo: -half_width, hi: half_width, multiplier }])
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn pieces(&self) -> &[BandwidthPiece] {
        &self.pieces
    }

    pub fn bandwidth_at(&self, x: f64) -> f64 {
        self.pieces.iter().find(|p| p.lo <= x && x <= p.hi).map_or(self.base, |p| self.base * p.multiplier)
    }

    /// The same rule with every bandwidth multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        VariableBandwidthRule { base: self.base * factor, pieces: self.pieces.clone() }
    }
}

/// Weight function `w(·)` of the weighted mean integrated squared error.
#[derive(Debug, Clone, Copy)]
pub enum WeightFunction {
    /// Uniform density on `[lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    Custom(fn(f64) -> f64),
}

impl WeightFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightFunction::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            WeightFunction::Custom(f) => f(x),
        }
    }
}

/// Inputs shared by the optimal-bandwidth formulas.
#[derive(Debug, Clone, Copy)]
pub struct BandwidthPlan {
    pub p: usize,
    pub kernel: Kernel,
    /// `C_{0,p}(K)`.
    pub c0p: f64,
    pub weight: WeightFunction,
}

impl BandwidthPlan {
    /// Plan with the constant derived from the kernel:
    /// `C = [((p+1)!)² ∫K² / (2(p+1) μ²_{p+1})]^{1/(2p+3)}`, which minimizes
    /// `h^{2p+2}·B + V/(nh)` when the bias carries `μ_{p+1} = ∫u^{p+1}K`.
    /// Even `p` gives `μ_{p+1} = 0` for a symmetric kernel and no finite
    /// constant; supply one with [`BandwidthPlan::with_constant`] instead.
    pub fn new(p: usize, kernel: Kernel, weight: WeightFunction) -> Result<Self> {
        Ok(BandwidthPlan { p, kernel, c0p: default_constant(p, kernel)?, weight })
    }

    pub fn with_constant(p: usize, kernel: Kernel, c0p: f64, weight: WeightFunction) -> Result<Self> {
        if !(c0p > 0.0) || !c0p.is_finite() {
            return Err(Error::InvalidParameter { name: "C0p", value: c0p });
        }
        Ok(BandwidthPlan { p, kernel, c0p, weight })
    }

    fn exponent(&self) -> f64 {
        1.0 / (2 * self.p + 3) as f64
    }
}

/// `C_{0,p}(K)` from the kernel moments.
pub fn default_constant(p: usize, kernel: Kernel) -> Result<f64> {
    let mu = kernel.moment(p as u32 + 1);
    if mu == 0.0 {
        return Err(Error::ZeroCurvature);
    }
    let fact: f64 = (1..=p + 1).map(|k| k as f64).product();
    let ratio = fact * fact * kernel.square_integral() / (2.0 * (p + 1) as f64 * mu * mu);
    Ok(libm::pow(ratio, 1.0 / (2 * p + 3) as f64))
}

fn h_opt(plan: &BandwidthPlan, variance_integral: f64, curvature_integral: f64, n: usize) -> Result<f64> {
    if !(variance_integral > 0.0) || !variance_integral.is_finite() {
        return Err(Error::InvalidParameter { name: "variance integral", value: variance_integral });
    }
    if curvature_integral == 0.0 {
        return Err(Error::ZeroCurvature);
    }
    if !(curvature_integral > 0.0) || !curvature_integral.is_finite() {
        return Err(Error::InvalidParameter { name: "curvature integral", value: curvature_integral });
    }
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0 });
    }
    let e = plan.exponent();
    Ok(plan.c0p * libm::pow(variance_integral / curvature_integral, e) * libm::pow(n as f64, -e))
}

/// Optimal constant bandwidth for the relative-risk estimator.
///
/// `variance_integral` is `∬ (∫ a₁a₂/(a₁+a₂) dΛ₀)⁻¹ w(x₁)w(x₂)` and
/// `curvature_integral` is `∬ (ψ⁽ᵖ⁺¹⁾(x₂) − ψ⁽ᵖ⁺¹⁾(x₁))² w(x₁)w(x₂)`.
pub fn h_opt_relative_risk(plan: &BandwidthPlan, variance_integral: f64, curvature_integral: f64, n: usize) -> Result<f64> {
    h_opt(plan, variance_integral, curvature_integral, n)
}

/// Optimal constant bandwidth for the group-difference estimator, with the
/// single integrals `∫ f⁻¹(σ₁²/p₁ₓ + σ₂²/p₂ₓ) w` and
/// `∫ (ψ₂⁽ᵖ⁺¹⁾ − ψ₁⁽ᵖ⁺¹⁾)² w`.
pub fn h_opt_group_diff(plan: &BandwidthPlan, variance_integral: f64, curvature_integral: f64, n: usize) -> Result<f64> {
    h_opt(plan, variance_integral, curvature_integral, n)
}

/// Trapezoidal `∬ (d(x₂) − d(x₁))² w(x₁)w(x₂)` from a pilot derivative curve
/// `d = ψ̂⁽ᵖ⁺¹⁾` on `grid`.
pub fn curvature_double_integral(grid: &[f64], derivative: &[f64], weight: &WeightFunction) -> f64 {
    let tw = trapezoid_weights(grid);
    let w: Vec<f64> = grid.iter().zip(&tw).map(|(&x, t)| t * weight.eval(x)).collect();
    let mut total = 0.0;
    for a in 0..grid.len() {
        for b in 0..grid.len() {
            let d = derivative[b] - derivative[a];
            total += w[a] * w[b] * d * d;
        }
    }
    total
}

/// Trapezoidal `∫ d(x)² w(x)` for a derivative-difference curve `d`.
pub fn curvature_single_integral(grid: &[f64], difference: &[f64], weight: &WeightFunction) -> f64 {
    let tw = trapezoid_weights(grid);
    grid.iter().zip(&tw).zip(difference).map(|((&x, t), d)| t * weight.eval(x) * d * d).sum()
}

/// Trapezoidal `∬ g(x₁, x₂) w(x₁)w(x₂)`.
pub fn weighted_double_integral(grid: &[f64], weight: &WeightFunction, g: impl Fn(f64, f64) -> f64) -> f64 {
    let tw = trapezoid_weights(grid);
    let w: Vec<f64> = grid.iter().zip(&tw).map(|(&x, t)| t * weight.eval(x)).collect();
    let mut total = 0.0;
    for a in 0..grid.len() {
        for b in 0..grid.len() {
            if w[a] > 0.0 && w[b] > 0.0 {
                total += w[a] * w[b] * g(grid[a], grid[b]);
            }
        }
    }
    total
}
