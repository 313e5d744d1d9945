//! First-step local polynomial fits of the derivatives of `ψ`.
//!
//! Around an anchor `x` the risk function is replaced by its Taylor
//! polynomial, and the kernel-weighted local partial likelihood
//!
//! ```text
//! ℓ(β*) = Σⱼ K_h(X₍ⱼ₎ − x) [X̃*₍ⱼ₎ᵀβ* − log Σ_{i∈Rⱼ} exp(X̃*ᵢᵀβ*) K_h(Xᵢ − x)]
//! ```
//!
//! with `X̃*ᵢ = (Xᵢ − x, …, (Xᵢ − x)ᵖ)` is maximized in `β*`. The intercept
//! `ψ(x)` cancels, so only `β̂ₖ ≈ ψ⁽ᵏ⁾(x)/k!` for `k ≥ 1` are identified.
//! Integrating `β̂₁` over a grid gives the cumulative comparison estimator
//! of `ψ` itself.

use alloc::vec::Vec;

use crate::bandwidth::VariableBandwidthRule;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::cholesky_solve;
use crate::survival::SurvivalDataset;

pub const MAX_NEWTON_ITERATIONS: usize = 50;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

/// Derivative estimates at one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolyFit {
    pub anchor: f64,
    pub degree: usize,
    pub bandwidth: f64,
    /// `β̂ₖ` for `k = 1..=degree`, estimating `ψ⁽ᵏ⁾(anchor)/k!`.
    pub beta_star: Vec<f64>,
    pub converged: bool,
    /// Failures with positive kernel weight at the anchor.
    pub effective_failures: usize,
    pub iterations: usize,
    /// Euclidean norm of the gradient in the scaled working parameters at
    /// the returned solution.
    pub gradient_norm: f64,
}

impl LocalPolyFit {
    /// A fit with fixed coefficients, e.g. to plug a known polynomial into
    /// the second step.
    pub fn with_coefficients(anchor: f64, bandwidth: f64, beta_star: Vec<f64>) -> Self {
        LocalPolyFit {
            anchor,
            degree: beta_star.len(),
            bandwidth,
            beta_star,
            converged: true,
            effective_failures: 0,
            iterations: 0,
            gradient_norm: 0.0,
        }
    }

    /// `Σₖ β̂ₖ (x − anchor)ᵏ`, the local polynomial without its intercept.
    pub fn polynomial(&self, x: f64) -> f64 {
        let d = x - self.anchor;
        self.beta_star.iter().rev().fold(0.0, |acc, b| (acc + b) * d)
    }

    /// The same fit keeping only `β̂₁, …, β̂_degree`.
    pub fn truncated(&self, degree: usize) -> LocalPolyFit {
        let mut fit = self.clone();
        fit.beta_star.truncate(degree);
        fit.degree = fit.beta_star.len();
        fit
    }

    /// `ψ̂⁽ᵏ⁾(anchor) = k!·β̂ₖ`, if the fit has degree at least `k`.
    pub fn derivative(&self, order: usize) -> Option<f64> {
        if order == 0 || order > self.degree {
            return None;
        }
        let factorial: f64 = (1..=order).map(|k| k as f64).product();
        Some(factorial * self.beta_star[order - 1])
    }
}

/// Kernel-and-risk weighted sums over one risk set, in the scaled working
/// parameters `θ = H·β*` with `H = diag(h, h², …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLikSums {
    pub s0: f64,
    pub s1: Vec<f64>,
    /// Row-major `p×p`.
    pub s2: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Row {
    u: f64,
    weight: f64,
    event: bool,
}

/// The local partial likelihood at one anchor, restricted to the subjects
/// with positive kernel weight.
#[derive(Debug, Clone)]
pub struct LocalLikelihood {
    anchor: f64,
    bandwidth: f64,
    degree: usize,
    rows: Vec<Row>,
    /// `(start, end)` of each run of equal times among `rows`.
    blocks: Vec<(usize, usize)>,
    effective_failures: usize,
}

/// Value, gradient and Hessian in the scaled working parameters.
struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
}

impl LocalLikelihood {
    pub fn new(data: &SurvivalDataset, anchor: f64, degree: usize, bandwidth: f64, kernel: Kernel) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter { name: "degree", value: 0.0 });
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter { name: "bandwidth", value: bandwidth });
        }
        let mut rows = Vec::new();
        let mut times = Vec::new();
        for s in data.samples() {
            let weight = kernel.scaled(s.covariate - anchor, bandwidth);
            if weight > 0.0 {
                rows.push(Row { u: (s.covariate - anchor) / bandwidth, weight, event: s.event });
                times.push(s.time);
            }
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=rows.len() {
            if i == rows.len() || times[i] != times[start] {
                blocks.push((start, i));
                start = i;
            }
        }
        let effective_failures = rows.iter().filter(|r| r.event).count();
        Ok(LocalLikelihood { anchor, bandwidth, degree, rows, blocks, effective_failures })
    }

    pub fn effective_failures(&self) -> usize {
        self.effective_failures
    }

    fn check_identifiable(&self) -> Result<()> {
        if self.effective_failures == 0 {
            return Err(Error::EmptyWindow { x: self.anchor });
        }
        let mut us: Vec<f64> = self.rows.iter().map(|r| r.u).collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        if self.effective_failures < self.degree + 1 || us.len() < self.degree + 1 {
            return Err(Error::DegenerateDesign { x: self.anchor, effective_failures: self.effective_failures });
        }
        Ok(())
    }

    fn to_working(&self, beta_star: &[f64]) -> Vec<f64> {
        let mut scale = 1.0;
        beta_star
            .iter()
            .map(|b| {
                scale *= self.bandwidth;
                b * scale
            })
            .collect()
    }

    fn to_beta(&self, theta: &[f64]) -> Vec<f64> {
        let mut scale = 1.0;
        theta
            .iter()
            .map(|t| {
                scale *= self.bandwidth;
                t / scale
            })
            .collect()
    }

    fn powers(&self, u: f64, z: &mut [f64]) {
        let mut v = 1.0;
        for zk in z.iter_mut() {
            v *= u;
            *zk = v;
        }
    }

    fn linear(&self, theta: &[f64], u: f64) -> f64 {
        theta.iter().rev().fold(0.0, |acc, t| (acc + t) * u)
    }

    /// Walks the risk sets from the latest time backwards, handing each tie
    /// block its failures and the risk sums (shifted by `exp(−shift)`).
    fn sweep(&self, theta: &[f64], mut visit: impl FnMut(&[Row], f64, &LocalLikSums)) {
        let p = self.degree;
        let shift = self.rows.iter().map(|r| self.linear(theta, r.u)).fold(f64::NEG_INFINITY, f64::max);
        let mut sums = LocalLikSums { s0: 0.0, s1: alloc::vec![0.0; p], s2: alloc::vec![0.0; p * p] };
        let mut z = alloc::vec![0.0; p];
        for &(start, end) in self.blocks.iter().rev() {
            for r in &self.rows[start..end] {
                let e = r.weight * libm::exp(self.linear(theta, r.u) - shift);
                self.powers(r.u, &mut z);
                sums.s0 += e;
                for a in 0..p {
                    sums.s1[a] += e * z[a];
                    for b in 0..p {
                        sums.s2[a * p + b] += e * z[a] * z[b];
                    }
                }
            }
            visit(&self.rows[start..end], shift, &sums);
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let p = self.degree;
        let mut value = 0.0;
        let mut gradient = alloc::vec![0.0; p];
        let mut hessian = alloc::vec![0.0; p * p];
        let mut z = alloc::vec![0.0; p];
        self.sweep(theta, |block, shift, sums| {
            let log_s0 = shift + libm::log(sums.s0);
            for r in block.iter().filter(|r| r.event) {
                self.powers(r.u, &mut z);
                value += r.weight * (self.linear(theta, r.u) - log_s0);
                for a in 0..p {
                    let mean_a = sums.s1[a] / sums.s0;
                    gradient[a] += r.weight * (z[a] - mean_a);
                    for b in 0..p {
                        let mean_b = sums.s1[b] / sums.s0;
                        hessian[a * p + b] -= r.weight * (sums.s2[a * p + b] / sums.s0 - mean_a * mean_b);
                    }
                }
            }
        });
        Evaluation { value, gradient, hessian }
    }

    /// `ℓ(β*)`.
    pub fn objective(&self, beta_star: &[f64]) -> f64 {
        self.evaluate(&self.to_working(beta_star)).value
    }

    /// `∂ℓ/∂β*`.
    pub fn gradient(&self, beta_star: &[f64]) -> Vec<f64> {
        let g = self.evaluate(&self.to_working(beta_star)).gradient;
        let mut scale = 1.0;
        g.iter()
            .map(|v| {
                scale *= self.bandwidth;
                v * scale
            })
            .collect()
    }

    /// `∂²ℓ/∂β*∂β*ᵀ`, row-major.
    pub fn hessian(&self, beta_star: &[f64]) -> Vec<f64> {
        let p = self.degree;
        let h = self.evaluate(&self.to_working(beta_star)).hessian;
        let scale: Vec<f64> = (1..=p).map(|k| libm::pow(self.bandwidth, k as f64)).collect();
        (0..p * p).map(|ab| h[ab] * scale[ab / p] * scale[ab % p]).collect()
    }

    /// Risk-set sums at every failure with positive weight, in the working
    /// parameters, unshifted.
    pub fn risk_sums(&self, beta_star: &[f64]) -> Vec<LocalLikSums> {
        let theta = self.to_working(beta_star);
        let mut out = Vec::new();
        self.sweep(&theta, |block, shift, sums| {
            let factor = libm::exp(shift);
            for _ in block.iter().filter(|r| r.event) {
                out.push(LocalLikSums {
                    s0: sums.s0 * factor,
                    s1: sums.s1.iter().map(|v| v * factor).collect(),
                    s2: sums.s2.iter().map(|v| v * factor).collect(),
                });
            }
        });
        out.reverse();
        out
    }

    /// Damped Newton from `β* = 0`. `observer` sees every iterate.
    pub fn maximize(&self, mut observer: impl FnMut(&NewtonIterate<'_>)) -> Result<LocalPolyFit> {
        self.check_identifiable()?;
        let p = self.degree;
        let mut theta = alloc::vec![0.0; p];
        let mut current = self.evaluate(&theta);
        let norm = |g: &[f64]| libm::sqrt(g.iter().map(|v| v * v).sum::<f64>());
        for iteration in 0..=MAX_NEWTON_ITERATIONS {
            observer(&NewtonIterate { iteration, theta: &theta, gradient: &current.gradient, hessian: &current.hessian });
            let gnorm = norm(&current.gradient);
            if gnorm <= GRADIENT_TOLERANCE {
                return Ok(self.finish(theta, iteration, gnorm));
            }
            if iteration == MAX_NEWTON_ITERATIONS {
                break;
            }
            let negated: Vec<f64> = current.hessian.iter().map(|v| -v).collect();
            let step = cholesky_solve(&negated, &current.gradient)
                .ok_or(Error::DegenerateDesign { x: self.anchor, effective_failures: self.effective_failures })?;
            // Near the optimum the predicted gain drops below the rounding
            // level of the objective and step halving can no longer tell
            // ascent from noise, so the full step is taken.
            let gain: f64 = step.iter().zip(&current.gradient).map(|(d, g)| d * g).sum();
            if gain <= 1e-10 * (1.0 + libm::fabs(current.value)) {
                theta = theta.iter().zip(&step).map(|(a, d)| a + d).collect();
                current = self.evaluate(&theta);
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                let next = self.evaluate(&trial);
                if next.value.is_finite() && next.value >= current.value {
                    accepted = Some((trial, next));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, next)) => {
                    theta = trial;
                    current = next;
                }
                None => {
                    // No ascent left at double precision.
                    let gnorm = norm(&current.gradient);
                    return Err(Error::NonConvergence { x: self.anchor, iterations: iteration, gradient_norm: gnorm });
                }
            }
        }
        Err(Error::NonConvergence { x: self.anchor, iterations: MAX_NEWTON_ITERATIONS, gradient_norm: norm(&current.gradient) })
    }

    fn finish(&self, theta: Vec<f64>, iterations: usize, gradient_norm: f64) -> LocalPolyFit {
        LocalPolyFit {
            anchor: self.anchor,
            degree: self.degree,
            bandwidth: self.bandwidth,
            beta_star: self.to_beta(&theta),
            converged: true,
            effective_failures: self.effective_failures,
            iterations,
            gradient_norm,
        }
    }
}

/// One Newton iterate, in the scaled working parameters.
#[derive(Debug)]
pub struct NewtonIterate<'a> {
    pub iteration: usize,
    pub theta: &'a [f64],
    pub gradient: &'a [f64],
    /// Row-major `p×p`.
    pub hessian: &'a [f64],
}

/// Maximizes the local partial likelihood at `x`.
pub fn fit_local(data: &SurvivalDataset, x: f64, degree: usize, h1: f64, kernel: Kernel) -> Result<LocalPolyFit> {
    LocalLikelihood::new(data, x, degree, h1, kernel)?.maximize(|_| {})
}

/// Local fits over a grid; failed points are kept as errors.
#[derive(Debug, Clone)]
pub struct DerivativeCurve {
    pub grid: Vec<f64>,
    pub fits: Vec<Result<LocalPolyFit>>,
}

impl DerivativeCurve {
    pub fn n_failed(&self) -> usize {
        self.fits.iter().filter(|f| f.is_err()).count()
    }
}

/// Fits at every grid point, with bandwidth `rule.bandwidth_at(x)`.
pub fn fit_derivative_curve(
    data: &SurvivalDataset,
    grid: &[f64],
    degree: usize,
    rule: &VariableBandwidthRule,
    kernel: Kernel,
) -> DerivativeCurve {
    let fits = grid.iter().map(|&x| fit_local(data, x, degree, rule.bandwidth_at(x), kernel)).collect();
    DerivativeCurve { grid: grid.to_vec(), fits }
}

/// `ψ̂(x) − ψ̂(x_ref)` obtained by trapezoidal integration of `β̂₁`.
///
/// Node values are `None` where a failed fit lies between the node and the
/// reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedCurve {
    pub reference: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl IntegratedCurve {
    /// Piecewise-linear evaluation between nodes.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let lo = self.nodes[0];
        let hi = self.nodes[self.nodes.len() - 1];
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        let k = self.nodes.partition_point(|&g| g <= x);
        if k > 0 && self.nodes[k - 1] == x {
            return self.values[k - 1].ok_or(Error::HoleInCurve { x });
        }
        let (a, b) = (self.values[k - 1], self.values[k]);
        match (a, b) {
            (Some(a), Some(b)) => {
                let t = (x - self.nodes[k - 1]) / (self.nodes[k] - self.nodes[k - 1]);
                Ok(a + t * (b - a))
            }
            _ => Err(Error::HoleInCurve { x }),
        }
    }
}

/// Integrates the first-derivative estimates of `curve` from `x_ref`.
pub fn integrate_derivative(curve: &DerivativeCurve, x_ref: f64) -> Result<IntegratedCurve> {
    let n = curve.grid.len();
    if n < 2 {
        return Err(Error::InvalidParameter { name: "grid size", value: n as f64 });
    }
    let (lo, hi) = (curve.grid[0], curve.grid[n - 1]);
    if !(x_ref >= lo && x_ref <= hi) {
        return Err(Error::OutOfRange { x: x_ref, lo, hi });
    }
    let slope = |k: usize| curve.fits[k].as_ref().ok().and_then(|f| f.beta_star.first().copied());

    let mut nodes: Vec<f64> = Vec::with_capacity(n + 1);
    let mut slopes: Vec<Option<f64>> = Vec::with_capacity(n + 1);
    let mut reference = 0;
    for k in 0..n {
        let g = curve.grid[k];
        if k > 0 && curve.grid[k - 1] < x_ref && x_ref < g {
            let t = (x_ref - curve.grid[k - 1]) / (g - curve.grid[k - 1]);
            reference = nodes.len();
            nodes.push(x_ref);
            slopes.push(match (slope(k - 1), slope(k)) {
                (Some(a), Some(b)) => Some(a + t * (b - a)),
                _ => None,
            });
        }
        if g == x_ref {
            reference = nodes.len();
        }
        nodes.push(g);
        slopes.push(slope(k));
    }
    if slopes[reference].is_none() {
        return Err(Error::HoleInCurve { x: x_ref });
    }

    let mut values = alloc::vec![None; nodes.len()];
    values[reference] = Some(0.0);
    for k in reference + 1..nodes.len() {
        values[k] = match (values[k - 1], slopes[k - 1], slopes[k]) {
            (Some(v), Some(a), Some(b)) => Some(v + 0.5 * (a + b) * (nodes[k] - nodes[k - 1])),
            _ => None,
        };
    }
    for k in (0..reference).rev() {
        values[k] = match (values[k + 1], slopes[k], slopes[k + 1]) {
            (Some(v), Some(a), Some(b)) => Some(v - 0.5 * (a + b) * (nodes[k + 1] - nodes[k])),
            _ => None,
        };
    }
    Ok(IntegratedCurve { reference: x_ref, nodes, values })
}
