//! Uniform censoring calibrated to a target censoring proportion.
//!
//! With `C ~ Uniform(0, c)` and `T | X` exponential with rate `λ = exp(ψ(X))`,
//! `P(T > C | X) = (1 − e^{−cλ})/(cλ)`, so the marginal censoring
//! proportion is a one-dimensional integral over the covariate law.

use hazrisk_core::{Error, Result};

use crate::design::DesignSpec;

/// Default calibration tolerance on the proportion.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

const PANELS_PER_SEGMENT: usize = 2000;

/// `(1 − e^{−z})/z`, continuous at 0.
fn censored_fraction(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -f64::exp_m1(-z) / z
    }
}

/// `P(T > C)` for censoring scale `c`.
pub fn censoring_probability(design: &DesignSpec, c: f64) -> f64 {
    let law = design.covariate_law;
    let f = |x: f64| law.density(x) * censored_fraction(c * design.psi(x).exp());
    law.breakpoints().windows(2).map(|w| simpson(&f, w[0], w[1], PANELS_PER_SEGMENT)).sum()
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    // endpoints nudged inward so one-sided densities use the segment's branch
    let eps = 1e-12 * (b - a);
    let mut total = f(a + eps) + f(b - eps);
    for k in 1..m {
        total += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

/// Censoring scale `c` with `P(T > C)` within `tol` of `target`.
pub fn calibrate_censoring(design: &DesignSpec, target: f64, tol: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter { name: "censoring target", value: target });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "calibration tolerance", value: tol });
    }
    // the proportion decreases in c; bisect on log c
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let mut mid = 0.0;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let p = censoring_probability(design, mid.exp());
        if (p - target).abs() <= tol {
            break;
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid.exp())
}
