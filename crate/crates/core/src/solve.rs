//! One-dimensional maximization of the second-step objectives.
//!
//! Both the relative-risk and the group-difference objectives have the score
//! `s(a) = G − Σⱼ mⱼ·σ(a + cⱼ)` with `σ` the logistic function, masses
//! `mⱼ ≥ 0` and offsets `cⱼ ∈ [−∞, ∞]`. The score is decreasing, so the
//! objective is concave and the root is unique when it exists.

use crate::error::{Error, Result};

pub(crate) const SCORE_TOLERANCE: f64 = 1e-10;

#[inline]
pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ProfileTerm {
    pub mass: f64,
    pub offset: f64,
}

pub(crate) fn score(gain: f64, terms: &[ProfileTerm], a: f64) -> f64 {
    gain - terms.iter().map(|t| t.mass * logistic(a + t.offset)).sum::<f64>()
}

pub(crate) fn second_derivative(terms: &[ProfileTerm], a: f64) -> f64 {
    -terms
        .iter()
        .map(|t| {
            let w = logistic(a + t.offset);
            t.mass * w * (1.0 - w)
        })
        .sum::<f64>()
}

/// Root of the score: safeguarded Newton inside an expanding bracket.
pub(crate) fn maximize(gain: f64, terms: &[ProfileTerm]) -> Result<(f64, usize)> {
    let at_minus_inf = gain - terms.iter().filter(|t| t.offset == f64::INFINITY).map(|t| t.mass).sum::<f64>();
    let at_plus_inf = gain - terms.iter().filter(|t| t.offset > f64::NEG_INFINITY).map(|t| t.mass).sum::<f64>();
    if !(at_minus_inf > 0.0) {
        return Err(Error::Divergent { what: "score is nonpositive everywhere; estimate runs to -infinity" });
    }
    if !(at_plus_inf < 0.0) {
        return Err(Error::Divergent { what: "score is nonnegative everywhere; estimate runs to +infinity" });
    }

    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut a = 0.0;
    for iteration in 0..500 {
        let s = score(gain, terms, a);
        if libm::fabs(s) <= SCORE_TOLERANCE || s == 0.0 {
            return Ok((a, iteration));
        }
        if s > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        if lo.is_finite() && hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * (1.0 + libm::fabs(a)) {
            return Ok((a, iteration));
        }
        let d = second_derivative(terms, a);
        let newton = if d < 0.0 { a - s / d } else { f64::NAN };
        a = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo + 1.0f64.max(libm::fabs(lo))
        } else {
            hi - 1.0f64.max(libm::fabs(hi))
        };
    }
    Ok((a, 500))
}
