//! Simulation designs: risk functions, covariate laws and data generation.
//!
//! Failure times follow the proportional hazards model with unit baseline
//! hazard, so `T | X` is exponential with rate `exp(ψ(X))`. This is the same
//! law as `T = exp(−ψ(X) + ε)` with `ε` standard extreme-value
//! (`log Λ₀(T) = −ψ(X) + ε`, `Λ₀(t) = t`).

use std::fmt;

use hazrisk_core::normal;
use hazrisk_core::{Result, SurvivalDataset, SurvivalSample, VariableBandwidthRule};
use rand::distr::Open01;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DesignId {
    D1,
    D2,
    D3,
}

impl DesignId {
    pub const ALL: [DesignId; 3] = [DesignId::D1, DesignId::D2, DesignId::D3];

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(DesignId::D1),
            2 => Some(DesignId::D2),
            3 => Some(DesignId::D3),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            DesignId::D1 => 1,
            DesignId::D2 => 2,
            DesignId::D3 => 3,
        }
    }
}

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "design {}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Equal-probability mixture of `N(−mean, sd²)` truncated to `(lo, 0)`
    /// and `N(mean, sd²)` truncated to `(0, hi)`.
    TruncatedNormalPair {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
}

impl CovariateLaw {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            CovariateLaw::Uniform { lo, hi } | CovariateLaw::TruncatedNormalPair { lo, hi, .. } => (lo, hi),
        }
    }

    /// Points where the density is not smooth, for quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        match self {
            CovariateLaw::Uniform { .. } => vec![lo, hi],
            CovariateLaw::TruncatedNormalPair { .. } => vec![lo, 0.0, hi],
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            CovariateLaw::TruncatedNormalPair { mean, sd, lo, hi } => {
                let component = |mu: f64, a: f64, b: f64| {
                    if x < a || x > b {
                        return 0.0;
                    }
                    let z = (x - mu) / sd;
                    let pdf = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                    pdf / (normal::cdf((b - mu) / sd) - normal::cdf((a - mu) / sd))
                };
                0.5 * component(-mean, lo, 0.0) + 0.5 * component(mean, 0.0, hi)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.sample::<f64, _>(Open01),
            CovariateLaw::TruncatedNormalPair { mean, sd, lo, hi } => {
                let (mu, a, b) = if rng.random_bool(0.5) { (-mean, lo, 0.0) } else { (mean, 0.0, hi) };
                truncated_normal(rng, mu, sd, a, b)
            }
        }
    }
}

/// Inverse-CDF draw from `N(mu, sd²)` restricted to `(a, b)`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sd: f64, a: f64, b: f64) -> f64 {
    let lo = normal::cdf((a - mu) / sd);
    let hi = normal::cdf((b - mu) / sd);
    let u: f64 = rng.sample(Open01);
    let x = mu + sd * normal::quantile(lo + u * (hi - lo));
    x.clamp(a, b)
}

fn cubic(x: f64) -> f64 {
    x * x * x
}

fn cubic_with_bumps(x: f64) -> f64 {
    x * x * x + (-150.0 * (x + 0.3) * (x + 0.3)).exp() + (-150.0 * (x - 0.3) * (x - 0.3)).exp()
}

/// Risk function, covariate law, anchor and bandwidth rule of a study.
#[derive(Debug, Clone, Copy)]
pub struct DesignSpec {
    pub id: Option<DesignId>,
    pub psi: fn(f64) -> f64,
    pub covariate_law: CovariateLaw,
    /// Normalization point of the estimated curve `ψ(·) − ψ(anchor)`.
    pub anchor: f64,
    /// `(half_width, multiplier)`: bandwidth is `multiplier·h⁰` for
    /// `|x| ≤ half_width`.
    pub band: Option<(f64, f64)>,
}

impl DesignSpec {
    pub fn new(id: DesignId) -> Self {
        let uniform = CovariateLaw::Uniform { lo: -1.0, hi: 1.0 };
        match id {
            DesignId::D1 => DesignSpec { id: Some(id), psi: cubic, covariate_law: uniform, anchor: 0.0, band: None },
            DesignId::D2 => {
                DesignSpec { id: Some(id), psi: cubic_with_bumps, covariate_law: uniform, anchor: 0.0, band: Some((0.5, 0.8)) }
            }
            DesignId::D3 => DesignSpec {
                id: Some(id),
                psi: cubic,
                covariate_law: CovariateLaw::TruncatedNormalPair { mean: 0.6, sd: 0.3, lo: -1.0, hi: 1.0 },
                anchor: -0.6,
                band: Some((0.2, 2.0)),
            },
        }
    }

    pub fn custom(psi: fn(f64) -> f64, covariate_law: CovariateLaw, anchor: f64) -> Self {
        DesignSpec { id: None, psi, covariate_law, anchor, band: None }
    }

    pub fn psi(&self, x: f64) -> f64 {
        (self.psi)(x)
    }

    /// `ψ(x) − ψ(anchor)`.
    pub fn truth(&self, x: f64) -> f64 {
        self.psi(x) - self.psi(self.anchor)
    }

    pub fn bandwidth_rule(&self, h0: f64) -> Result<VariableBandwidthRule> {
        match self.band {
            None => VariableBandwidthRule::constant(h0),
            Some((half, mult)) => VariableBandwidthRule::centered(h0, half, mult),
        }
    }
}

/// `T` given the risk score: exponential with rate `exp(psi)`.
pub fn draw_failure_time<R: Rng + ?Sized>(psi: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln() / psi.exp()
}

/// One simulated dataset of size `n`. `censoring_scale = Some(c)` draws
/// `C ~ Uniform(0, c)`; `None` leaves every failure observed.
pub fn generate_replication<R: Rng + ?Sized>(
    design: &DesignSpec,
    n: usize,
    censoring_scale: Option<f64>,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    if let Some(c) = censoring_scale {
        if !(c > 0.0) || !c.is_finite() {
            return Err(hazrisk_core::Error::InvalidParameter { name: "censoring scale", value: c });
        }
    }
    let samples = (0..n)
        .map(|_| {
            let x = design.covariate_law.sample(rng);
            let t = draw_failure_time(design.psi(x), rng);
            match censoring_scale {
                Some(c) => {
                    let censor = c * rng.sample::<f64, _>(Open01);
                    SurvivalSample::new(x, t.min(censor), t <= censor)
                }
                None => SurvivalSample::new(x, t, true),
            }
        })
        .collect();
    SurvivalDataset::new(samples)
}
