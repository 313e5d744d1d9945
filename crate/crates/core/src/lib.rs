//! Local partial likelihood estimation for the Cox proportional hazards model.
//!
//! The hazard is modelled as `λ(t|x) = λ₀(t)·exp{ψ(x)}` with `ψ` left
//! unspecified. Only differences of `ψ` are identifiable, so this crate
//! estimates them directly:
//!
//! * [`relative_risk`] estimates `α = ψ(x₂) − ψ(x₁)` by a two-step procedure.
//!   A first-step local polynomial fit ([`local_fit`]) recovers the
//!   derivatives of `ψ` around each point, and a one-dimensional concave
//!   maximization over windows around both `x₁` and `x₂` recovers `α`.
//! * [`group_diff`] estimates `ρ(x) = ψ(x, z₂) − ψ(x, z₁)` between two groups
//!   at a continuous covariate value.
//!
//! Both estimators come with plug-in bias and variance estimates and
//! bias-corrected normal confidence intervals. [`bandwidth`] evaluates the
//! asymptotically optimal bandwidth formulas.
//!
//! The crate is `no_std` and only needs `alloc`. IO, CSV ingestion, the
//! simulation harness and the command line tool live in the `hazrisk` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bandwidth;
mod error;
pub mod grid;
pub mod group_diff;
pub mod kernels;
mod linalg;
pub mod local_fit;
pub mod normal;
pub mod relative_risk;
mod solve;
pub mod survival;

pub use crate::bandwidth::{BandwidthPlan, VariableBandwidthRule};
pub use crate::error::{Error, Result};
pub use crate::group_diff::{GroupDiffConfig, GroupDiffEstimate};
pub use crate::kernels::Kernel;
pub use crate::local_fit::{DerivativeCurve, IntegratedCurve, LocalPolyFit};
pub use crate::relative_risk::{RelRiskConfig, RelativeRiskEstimate, RiskCurve};
pub use crate::survival::{SurvivalDataset, SurvivalSample};
