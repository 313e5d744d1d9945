//! Right-censored survival data, risk sets and global partial likelihood
//! utilities.
//!
//! Samples are stored sorted by observed time, so every risk set
//! `R = {i : Yᵢ ≥ t}` is a suffix of the sample list. Tied failure times
//! follow Breslow's convention: each tied failure contributes its own
//! likelihood term and all of them share the same risk set. A subject
//! censored at a failure time stays in that failure's risk set.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalSample {
    pub covariate: f64,
    /// Observed time `Y = min(T, C)`.
    pub time: f64,
    /// `true` when the failure was observed (`δ = 1`).
    pub event: bool,
    pub group: Option<i64>,
}

impl SurvivalSample {
    pub fn new(covariate: f64, time: f64, event: bool) -> Self {
        SurvivalSample { covariate, time, event, group: None }
    }

    pub fn with_group(mut self, group: i64) -> Self {
        self.group = Some(group);
        self
    }
}

/// Immutable, time-sorted collection of samples with precomputed risk sets.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    samples: Vec<SurvivalSample>,
    failures: Vec<usize>,
    risk_start: Vec<usize>,
}

impl SurvivalDataset {
    /// Validates and sorts `samples`. Sorting is stable, so equal times keep
    /// their input order.
    pub fn new(mut samples: Vec<SurvivalSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, s) in samples.iter().enumerate() {
            if !s.covariate.is_finite() {
                return Err(Error::InvalidSample { index, reason: "covariate is not finite" });
            }
            if !(s.time > 0.0) || !s.time.is_finite() {
                return Err(Error::InvalidSample { index, reason: "time must be positive and finite" });
            }
        }
        samples.sort_by(|a, b| a.time.total_cmp(&b.time));

        let failures: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].event).collect();
        if failures.is_empty() {
            return Err(Error::NoFailures);
        }
        let risk_start = failures
            .iter()
            .map(|&i| {
                let t = samples[i].time;
                samples.partition_point(|s| s.time < t)
            })
            .collect();
        Ok(SurvivalDataset { samples, failures, risk_start })
    }

    pub fn samples(&self) -> &[SurvivalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of failed samples in ascending time order.
    pub fn failure_order(&self) -> &[usize] {
        &self.failures
    }

    pub fn n_failures(&self) -> usize {
        self.failures.len()
    }

    /// Index range of the risk set of the `j`-th failure.
    pub fn risk_set(&self, j: usize) -> Range<usize> {
        self.risk_start[j]..self.samples.len()
    }

    /// `(failure index, risk set start)` for every failure in time order.
    pub fn failures_with_risk_start(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.failures.iter().copied().zip(self.risk_start.iter().copied())
    }

    pub fn covariate_range(&self) -> (f64, f64) {
        self.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.covariate), hi.max(s.covariate)))
    }

    /// Sorted distinct group labels.
    pub fn groups(&self) -> Vec<i64> {
        let mut labels: Vec<i64> = self.samples.iter().filter_map(|s| s.group).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Dataset restricted to one group, with risk sets recomputed within it.
    pub fn group_subset(&self, label: i64) -> Result<SurvivalDataset> {
        let subset: Vec<SurvivalSample> = self.samples.iter().filter(|s| s.group == Some(label)).copied().collect();
        if subset.is_empty() {
            return Err(Error::MissingGroup { label });
        }
        SurvivalDataset::new(subset)
    }

    /// Start indices of tie blocks, paired with the block end.
    pub(crate) fn tie_blocks(&self) -> Vec<(usize, usize)> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=self.samples.len() {
            if i == self.samples.len() || self.samples[i].time != self.samples[start].time {
                blocks.push((start, i));
                start = i;
            }
        }
        blocks
    }
}

/// Right-continuous step function with jumps at the distinct failure times.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Breslow estimator of the cumulative baseline hazard given per-sample
/// risk scores `ψ(Xᵢ)`, aligned with [`SurvivalDataset::samples`].
pub fn breslow_baseline(data: &SurvivalDataset, risk_scores: &[f64]) -> Result<StepFunction> {
    if risk_scores.len() != data.len() {
        return Err(Error::InvalidParameter { name: "risk_scores length", value: risk_scores.len() as f64 });
    }
    if let Some(bad) = risk_scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "risk_score", value: *bad });
    }
    let weights: Vec<f64> = risk_scores.iter().map(|&s| libm::exp(s)).collect();
    Ok(cumulative_hazard(data, |range| weights[range].iter().sum::<f64>()))
}

/// Nelson–Aalen estimator: number of failures over number at risk.
pub fn nelson_aalen(data: &SurvivalDataset) -> StepFunction {
    cumulative_hazard(data, |range| range.len() as f64)
}

fn cumulative_hazard(data: &SurvivalDataset, at_risk: impl Fn(Range<usize>) -> f64) -> StepFunction {
    let samples = data.samples();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut total = 0.0;
    for (start, end) in data.tie_blocks() {
        let deaths = samples[start..end].iter().filter(|s| s.event).count();
        if deaths == 0 {
            continue;
        }
        total += deaths as f64 / at_risk(start..samples.len());
        times.push(samples[start].time);
        values.push(total);
    }
    StepFunction { times, values }
}

/// Maximizer of the two-sample partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSampleFit {
    /// Log hazard ratio of the `other` arm relative to the `reference` arm.
    pub alpha: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// At-risk counts and failing arm for each failure of a two-valued covariate.
struct TwoSampleTerms {
    /// `(reference at risk, other at risk, failure is in other arm)`.
    terms: Vec<(f64, f64, bool)>,
}

impl TwoSampleTerms {
    fn new(data: &SurvivalDataset, reference: f64, other: f64) -> Result<Self> {
        let mut distinct: Vec<f64> = data.samples().iter().map(|s| s.covariate).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() != 2 || !distinct.contains(&reference) || !distinct.contains(&other) {
            return Err(Error::NotTwoSample { distinct: distinct.len() });
        }
        let samples = data.samples();
        let terms = data
            .failures_with_risk_start()
            .map(|(f, start)| {
                let n_other = samples[start..].iter().filter(|s| s.covariate == other).count();
                let n_ref = samples.len() - start - n_other;
                (n_ref as f64, n_other as f64, samples[f].covariate == other)
            })
            .collect();
        Ok(TwoSampleTerms { terms })
    }

    fn log_likelihood(&self, alpha: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(n1, n2, in_other)| {
                let own = if in_other { alpha } else { 0.0 };
                own - libm::log(n1 + n2 * libm::exp(alpha))
            })
            .sum()
    }

    fn derivatives(&self, alpha: f64) -> (f64, f64) {
        let ea = libm::exp(alpha);
        self.terms.iter().fold((0.0, 0.0), |(g, h), &(n1, n2, in_other)| {
            let share = n2 * ea / (n1 + n2 * ea);
            let own = if in_other { 1.0 } else { 0.0 };
            (g + own - share, h - share * (1.0 - share))
        })
    }
}

/// Log partial likelihood `Σⱼ [J₂₍ⱼ₎α − log Σ_{i∈Rⱼ}(J₁ᵢ + J₂ᵢe^α)]` for a
/// covariate taking the two values `reference` and `other`.
pub fn two_sample_log_likelihood(data: &SurvivalDataset, reference: f64, other: f64, alpha: f64) -> Result<f64> {
    Ok(TwoSampleTerms::new(data, reference, other)?.log_likelihood(alpha))
}

/// Score and second derivative of [`two_sample_log_likelihood`] in `alpha`.
pub fn two_sample_derivatives(data: &SurvivalDataset, reference: f64, other: f64, alpha: f64) -> Result<(f64, f64)> {
    Ok(TwoSampleTerms::new(data, reference, other)?.derivatives(alpha))
}

/// Cox partial likelihood estimate of the log hazard ratio between two
/// covariate values.
///
/// The likelihood is strictly concave; it has no finite maximizer when every
/// failure of one arm happens while the other arm is out of the risk set.
pub fn two_sample_partial_likelihood_mle(data: &SurvivalDataset, reference: f64, other: f64) -> Result<TwoSampleFit> {
    let terms = TwoSampleTerms::new(data, reference, other)?;
    let in_other = terms.terms.iter().filter(|t| t.2).count() as f64;
    let lower_limit = in_other - terms.terms.iter().filter(|t| t.0 == 0.0).count() as f64;
    let upper_limit = in_other - terms.terms.iter().filter(|t| t.1 > 0.0).count() as f64;
    if !(lower_limit > 0.0 && upper_limit < 0.0) {
        return Err(Error::Divergent { what: "two-sample partial likelihood is monotone" });
    }

    let mut alpha = 0.0;
    let mut value = terms.log_likelihood(alpha);
    for iteration in 1..=200 {
        let (g, h) = terms.derivatives(alpha);
        if libm::fabs(g) <= 1e-12 * (1.0 + terms.terms.len() as f64) {
            return Ok(TwoSampleFit { alpha, log_likelihood: value, iterations: iteration - 1 });
        }
        let mut step = -g / h;
        if libm::fabs(g) < 1e-6 {
            // Objective differences are below rounding here; the concave
            // score makes the plain Newton step safe.
            alpha += step;
            value = terms.log_likelihood(alpha);
            continue;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial = terms.log_likelihood(alpha + step);
            if trial >= value {
                alpha += step;
                value = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(TwoSampleFit { alpha, log_likelihood: value, iterations: iteration });
        }
    }
    Err(Error::NonConvergence { x: other, iterations: 200, gradient_norm: libm::fabs(terms.derivatives(alpha).0) })
}
