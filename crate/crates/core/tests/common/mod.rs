#![allow(dead_code)]

use hazrisk_core::{SurvivalDataset, SurvivalSample};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

/// Exponential failure time with rate `exp(psi)`.
pub fn failure_time(rng: &mut ChaCha8Rng, psi: f64) -> f64 {
    -uniform(rng).ln() / psi.exp()
}

/// `X ~ Uniform(lo, hi)`, hazard `exp(psi(X))`, optional `Uniform(0, c)`
/// censoring.
pub fn simulate(
    rng: &mut ChaCha8Rng,
    n: usize,
    lo: f64,
    hi: f64,
    psi: impl Fn(f64) -> f64,
    censor: Option<f64>,
) -> SurvivalDataset {
    let samples = (0..n)
        .map(|_| {
            let x = lo + (hi - lo) * uniform(rng);
            let t = failure_time(rng, psi(x));
            match censor {
                Some(c) => {
                    let cens = c * uniform(rng);
                    SurvivalSample::new(x, t.min(cens), t <= cens)
                }
                None => SurvivalSample::new(x, t, true),
            }
        })
        .collect();
    SurvivalDataset::new(samples).unwrap()
}

pub fn cubic(n: usize, seed: u64) -> SurvivalDataset {
    simulate(&mut rng(seed), n, -1.0, 1.0, |x| x * x * x, None)
}

/// Covariate in `{a, b}` with equal probability, log hazard `0` at `a` and
/// `alpha` at `b`, censoring `Uniform(0, c)`.
pub fn two_point(rng: &mut ChaCha8Rng, n: usize, a: f64, b: f64, alpha: f64, c: f64) -> SurvivalDataset {
    let samples = (0..n)
        .map(|_| {
            let (x, psi) = if uniform(rng) < 0.5 { (a, 0.0) } else { (b, alpha) };
            let t = failure_time(rng, psi);
            let cens = c * uniform(rng);
            SurvivalSample::new(x, t.min(cens), t <= cens)
        })
        .collect();
    SurvivalDataset::new(samples).unwrap()
}

/// `X ~ Uniform(−1, 1)`, group 1 or 2, log hazard `x³ + rho·I(group 2)`.
pub fn two_group(rng: &mut ChaCha8Rng, n: usize, rho: f64, censor: Option<f64>) -> SurvivalDataset {
    let samples = (0..n)
        .map(|_| {
            let x = -1.0 + 2.0 * uniform(rng);
            let z = if uniform(rng) < 0.5 { 1 } else { 2 };
            let t = failure_time(rng, x * x * x + if z == 2 { rho } else { 0.0 });
            let s = match censor {
                Some(c) => {
                    let cens = c * uniform(rng);
                    SurvivalSample::new(x, t.min(cens), t <= cens)
                }
                None => SurvivalSample::new(x, t, true),
            };
            s.with_group(z)
        })
        .collect();
    SurvivalDataset::new(samples).unwrap()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Central difference of `f` at `x` with step `step`.
pub fn central(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// All principal minors of `-h` (row-major `p×p`, `p ≤ 3`) are nonnegative.
pub fn negative_semidefinite(h: &[f64], p: usize, tol: f64) -> bool {
    let m = |i: usize, j: usize| -h[i * p + j];
    let scale = (0..p).map(|i| m(i, i).abs()).fold(1.0, f64::max);
    let mut ok = (0..p).all(|i| m(i, i) >= -tol * scale);
    for i in 0..p {
        for j in i + 1..p {
            ok &= m(i, i) * m(j, j) - m(i, j) * m(j, i) >= -tol * scale * scale;
        }
    }
    if p == 3 {
        let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        ok &= det >= -tol * scale.powi(3);
    }
    assert!(p <= 3);
    ok
}
