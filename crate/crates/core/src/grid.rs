//! Evaluation grids and piecewise-linear interpolation.

use alloc::vec::Vec;

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let last = (n - 1) as f64;
            (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * (k as f64 / last) }).collect()
        }
    }
}

/// Linear interpolation through `(xs, ys)` with `xs` increasing; values
/// outside the range clamp to the nearest end.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if xs.is_empty() {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&g| g <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Trapezoid-rule weights for the nodes `xs`.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = alloc::vec![0.0; n];
    for k in 1..n {
        let half = 0.5 * (xs[k] - xs[k - 1]);
        w[k - 1] += half;
        w[k] += half;
    }
    w
}
