//! Chi-square distribution helpers for the change detector and consistency checks.

use statrs::function::gamma::gamma_lr;

/// `P(X ≤ x)` for `X ~ χ²(dof)`.
pub fn cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(dof / 2.0, x / 2.0)
    }
}

/// Inverse CDF by bisection on the regularized lower incomplete gamma function.
///
/// Converges to an absolute bracket width of `1e-10`.
pub fn quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    assert!(dof > 0.0, "degrees of freedom must be positive");
    let mut lo = 0.0;
    let mut hi = dof.max(1.0);
    while cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided `(1 - significance)` acceptance interval for the mean of `runs`
/// independent `χ²(dim)` statistics.
pub fn mean_interval(dim: usize, runs: usize, significance: f64) -> (f64, f64) {
    let dof = (dim * runs) as f64;
    let n = runs as f64;
    (
        quantile(significance / 2.0, dof) / n,
        quantile(1.0 - significance / 2.0, dof) / n,
    )
}
