//! Streaming sample statistics with a fixed reduction order.

/// Normal quantile for a two-sided 99% interval.
pub const Z99: f64 = 2.5758293035489004;

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Median of `groups` block means, a heavy-tail-robust location estimate.
pub fn median_of_means(xs: &[f64], groups: usize) -> f64 {
    let g = groups.clamp(1, xs.len().max(1));
    let size = xs.len() / g;
    if size == 0 {
        return f64::NAN;
    }
    let mut means: Vec<f64> = xs
        .chunks_exact(size)
        .take(g)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let m = means.len();
    if m % 2 == 1 {
        means[m / 2]
    } else {
        0.5 * (means[m / 2 - 1] + means[m / 2])
    }
}

/// Ratio of paired means with a delta-method standard error
/// (`lhs` and `rhs` evaluated on the same paths).
pub fn ratio_stderr(lhs: &[f64], rhs: &[f64]) -> (f64, f64) {
    let (l, _) = mean_stderr(lhs);
    let (r, _) = mean_stderr(rhs);
    if r == 0.0 {
        return (if l == 0.0 { 0.0 } else { f64::INFINITY }, 0.0);
    }
    let ratio = l / r;
    let resid: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - ratio * b).collect();
    let (_, se) = mean_stderr(&resid);
    (ratio, se / r)
}
