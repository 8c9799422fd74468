//! Numerically stable reductions shared by the estimators.

/// `log(sum(exp(x_i)))`, shifted by the maximum.
///
/// Returns `-inf` for an empty input or when every term is `-inf`, and
/// `+inf` if any term is `+inf`.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + iter.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(x_i)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(values.iter().copied()) - (values.len() as f64).ln()
}

/// `log(mean(exp(x_i)))` together with its delta-method standard error.
///
/// With `u_i = exp(x_i - max)`, the estimate is `max + log(mean(u))` and its
/// standard error is `sd(u) / (sqrt(n) * mean(u))`. A single sample has
/// standard error 0.
pub fn log_mean_exp_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (max, 0.0);
    }
    let u: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let mu = mean(&u);
    let est = max + mu.ln();
    if n == 1 {
        return (est, 0.0);
    }
    (est, sample_sd(&u) / ((n as f64).sqrt() * mu))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; 0 when `n < 2`.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Mean and standard error of the mean.
pub fn mean_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    (mean(values), sample_sd(values) / (n as f64).sqrt())
}

/// `n` uniformly spaced nodes on `[a, b]` with composite-trapezoid weights.
pub fn trapezoid_rule(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "trapezoid rule needs at least two nodes");
    let h = (b - a) / (n - 1) as f64;
    let nodes = (0..n).map(|j| a + h * j as f64).collect();
    let weights = (0..n)
        .map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

/// Composite Simpson rule over `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * j as f64);
    }
    s * h / 3.0
}
