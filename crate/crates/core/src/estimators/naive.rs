use super::{check_nonempty, losses, map_weight_samples, BoundEstimate, DirectPrecision, EstimatorConfig};
use crate::data::LabeledDataset;
use crate::distributions::GaussianFamily;
use crate::math::mean;
use crate::nn::LossKind;
use crate::{Error, Result};

use super::log_mgf_from_losses;

/// Per-weight-sample terms of the factorized complexity term:
/// `(lambda L_D(w), m log M(lambda / m))`.
///
/// Their sum is the log of `E_S exp(lambda (L_D - L_S))` for a fixed `w`.
pub fn naive_log_term(sample_losses: &[f64], lambda: f64, m: usize) -> (f64, f64) {
    let l_d = mean(sample_losses);
    let mf = m as f64;
    (lambda * l_d, mf * log_mgf_from_losses(sample_losses, lambda / mf))
}

/// Monte-Carlo estimate of `C(lambda, p)` from its definition.
///
/// Uses `E_S exp(lambda (L_D - L_S)) = exp(lambda L_D) M(lambda/m)^m` with
/// `data` standing in for the distribution. The log-space value is a
/// log-mean-exp of the summed exponents. The direct evaluation forms
/// `exp(lambda L_D)` first and is flagged as overflowed as soon as that
/// factor leaves the range of `cfg.direct_precision`.
pub fn naive_complexity(
    prior: &GaussianFamily,
    data: &LabeledDataset,
    kind: LossKind,
    lambda: f64,
    m: usize,
    cfg: &EstimatorConfig,
) -> Result<BoundEstimate> {
    check_nonempty(data)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let per_sample = sample_losses(prior, data, kind, cfg)?;
    naive_complexity_from_losses(&per_sample, lambda, m, cfg.direct_precision)
}

/// Per-example losses of each of the first `cfg.n_weight_samples` prior draws.
pub fn sample_losses(
    prior: &GaussianFamily,
    data: &LabeledDataset,
    kind: LossKind,
    cfg: &EstimatorConfig,
) -> Result<Vec<Vec<f64>>> {
    check_nonempty(data)?;
    map_weight_samples(prior, cfg, |w| losses(w, data, kind))
}

/// [`naive_complexity`] from precomputed [`sample_losses`], so one pass over
/// the data serves a whole lambda grid.
pub fn naive_complexity_from_losses(
    per_sample: &[Vec<f64>],
    lambda: f64,
    m: usize,
    precision: DirectPrecision,
) -> Result<BoundEstimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let n_data = per_sample.first().map_or(0, Vec::len);
    if per_sample.is_empty() || n_data == 0 {
        return Err(Error::EmptyDataset);
    }
    let terms: Vec<(f64, f64)> = per_sample.iter().map(|l| naive_log_term(l, lambda, m)).collect();
    let exponents: Vec<f64> = terms.iter().map(|(a, b)| a + b).collect();
    let limit = precision.max_exponent();
    let mut est = BoundEstimate::from_exponents(&exponents, n_data, precision);
    if terms.iter().any(|(a, _)| !(*a <= limit)) {
        est.overflowed = true;
        est.value = f64::INFINITY;
    }
    Ok(est)
}
