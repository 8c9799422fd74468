//! Numerical checks of the identities behind the gradient-norm bound.
//!
//! The first two operate on a uniform discrete loss distribution given as a
//! short list, where every expectation can be computed exactly.

use super::{check_nonempty, log_mgf_from_losses};
use crate::data::LabeledDataset;
use crate::math::{log_sum_exp, mean, sample_sd, simpson};
use crate::nn::{self, LossKind, ParamVector};
use crate::{Error, Result};

/// Largest `|support|^m` the exhaustive enumeration accepts.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Simpson panels for the cumulant integral.
pub const HERBST_QUADRATURE_INTERVALS: usize = 20_000;

fn enumeration_size(n: usize, m: usize) -> Result<u128> {
    let mut size: u128 = 1;
    for _ in 0..m {
        size = size.saturating_mul(n as u128);
        if size > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge { size, limit: ENUMERATION_LIMIT });
        }
    }
    Ok(size)
}

fn check_losses(losses: &[f64]) -> Result<()> {
    if losses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("loss support".into()));
    }
    Ok(())
}

/// Both sides of `E_S exp(lambda (L_D - L_S)) = exp(lambda L_D) M(lambda/m)^m`
/// for the uniform distribution on `losses`.
///
/// The left side averages over all `|losses|^m` equally likely samples.
pub fn mgf_decomposition_check(losses: &[f64], lambda: f64, m: usize) -> Result<(f64, f64)> {
    check_losses(losses)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let n = losses.len();
    let size = enumeration_size(n, m)? as usize;
    let l_d = mean(losses);
    let mf = m as f64;
    let mut idx = vec![0usize; m];
    let mut total = 0.0;
    for _ in 0..size {
        let l_s = idx.iter().map(|&i| losses[i]).sum::<f64>() / mf;
        total += (lambda * (l_d - l_s)).exp();
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    let lhs = total / size as f64;
    let rhs = (lambda * l_d + mf * log_mgf_from_losses(losses, lambda / mf)).exp();
    Ok((lhs, rhs))
}

/// `K'(alpha)` for the uniform distribution on `losses`, with `K = log M / alpha`.
///
/// `K' = (alpha M' - M log M) / (alpha^2 M)`, evaluated as
/// `(-alpha E_alpha[l] - log M) / alpha^2` where `E_alpha` is the tilted mean.
/// At `alpha = 0` the limit is half the variance.
fn cumulant_derivative(losses: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        let mu = mean(losses);
        return 0.5 * losses.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / losses.len() as f64;
    }
    let logw: Vec<f64> = losses.iter().map(|l| -alpha * l).collect();
    let lse = log_sum_exp(logw.iter().copied());
    let tilted: f64 = losses.iter().zip(&logw).map(|(l, lw)| l * (lw - lse).exp()).sum();
    let log_m = lse - (losses.len() as f64).ln();
    (-alpha * tilted - log_m) / (alpha * alpha)
}

/// Both sides of the Herbst reconstruction
/// `M(a) = exp(-a L_D + a int_0^a K'(alpha) d alpha)` with `a = lambda / m`,
/// for the uniform distribution on `losses`.
///
/// The left side is the exact MGF; the right side integrates `K'` with the
/// composite Simpson rule from `K(0) = -L_D`.
pub fn herbst_identity_check(losses: &[f64], lambda: f64, m: usize) -> Result<(f64, f64)> {
    check_losses(losses)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    enumeration_size(losses.len(), m)?;
    let a = lambda / m as f64;
    let lhs = log_mgf_from_losses(losses, a).exp();
    if a == 0.0 {
        return Ok((lhs, 1.0));
    }
    let integral = simpson(|x| cumulant_derivative(losses, x), 0.0, a, HERBST_QUADRATURE_INTERVALS);
    let rhs = (-a * mean(losses) + a * integral).exp();
    Ok((lhs, rhs))
}

/// Monte-Carlo sides of the Gaussian log-Sobolev inequality
/// `alpha M'(alpha) - M log M <= 2 E[exp(-alpha l) alpha^2 ||grad_x l||^2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSobolevCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Delta-method standard error of `rhs - lhs`.
    pub std_error: f64,
    pub n: usize,
}

impl LogSobolevCheck {
    /// `lhs <= rhs + z * std_error`.
    pub fn holds(&self, z: f64) -> bool {
        self.lhs <= self.rhs + z * self.std_error
    }
}

/// Evaluates both sides of the log-Sobolev inequality on every point of
/// `data`, which should be drawn from class-conditional Gaussians.
pub fn logsobolev_check(params: &ParamVector, data: &LabeledDataset, kind: LossKind, alpha: f64) -> Result<LogSobolevCheck> {
    check_nonempty(data)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let eval = nn::evaluate_batch(params, data.inputs(), data.labels(), kind, true)?;
    let g = eval.input_grad_sq_norms.expect("requested");
    let b: Vec<f64> = eval.losses.iter().map(|l| (-alpha * l).exp()).collect();
    let a: Vec<f64> = eval.losses.iter().zip(&b).map(|(l, bi)| -l * bi).collect();
    let r: Vec<f64> = b.iter().zip(&g).map(|(bi, gi)| 2.0 * alpha * alpha * bi * gi).collect();
    let (a_bar, b_bar, r_bar) = (mean(&a), mean(&b), mean(&r));
    let lhs = alpha * a_bar - b_bar * b_bar.ln();
    let coef = b_bar.ln() + 1.0;
    let z: Vec<f64> = (0..b.len()).map(|i| r[i] - alpha * a[i] + coef * b[i]).collect();
    let n = b.len();
    Ok(LogSobolevCheck {
        lhs,
        rhs: r_bar,
        std_error: sample_sd(&z) / (n as f64).sqrt(),
        n,
    })
}
