//! Complexity-term estimators and the proof-identity checkers.
//!
//! Every Monte-Carlo estimator draws `n_weight_samples` parameter vectors from
//! the prior with [`GaussianFamily::sample_one`], evaluates a per-sample
//! exponent over the whole dataset, and reduces with a log-mean-exp. Weight
//! samples are processed in parallel and reduced in index order, so results
//! do not depend on the number of worker threads.
//!
//! The dataset passed to an estimator stands in for the data distribution
//! `D`; `m` is the size of the training sample the bound refers to. Callers
//! typically pass a held-out split together with the train-split size.

mod gradient;
mod identities;
mod naive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gradient::{
    corollary1_bound, corollary1_lambda_at_log2, corollary1_lambda_pole, corollary2_bound,
    corollary2_exponent, corollary2_from_survey, theorem2_bound, theorem2_exponent,
    Theorem2Exponent,
};
pub use identities::{
    herbst_identity_check, logsobolev_check, mgf_decomposition_check, LogSobolevCheck,
    ENUMERATION_LIMIT, HERBST_QUADRATURE_INTERVALS,
};
pub use naive::{naive_complexity, naive_complexity_from_losses, naive_log_term, sample_losses};

use crate::data::LabeledDataset;
use crate::distributions::GaussianFamily;
use crate::math::{log_mean_exp, log_mean_exp_with_se, mean, mean_with_se};
use crate::nn::{self, LossKind, ParamVector};
use crate::{Error, Result};

/// Float format whose range limits the direct-space evaluations.
///
/// Direct evaluation exponentiates before averaging, so it saturates once an
/// exponent passes `ln(MAX)` of the format. The log-space value is always
/// computed in double precision regardless of this setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectPrecision {
    /// IEEE binary32, the default tensor type of common deep-learning stacks.
    Single,
    Double,
}

impl DirectPrecision {
    /// Largest `x` with `exp(x)` finite in this format.
    pub fn max_exponent(self) -> f64 {
        match self {
            DirectPrecision::Single => (f32::MAX as f64).ln(),
            DirectPrecision::Double => f64::MAX.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_weight_samples: usize,
    /// Initial number of uniformly spaced nodes for the alpha integral.
    pub alpha_quadrature_nodes: usize,
    /// Node doubling stops once the relative change drops below this.
    pub quadrature_tolerance: f64,
    pub max_quadrature_nodes: usize,
    pub seed: u64,
    /// Added to the prior-expected loss when estimating `b`.
    pub b_slack: f64,
    pub direct_precision: DirectPrecision,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_weight_samples: 64,
            alpha_quadrature_nodes: 64,
            quadrature_tolerance: 1e-4,
            max_quadrature_nodes: 1 << 14,
            seed: 0,
            b_slack: 0.5,
            direct_precision: DirectPrecision::Single,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_weight_samples == 0 {
            return Err(Error::InvalidArgument("n_weight_samples must be >= 1".into()));
        }
        if self.alpha_quadrature_nodes < 2 {
            return Err(Error::InvalidArgument("alpha_quadrature_nodes must be >= 2".into()));
        }
        if self.max_quadrature_nodes < self.alpha_quadrature_nodes {
            return Err(Error::InvalidArgument(
                "max_quadrature_nodes must be >= alpha_quadrature_nodes".into(),
            ));
        }
        if !(self.quadrature_tolerance > 0.0) {
            return Err(Error::InvalidArgument("quadrature_tolerance must be positive".into()));
        }
        if !(self.b_slack >= 0.0 && self.b_slack.is_finite()) {
            return Err(Error::InvalidArgument("b_slack must be a nonnegative real".into()));
        }
        Ok(())
    }
}

/// A complexity-term value with its Monte-Carlo uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    /// Direct-space value; `+inf` when that evaluation overflowed.
    pub value: f64,
    /// The same quantity computed entirely in log space.
    pub log_space_value: f64,
    /// Delta-method standard error of the log-mean-exp over weight samples.
    pub std_error: f64,
    pub n_weight_samples: usize,
    pub n_data_points: usize,
    pub overflowed: bool,
}

impl BoundEstimate {
    /// Builds an estimate from per-sample exponents `a_w`, i.e. of
    /// `log mean_w exp(a_w)`.
    pub(crate) fn from_exponents(exponents: &[f64], n_data_points: usize, precision: DirectPrecision) -> Self {
        let (log_space_value, std_error) = log_mean_exp_with_se(exponents);
        let limit = precision.max_exponent();
        let overflowed = exponents.iter().any(|&a| !(a <= limit));
        let value = if overflowed {
            f64::INFINITY
        } else {
            direct_log_mean_exp(exponents)
        };
        Self {
            value,
            log_space_value,
            std_error: if std_error.is_finite() { std_error } else { 0.0 },
            n_weight_samples: exponents.len(),
            n_data_points,
            overflowed,
        }
    }

    /// Deterministic value with no Monte-Carlo error.
    pub fn exact(value: f64, n_data_points: usize) -> Self {
        Self {
            value,
            log_space_value: value,
            std_error: 0.0,
            n_weight_samples: 0,
            n_data_points,
            overflowed: value == f64::INFINITY,
        }
    }
}

/// `log(mean(exp(a)))` without the max shift. Uses `exp_m1`/`ln_1p` so that
/// small exponents keep their relative accuracy.
fn direct_log_mean_exp(exponents: &[f64]) -> f64 {
    let s: f64 = exponents.iter().map(|a| a.exp_m1()).sum();
    (s / exponents.len() as f64).ln_1p()
}

/// Per-sample map over the first `n_weight_samples` prior draws, in parallel
/// with index-ordered results.
pub(crate) fn map_weight_samples<T, F>(prior: &GaussianFamily, cfg: &EstimatorConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ParamVector) -> Result<T> + Sync,
{
    cfg.validate()?;
    (0..cfg.n_weight_samples as u64)
        .into_par_iter()
        .map(|i| f(&prior.sample_one(cfg.seed, i)))
        .collect()
}

fn check_nonempty(data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

pub(crate) fn losses(params: &ParamVector, data: &LabeledDataset, kind: LossKind) -> Result<Vec<f64>> {
    Ok(nn::evaluate_batch(params, data.inputs(), data.labels(), kind, false)?.losses)
}

/// `L_S(w)`: the mean loss over `data`.
pub fn empirical_risk(params: &ParamVector, data: &LabeledDataset, kind: LossKind) -> Result<f64> {
    check_nonempty(data)?;
    Ok(mean(&losses(params, data, kind)?))
}

/// `log M(alpha)` with `M(alpha) = mean_i exp(-alpha l_i)`.
pub fn log_mgf_from_losses(losses: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let scaled: Vec<f64> = losses.iter().map(|l| -alpha * l).collect();
    log_mean_exp(&scaled)
}

/// Empirical `log M(alpha)` of the negated loss over `data`.
pub fn log_mgf(params: &ParamVector, data: &LabeledDataset, kind: LossKind, alpha: f64) -> Result<f64> {
    check_nonempty(data)?;
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(log_mgf_from_losses(&losses(params, data, kind)?, alpha))
}

/// `E_{(x,y)} ||grad_x loss(w, x, y)||^2` over `data`.
pub fn expected_grad_norm(params: &ParamVector, data: &LabeledDataset, kind: LossKind) -> Result<f64> {
    check_nonempty(data)?;
    let eval = nn::evaluate_batch(params, data.inputs(), data.labels(), kind, true)?;
    Ok(mean(&eval.input_grad_sq_norms.expect("requested")))
}

/// Per-weight-sample mean loss and expected squared input-gradient norm,
/// computed in one pass over the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSurvey {
    pub mean_losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// `||w||^2` of each draw.
    pub weight_sq_norms: Vec<f64>,
    pub n_data_points: usize,
}

impl PriorSurvey {
    /// Monte-Carlo `E_{w~p} L_D(w)` and its standard error.
    pub fn expected_loss(&self) -> (f64, f64) {
        mean_with_se(&self.mean_losses)
    }

    pub fn expected_grad_norm(&self) -> (f64, f64) {
        mean_with_se(&self.grad_norms)
    }

    /// Monte-Carlo `L^2 E_{w~p} ||W||^2`, the worst-case gradient norm of a
    /// linear model with an `L`-Lipschitz loss.
    pub fn lipschitz_grad_bound(&self, lipschitz: f64) -> f64 {
        lipschitz * lipschitz * mean(&self.weight_sq_norms)
    }

    /// `b = E_{w~p} L_D(w) + b_slack`.
    pub fn b(&self, b_slack: f64) -> f64 {
        self.expected_loss().0 + b_slack
    }
}

pub fn survey_prior(
    prior: &GaussianFamily,
    data: &LabeledDataset,
    kind: LossKind,
    cfg: &EstimatorConfig,
) -> Result<PriorSurvey> {
    check_nonempty(data)?;
    let triples = map_weight_samples(prior, cfg, |w| {
        let eval = nn::evaluate_batch(w, data.inputs(), data.labels(), kind, true)?;
        Ok((
            mean(&eval.losses),
            mean(&eval.input_grad_sq_norms.expect("requested")),
            w.weight_squared_norm(),
        ))
    })?;
    let mut survey = PriorSurvey {
        mean_losses: Vec::with_capacity(triples.len()),
        grad_norms: Vec::with_capacity(triples.len()),
        weight_sq_norms: Vec::with_capacity(triples.len()),
        n_data_points: data.len(),
    };
    for (l, g, w) in triples {
        survey.mean_losses.push(l);
        survey.grad_norms.push(g);
        survey.weight_sq_norms.push(w);
    }
    Ok(survey)
}

/// Mean loss under the prior plus `cfg.b_slack`: the on-average loss bound
/// `b` used by the nonlinear-model bound.
pub fn estimate_b(prior: &GaussianFamily, data: &LabeledDataset, kind: LossKind, cfg: &EstimatorConfig) -> Result<f64> {
    check_nonempty(data)?;
    let risks = map_weight_samples(prior, cfg, |w| empirical_risk(w, data, kind))?;
    Ok(mean(&risks) + cfg.b_slack)
}

/// `E_q[L_S] + (C + KL + log(1/delta)) / lambda`; infinities propagate.
pub fn alquier_assemble(emp_risk_q: f64, complexity: f64, kl: f64, lambda: f64, delta: f64) -> f64 {
    emp_risk_q + (complexity + kl + (1.0 / delta).ln()) / lambda
}
