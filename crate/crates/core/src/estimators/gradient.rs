//! Bounds on the complexity term through input-gradient norms.

use super::{check_nonempty, map_weight_samples, BoundEstimate, EstimatorConfig, PriorSurvey};
use crate::data::LabeledDataset;
use crate::distributions::GaussianFamily;
use crate::estimators::DirectPrecision;
use crate::math::{mean, trapezoid_rule};
use crate::nn::{self, LossKind};
use crate::{Error, Result};

fn check_lambda_m(lambda: f64, m: usize) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    Ok(())
}

/// Exponent of one weight sample in the gradient-norm bound, with the node
/// count at which the alpha quadrature was accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Exponent {
    pub exponent: f64,
    pub nodes: usize,
    pub converged: bool,
}

/// `2 lambda mean_i[G_i int_0^{lambda/m} exp(-alpha l_i) / M(alpha) d alpha]`
/// for one weight sample, from its per-example losses `l_i` and squared input
/// gradient norms `G_i`.
///
/// The integral uses the composite trapezoid rule starting from `nodes`
/// uniform nodes, doubling the interval count until the exponent changes by
/// less than `tol` (relative) or `max_nodes` is reached.
pub fn theorem2_exponent(
    losses: &[f64],
    grad_norms: &[f64],
    lambda: f64,
    m: usize,
    nodes: usize,
    tol: f64,
    max_nodes: usize,
) -> Theorem2Exponent {
    if grad_norms.iter().any(|g| !g.is_finite()) || losses.iter().any(|l| !l.is_finite()) {
        return Theorem2Exponent { exponent: f64::INFINITY, nodes, converged: false };
    }
    let upper = lambda / m as f64;
    let eval = |n: usize| {
        let (alphas, weights) = trapezoid_rule(0.0, upper, n);
        let log_m: Vec<f64> = alphas.iter().map(|&a| super::log_mgf_from_losses(losses, a)).collect();
        let inner: Vec<f64> = losses
            .iter()
            .zip(grad_norms)
            .map(|(&l, &g)| {
                let integral: f64 = alphas
                    .iter()
                    .zip(&weights)
                    .zip(&log_m)
                    .map(|((&a, &wt), &lm)| wt * (-a * l - lm).exp())
                    .sum();
                g * integral
            })
            .collect();
        2.0 * lambda * mean(&inner)
    };
    let mut n = nodes;
    let mut prev = eval(n);
    loop {
        // Doubling the interval count keeps every old node.
        let next_n = 2 * n - 1;
        if next_n > max_nodes {
            return Theorem2Exponent { exponent: prev, nodes: n, converged: false };
        }
        let next = eval(next_n);
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if (next - prev).abs() <= tol * scale {
            return Theorem2Exponent { exponent: next, nodes: next_n, converged: true };
        }
        prev = next;
        n = next_n;
    }
}

/// Monte-Carlo estimate of the gradient-norm bound
/// `log E_{w~p} exp(2 lambda E[||grad_x l||^2 int_0^{lambda/m} exp(-alpha l) / M(alpha) d alpha])`.
///
/// A weight sample with a non-finite loss or gradient contributes `+inf` and
/// marks the estimate as overflowed.
pub fn theorem2_bound(
    prior: &GaussianFamily,
    data: &LabeledDataset,
    kind: LossKind,
    lambda: f64,
    m: usize,
    cfg: &EstimatorConfig,
) -> Result<BoundEstimate> {
    check_nonempty(data)?;
    check_lambda_m(lambda, m)?;
    let exps = map_weight_samples(prior, cfg, |w| {
        let eval = nn::evaluate_batch(w, data.inputs(), data.labels(), kind, true)?;
        let g = eval.input_grad_sq_norms.expect("requested");
        Ok(theorem2_exponent(
            &eval.losses,
            &g,
            lambda,
            m,
            cfg.alpha_quadrature_nodes,
            cfg.quadrature_tolerance,
            cfg.max_quadrature_nodes,
        ))
    })?;
    let unconverged = exps.iter().filter(|e| !e.converged && e.exponent.is_finite()).count();
    if unconverged > 0 {
        log::warn!("alpha quadrature did not converge for {unconverged} weight samples");
    }
    let exponents: Vec<f64> = exps.iter().map(|e| e.exponent).collect();
    Ok(BoundEstimate::from_exponents(&exponents, data.len(), cfg.direct_precision))
}

/// `k d log(m / (m - 8 L^2 lambda^2 sigma^2))` for the linear model; `+inf`
/// once the denominator is no longer positive.
pub fn corollary1_bound(k: usize, d: usize, m: usize, lipschitz: f64, sigma: f64, lambda: f64) -> f64 {
    let m = m as f64;
    let t = 8.0 * lipschitz * lipschitz * lambda * lambda * sigma * sigma;
    if t >= m {
        return f64::INFINITY;
    }
    // log(m / (m - t)) = -log(1 - t/m)
    -(k as f64) * (d as f64) * (-t / m).ln_1p()
}

/// `lambda = sqrt(m) / (4 L sigma)`, where the linear-model bound equals
/// `k d log 2`.
pub fn corollary1_lambda_at_log2(m: usize, lipschitz: f64, sigma: f64) -> f64 {
    (m as f64).sqrt() / (4.0 * lipschitz * sigma)
}

/// `lambda = sqrt(m / 8) / (L sigma)`, the pole of the linear-model bound.
pub fn corollary1_lambda_pole(m: usize, lipschitz: f64, sigma: f64) -> f64 {
    (m as f64 / 8.0).sqrt() / (lipschitz * sigma)
}

/// `(2 lambda^2 e^b / m) G` for one weight sample.
pub fn corollary2_exponent(lambda: f64, m: usize, b: f64, grad_norm: f64) -> f64 {
    2.0 * lambda * lambda * b.exp() / m as f64 * grad_norm
}

fn check_corollary2(lambda: f64, m: usize, b: f64) -> Result<()> {
    check_lambda_m(lambda, m)?;
    if lambda > m as f64 {
        return Err(Error::InvalidArgument(format!(
            "the nonlinear-model bound needs 0 < lambda <= m, got lambda {lambda} with m {m}"
        )));
    }
    if !b.is_finite() {
        return Err(Error::NonFinite("loss bound b".into()));
    }
    Ok(())
}

/// The nonlinear-model bound evaluated on the gradient norms of a survey.
pub fn corollary2_from_survey(
    survey: &PriorSurvey,
    lambda: f64,
    m: usize,
    b: f64,
    precision: DirectPrecision,
) -> Result<BoundEstimate> {
    check_corollary2(lambda, m, b)?;
    let exponents: Vec<f64> = survey
        .grad_norms
        .iter()
        .map(|&g| corollary2_exponent(lambda, m, b, g))
        .collect();
    Ok(BoundEstimate::from_exponents(&exponents, survey.n_data_points, precision))
}

/// `log E_{w~p} exp((2 lambda^2 e^b / m) E||grad_x l||^2)`, valid for
/// `0 < lambda <= m` when the loss is on average bounded by `b`.
pub fn corollary2_bound(
    prior: &GaussianFamily,
    data: &LabeledDataset,
    kind: LossKind,
    lambda: f64,
    m: usize,
    b: f64,
    cfg: &EstimatorConfig,
) -> Result<BoundEstimate> {
    check_nonempty(data)?;
    check_corollary2(lambda, m, b)?;
    let grad_norms = map_weight_samples(prior, cfg, |w| super::expected_grad_norm(w, data, kind))?;
    let survey = PriorSurvey {
        mean_losses: Vec::new(),
        grad_norms,
        weight_sq_norms: Vec::new(),
        n_data_points: data.len(),
    };
    corollary2_from_survey(&survey, lambda, m, b, cfg.direct_precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::nn::MlpArchitecture;
    use ndarray::Array2;
    use std::sync::Arc;

    #[test]
    fn corollary1_log2_point_and_pole() {
        let (k, d, m, l, s) = (10, 784, 60000, 2f64.sqrt(), 0.1);
        let lam = corollary1_lambda_at_log2(m, l, s);
        let v = corollary1_bound(k, d, m, l, s, lam);
        assert!((v - 7840.0 * 2f64.ln()).abs() < 1e-12 * v, "{v}");
        let pole = corollary1_lambda_pole(m, l, s);
        assert_eq!(corollary1_bound(k, d, m, l, s, pole * (1.0 + 1e-12)), f64::INFINITY);
        assert!(corollary1_bound(k, d, m, l, s, pole * 0.999).is_finite());
        assert_eq!(corollary1_bound(k, d, m, l, s, 0.0), 0.0);
    }

    #[test]
    fn theorem2_exponent_constant_loss() {
        // Constant loss: the integrand is 1, so the exponent is 2 lambda G lambda/m.
        let e = theorem2_exponent(&[0.7; 4], &[3.0; 4], 2.0, 8, 4, 1e-10, 1 << 10);
        assert!((e.exponent - 2.0 * 2.0 * 3.0 * 0.25).abs() < 1e-12);
        assert!(e.converged);
    }

    #[test]
    fn theorem2_exponent_non_finite_gradient() {
        let e = theorem2_exponent(&[0.1, 0.2], &[1.0, f64::INFINITY], 1.0, 1, 8, 1e-4, 64);
        assert_eq!(e.exponent, f64::INFINITY);
    }

    #[test]
    fn corollary2_rejects_lambda_above_m() {
        let x = Array2::zeros((3, 2));
        let data = LabeledDataset::new(x, vec![0, 1, 0], 2, Provenance::InMemory).unwrap();
        let prior = GaussianFamily::isotropic(Arc::new(MlpArchitecture::linear(2, 2).unwrap()), 0.1).unwrap();
        let cfg = EstimatorConfig::default();
        assert!(corollary2_bound(&prior, &data, LossKind::Nll, 4.0, 3, 1.0, &cfg).is_err());
        assert!(corollary2_bound(&prior, &data, LossKind::Nll, 0.0, 3, 1.0, &cfg).is_err());
        assert!(corollary2_bound(&prior, &data, LossKind::Nll, 3.0, 3, 1.0, &cfg).is_ok());
    }

    #[test]
    fn zero_prior_bounds_vanish() {
        let x = Array2::from_shape_fn((8, 2), |(i, j)| (i as f64 - 3.5) * if j == 0 { 1.0 } else { -0.5 });
        let labels = (0..8).map(|i| i % 2).collect();
        let data = LabeledDataset::new(x, labels, 2, Provenance::InMemory).unwrap();
        let prior = GaussianFamily::isotropic(Arc::new(MlpArchitecture::linear(2, 2).unwrap()), 1e-30).unwrap();
        let cfg = EstimatorConfig { n_weight_samples: 4, ..Default::default() };
        let t = theorem2_bound(&prior, &data, LossKind::Nll, 3.0, 8, &cfg).unwrap();
        let c = corollary2_bound(&prior, &data, LossKind::Nll, 3.0, 8, 1.0, &cfg).unwrap();
        assert!(t.value.abs() < 1e-9 && c.value.abs() < 1e-9);
    }
}
