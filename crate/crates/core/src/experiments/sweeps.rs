//! One function per experiment. Rows are produced in grid order: depth, then
//! prior scale, then lambda.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::data::LabeledDataset;
use crate::distributions::{kl_divergence, GaussianFamily};
use crate::estimators::{
    self, alquier_assemble, corollary1_bound, corollary2_from_survey, naive_complexity_from_losses,
    sample_losses, survey_prior, BoundEstimate, PriorSurvey,
};
use crate::math::mean;
use crate::nn::{lipschitz_bound, MlpArchitecture};
use crate::subgamma;
use crate::trainer::{self, TrainConfig};

use super::checks;
use super::output::{Cell, Table};
use super::{Experiment, ExperimentError, LambdaSpec, Report, RunOutcome, SweepSpec};

type Result<T> = std::result::Result<T, ExperimentError>;

macro_rules! columns {
    ($($c:literal),* $(,)?) => {
        &["depth", "hidden_widths", "param_count", "sigma_p", $($c),*]
    };
}

const NAIVE: &[&str] = columns!(
    "lambda", "value", "log_space_value", "std_error", "overflowed", "n_weight_samples", "n_data_points"
);
const GRADNORM: &[&str] = columns!("grad_norm_mean", "grad_norm_se", "lipschitz_worst_case", "n_weight_samples");
const LOSS: &[&str] = columns!("expected_loss", "expected_loss_se", "b", "n_weight_samples");
const BOUND: &[&str] = columns!(
    "lambda",
    "b",
    "grad_norm_mean",
    "value",
    "log_space_value",
    "std_error",
    "overflowed",
    "linear_closed_form",
    "n_weight_samples",
);
const FIT: &[&str] = columns!(
    "v",
    "c",
    "lambda_max",
    "residual",
    "valid",
    "n_points",
    "grid_lambda_min",
    "grid_lambda_max",
);
const TRAIN: &[&str] = columns!(
    "posterior_sigma",
    "epochs",
    "final_epoch_loss",
    "train_loss",
    "train_accuracy",
    "test_loss",
    "test_accuracy",
    "posterior_train_loss",
    "kl",
    "b",
    "bound_kind",
    "bound_c_sqrt_m",
    "bound_c_sqrt_m_overflowed",
    "bound_c_m",
    "bound_c_m_overflowed",
    "gradnorm_c_sqrt_m",
    "gradnorm_c_sqrt_m_overflowed",
    "gradnorm_c_m",
    "gradnorm_c_m_overflowed",
    "pac_bayes_sqrt_m",
);

pub(super) fn columns(e: Experiment) -> &'static [&'static str] {
    match e {
        Experiment::NaiveVsLambda => NAIVE,
        Experiment::GradnormVsVariance => GRADNORM,
        Experiment::LossVsVariance => LOSS,
        Experiment::BoundVsVariance => BOUND,
        Experiment::FitSubgamma => FIT,
        Experiment::TrainReport => TRAIN,
        Experiment::IdentityChecks => checks::COLUMNS,
    }
}

struct Ctx<'a> {
    spec: &'a SweepSpec,
    train: LabeledDataset,
    heldout: LabeledDataset,
}

impl Ctx<'_> {
    fn m(&self) -> usize {
        self.train.len()
    }

    fn depths(&self) -> &[usize] {
        self.spec.grids.depths.as_deref().expect("resolved")
    }

    fn sigmas(&self) -> &[f64] {
        self.spec.grids.sigmas.as_deref().expect("resolved")
    }

    fn lambdas(&self) -> Result<Vec<f64>> {
        let specs: &[LambdaSpec] = self.spec.grids.lambdas.as_deref().unwrap_or_default();
        specs.iter().map(|l| l.resolve(self.m())).collect()
    }

    fn arch(&self, depth: usize) -> Result<Arc<MlpArchitecture>> {
        Ok(self.spec.model.architecture(self.train.input_dim(), self.train.class_count(), depth)?)
    }

    fn context(&self) -> Value {
        json!({
            "m": self.m(),
            "n_heldout": self.heldout.len(),
            "classes": self.train.class_count(),
            "input_dim": self.train.input_dim(),
            "provenance": self.train.provenance(),
            "risk_proxy": "held-out split",
            "lipschitz_constant": lipschitz_bound(self.spec.model.loss),
            "last_partial_batch": "kept",
            "posterior_mean": "final SGD iterate",
        })
    }

    /// `(depth, arch, sigma, prior)` in grid order.
    fn models(&self) -> Result<Vec<Model>> {
        let mut out = Vec::new();
        for &depth in self.depths() {
            let arch = self.arch(depth)?;
            for &sigma in self.sigmas() {
                let prior = GaussianFamily::isotropic(arch.clone(), sigma)?;
                out.push((depth, arch.clone(), sigma, prior));
            }
        }
        Ok(out)
    }
}

/// `(depth, arch, sigma, prior)`.
type Model = (usize, Arc<MlpArchitecture>, f64, GaussianFamily);

fn model_cells(depth: usize, arch: &MlpArchitecture, sigma: f64) -> Vec<Cell> {
    let widths: Vec<String> = arch.hidden_widths().iter().map(usize::to_string).collect();
    vec![depth.into(), widths.join("x").into(), arch.param_count().into(), sigma.into()]
}

fn row(mut head: Vec<Cell>, tail: impl IntoIterator<Item = Cell>) -> Vec<Cell> {
    head.extend(tail);
    head
}

pub(super) fn run(spec: &SweepSpec) -> Result<RunOutcome> {
    let echo = serde_json::to_value(spec).expect("spec serializes");
    if spec.experiment == Experiment::IdentityChecks {
        let (table, failed) = checks::run_identity_checks(&spec.identity)?;
        let total = table.rows().len();
        let report = Report { experiment: spec.experiment, table, config: json!({ "spec": echo, "context": {} }) };
        let failure = (failed > 0).then_some(ExperimentError::ChecksFailed { failed, total });
        return Ok(RunOutcome { report, failure });
    }
    let (train, heldout) = spec.load_data()?;
    let ctx = Ctx { spec, train, heldout };
    log::info!("m = {}, held-out n = {}", ctx.m(), ctx.heldout.len());
    let table = match spec.experiment {
        Experiment::NaiveVsLambda => naive(&ctx)?,
        Experiment::GradnormVsVariance => gradnorm(&ctx)?,
        Experiment::LossVsVariance => loss(&ctx)?,
        Experiment::BoundVsVariance => bound(&ctx)?,
        Experiment::FitSubgamma => fit(&ctx)?,
        Experiment::TrainReport => train_report(&ctx)?,
        Experiment::IdentityChecks => unreachable!(),
    };
    let config = json!({ "spec": echo, "context": ctx.context() });
    Ok(RunOutcome { report: Report { experiment: spec.experiment, table, config }, failure: None })
}

fn naive(ctx: &Ctx) -> Result<Table> {
    let cfg = &ctx.spec.estimator;
    let lambdas = ctx.lambdas()?;
    let mut t = Table::new(NAIVE);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("naive: depth {depth}, sigma {sigma}");
        let per_sample = sample_losses(&prior, &ctx.heldout, ctx.spec.model.loss, cfg)?;
        for &lambda in &lambdas {
            let e = naive_complexity_from_losses(&per_sample, lambda, ctx.m(), cfg.direct_precision)?;
            t.push(row(
                model_cells(depth, &arch, sigma),
                [
                    lambda.into(),
                    e.value.into(),
                    e.log_space_value.into(),
                    e.std_error.into(),
                    e.overflowed.into(),
                    e.n_weight_samples.into(),
                    e.n_data_points.into(),
                ],
            ));
        }
    }
    Ok(t)
}

fn survey(ctx: &Ctx, prior: &GaussianFamily) -> Result<PriorSurvey> {
    Ok(survey_prior(prior, &ctx.heldout, ctx.spec.model.loss, &ctx.spec.estimator)?)
}

fn gradnorm(ctx: &Ctx) -> Result<Table> {
    let mut t = Table::new(GRADNORM);
    let lip = lipschitz_bound(ctx.spec.model.loss);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("gradnorm: depth {depth}, sigma {sigma}");
        let s = survey(ctx, &prior)?;
        let (g, se) = s.expected_grad_norm();
        let worst = arch.is_linear().then(|| s.lipschitz_grad_bound(lip));
        t.push(row(
            model_cells(depth, &arch, sigma),
            [g.into(), se.into(), worst.into(), s.grad_norms.len().into()],
        ));
    }
    Ok(t)
}

fn loss(ctx: &Ctx) -> Result<Table> {
    let mut t = Table::new(LOSS);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("loss: depth {depth}, sigma {sigma}");
        let s = survey(ctx, &prior)?;
        let (l, se) = s.expected_loss();
        t.push(row(
            model_cells(depth, &arch, sigma),
            [l.into(), se.into(), s.b(ctx.spec.estimator.b_slack).into(), s.mean_losses.len().into()],
        ));
    }
    Ok(t)
}

/// Closed-form bound for a linear model, `None` for deeper ones.
fn linear_closed_form(ctx: &Ctx, arch: &MlpArchitecture, sigma: f64, lambda: f64) -> Option<f64> {
    arch.is_linear().then(|| {
        corollary1_bound(
            arch.class_count(),
            arch.input_dim(),
            ctx.m(),
            lipschitz_bound(ctx.spec.model.loss),
            sigma,
            lambda,
        )
    })
}

fn bound(ctx: &Ctx) -> Result<Table> {
    let cfg = &ctx.spec.estimator;
    let lambdas = ctx.lambdas()?;
    let mut t = Table::new(BOUND);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("bound: depth {depth}, sigma {sigma}");
        let s = survey(ctx, &prior)?;
        let b = s.b(cfg.b_slack);
        for &lambda in &lambdas {
            let e = corollary2_from_survey(&s, lambda, ctx.m(), b, cfg.direct_precision)?;
            t.push(row(
                model_cells(depth, &arch, sigma),
                [
                    lambda.into(),
                    b.into(),
                    s.expected_grad_norm().0.into(),
                    e.value.into(),
                    e.log_space_value.into(),
                    e.std_error.into(),
                    e.overflowed.into(),
                    linear_closed_form(ctx, &arch, sigma, lambda).into(),
                    e.n_weight_samples.into(),
                ],
            ));
        }
    }
    Ok(t)
}

/// `n` log-spaced points covering `[1, hi]`.
pub(crate) fn log_grid(hi: f64, n: usize) -> Vec<f64> {
    let top = hi.ln();
    (0..n).map(|i| (top * i as f64 / (n - 1) as f64).exp()).collect()
}

fn fit(ctx: &Ctx) -> Result<Table> {
    let cfg = &ctx.spec.estimator;
    let lambdas = match &ctx.spec.grids.lambdas {
        Some(_) => ctx.lambdas()?,
        None => log_grid(ctx.m() as f64, ctx.spec.grids.lambda_points),
    };
    let mut t = Table::new(FIT);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("fit: depth {depth}, sigma {sigma}");
        let s = survey(ctx, &prior)?;
        let b = s.b(cfg.b_slack);
        let mut grid = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let e = corollary2_from_survey(&s, lambda, ctx.m(), b, cfg.direct_precision)?;
            if e.log_space_value.is_finite() {
                grid.push((lambda, e.log_space_value));
            }
        }
        let lo = grid.first().map(|p| p.0);
        let hi = grid.last().map(|p| p.0);
        let tail: Vec<Cell> = if grid.is_empty() {
            vec![Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, false.into()]
        } else {
            let f = subgamma::fit(&grid, &ctx.spec.subgamma)?;
            vec![
                f.v.into(),
                f.c.into(),
                f.lambda_max.into(),
                f.residual.into(),
                subgamma::check(&f, &grid).into(),
            ]
        };
        t.push(row(
            model_cells(depth, &arch, sigma),
            tail.into_iter().chain([grid.len().into(), lo.into(), hi.into()]),
        ));
    }
    Ok(t)
}

fn bound_cells(e: &BoundEstimate) -> [Cell; 2] {
    [e.value.into(), e.overflowed.into()]
}

fn train_report(ctx: &Ctx) -> Result<Table> {
    let spec = ctx.spec;
    let cfg = &spec.estimator;
    let kind = spec.model.loss;
    let m = ctx.m();
    let (sqrt_m, mf) = ((m as f64).sqrt(), m as f64);
    let mut t = Table::new(TRAIN);
    for (depth, arch, sigma, prior) in ctx.models()? {
        log::info!("train-report: depth {depth}, sigma {sigma}");
        let train_cfg = TrainConfig { init_stddev: sigma, ..spec.train.clone() };
        let outcome = trainer::train(arch.clone(), &ctx.train, kind, &train_cfg)?;
        let w = &outcome.params;
        let (train_loss, train_acc) = trainer::evaluate(w, &ctx.train, kind)?;
        let (test_loss, test_acc) = trainer::evaluate(w, &ctx.heldout, kind)?;
        let posterior = GaussianFamily::around(w, spec.report.posterior_sigma)?;
        let kl = kl_divergence(&posterior, &prior)?;
        let risks = estimators::map_weight_samples(&posterior, cfg, |q| estimators::empirical_risk(q, &ctx.train, kind))?;
        let posterior_loss = mean(&risks);

        let s = survey(ctx, &prior)?;
        let b = s.b(cfg.b_slack);
        let g_sqrt = corollary2_from_survey(&s, sqrt_m, m, b, cfg.direct_precision)?;
        let g_m = corollary2_from_survey(&s, mf, m, b, cfg.direct_precision)?;
        let (kind_name, c_sqrt, c_m) = match linear_closed_form(ctx, &arch, sigma, sqrt_m) {
            Some(v) => (
                "linear-closed-form",
                BoundEstimate::exact(v, m),
                BoundEstimate::exact(linear_closed_form(ctx, &arch, sigma, mf).expect("linear"), m),
            ),
            None => ("gradient-norm", g_sqrt, g_m),
        };
        let pac_bayes = alquier_assemble(posterior_loss, c_sqrt.value, kl, sqrt_m, spec.report.delta);
        let mut tail: Vec<Cell> = vec![
            spec.report.posterior_sigma.into(),
            train_cfg.epochs.into(),
            outcome.epoch_losses.last().copied().into(),
            train_loss.into(),
            train_acc.into(),
            test_loss.into(),
            test_acc.into(),
            posterior_loss.into(),
            kl.into(),
            b.into(),
            kind_name.into(),
        ];
        tail.extend(bound_cells(&c_sqrt));
        tail.extend(bound_cells(&c_m));
        tail.extend(bound_cells(&g_sqrt));
        tail.extend(bound_cells(&g_m));
        tail.push(pac_bayes.into());
        t.push(row(model_cells(depth, &arch, sigma), tail));
    }
    Ok(t)
}
