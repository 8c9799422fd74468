//! PAC-Bayesian complexity terms for classifiers trained with the
//! negative log-likelihood.
//!
//! The complexity term of an Alquier-style PAC-Bayes bound,
//! `C(lambda, p) = log E_{w~p, S~D^m} exp(lambda (L_D(w) - L_S(w)))`, cannot be
//! evaluated directly for the rates of interest: `exp(lambda L_D)` overflows
//! long before `lambda` reaches `sqrt(m)`. This crate estimates it three ways:
//!
//! * [`estimators::naive_complexity`] evaluates the definition by Monte Carlo,
//!   both in log space and in direct space, so the overflow can be observed;
//! * [`estimators::theorem2_bound`] and [`estimators::corollary2_bound`] bound
//!   it by the expected squared norm of the loss gradient with respect to the
//!   *input*, computed entirely in log space;
//! * [`estimators::corollary1_bound`] is the closed form for linear models with
//!   a Lipschitz loss.
//!
//! [`subgamma`] fits envelopes `lambda^2 v / (2 (1 - lambda c))` that dominate
//! measured curves, [`trainer`] produces posterior means with SGD, and
//! [`experiments`] wires everything into reproducible sweeps (also exposed by
//! the `pacgrad` binary).

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distributions;
pub mod estimators;
pub mod experiments;
pub mod math;
pub mod nn;
pub mod rng;
pub mod subgamma;
pub mod trainer;

pub use data::{load_idx, split, synth_gaussian, IdxError, LabeledDataset, Provenance};
pub use distributions::{kl_divergence, GaussianFamily, StdDev};
pub use estimators::{BoundEstimate, DirectPrecision, EstimatorConfig};
pub use nn::{Activation, LossKind, MlpArchitecture, ParamVector};
pub use subgamma::SubGammaFit;
pub use trainer::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("enumeration of {size} samples exceeds the limit of {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
