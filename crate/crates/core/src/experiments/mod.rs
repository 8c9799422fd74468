//! Reproducible sweeps over prior scales, depths and lambda grids.
//!
//! A [`SweepSpec`] is read from TOML, adjusted by command-line flags and run
//! with [`run`]. Every output embeds the fully resolved spec, so a result file
//! is enough to reproduce itself.
//!
//! Estimators treat the held-out split as the data distribution and use the
//! train-split size as `m`.

pub mod checks;
pub mod output;
mod sweeps;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{self, LabeledDataset};
use crate::estimators::EstimatorConfig;
use crate::nn::{LossKind, MlpArchitecture};
use crate::subgamma::FitConfig;
use crate::trainer::TrainConfig;

pub use output::{Cell, OutputFormat, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    NaiveVsLambda,
    GradnormVsVariance,
    LossVsVariance,
    BoundVsVariance,
    FitSubgamma,
    TrainReport,
    IdentityChecks,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::NaiveVsLambda,
        Experiment::GradnormVsVariance,
        Experiment::LossVsVariance,
        Experiment::BoundVsVariance,
        Experiment::FitSubgamma,
        Experiment::TrainReport,
        Experiment::IdentityChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NaiveVsLambda => "naive-vs-lambda",
            Experiment::GradnormVsVariance => "gradnorm-vs-variance",
            Experiment::LossVsVariance => "loss-vs-variance",
            Experiment::BoundVsVariance => "bound-vs-variance",
            Experiment::FitSubgamma => "fit-subgamma",
            Experiment::TrainReport => "train-report",
            Experiment::IdentityChecks => "identity-checks",
        }
    }

    /// Output columns, fixed per experiment.
    pub fn columns(self) -> &'static [&'static str] {
        sweeps::columns(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot load data: {0}")]
    Data(#[source] crate::Error),
    #[error("{0}")]
    Divergence(#[source] crate::Error),
    #[error("{0}")]
    Compute(#[source] crate::Error),
    #[error("{failed} of {total} identity checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl ExperimentError {
    /// Process exit status for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Compute(_) => 1,
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) => 3,
            ExperimentError::Divergence(_) => 4,
            ExperimentError::ChecksFailed { .. } => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Compute(_) => "compute",
            ExperimentError::Config(_) => "config",
            ExperimentError::Data(_) => "data",
            ExperimentError::Divergence(_) => "divergence",
            ExperimentError::ChecksFailed { .. } => "checks-failed",
        }
    }

    /// One-line machine-readable error record.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() })
    }
}

impl From<crate::Error> for ExperimentError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Divergence { .. } => ExperimentError::Divergence(e),
            crate::Error::Idx(_) => ExperimentError::Data(e),
            e => ExperimentError::Compute(e),
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// A grid value for lambda: a number, `"m"` or `"sqrt_m"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(f64),
    Symbol(String),
}

impl LambdaSpec {
    pub fn resolve(&self, m: usize) -> Result<f64, ExperimentError> {
        match self {
            LambdaSpec::Value(v) => Ok(*v),
            LambdaSpec::Symbol(s) if s == "m" => Ok(m as f64),
            LambdaSpec::Symbol(s) if s == "sqrt_m" => Ok((m as f64).sqrt()),
            LambdaSpec::Symbol(s) => Err(config_err(format!("unknown lambda symbol {s:?}; use a number, \"m\" or \"sqrt_m\""))),
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "m" | "sqrt_m" => Ok(LambdaSpec::Symbol(s.trim().to_owned())),
            other => other
                .parse::<f64>()
                .map(LambdaSpec::Value)
                .map_err(|_| format!("lambda must be a number, \"m\" or \"sqrt_m\", got {other:?}")),
        }
    }
}

/// Class-conditional Gaussian data: class `y` is centred at
/// `separation * e_(y mod dim)`, negated for every second pass over the axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub sigma: f64,
    pub n_per_class: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { classes: 2, dim: 2, sigma: 1.0, n_per_class: 500, separation: 2.0, seed: 0 }
    }
}

impl FromStr for SyntheticSpec {
    type Err = String;

    /// Parses `k=3,d=10,sigma=1,n=500,sep=2,seed=7`; omitted keys keep their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in synthetic spec, got {part:?}"))?;
            let bad_f = |key: &str| format!("bad value for {key:?} in synthetic spec: {value:?}");
            let bad = |_: std::num::ParseIntError| format!("bad value for {key:?} in synthetic spec: {value:?}");
            match key.trim() {
                "k" | "classes" => spec.classes = value.parse().map_err(bad)?,
                "d" | "dim" => spec.dim = value.parse().map_err(bad)?,
                "sigma" => spec.sigma = value.parse().map_err(|_| bad_f(key))?,
                "n" | "n_per_class" => spec.n_per_class = value.parse().map_err(bad)?,
                "sep" | "separation" => spec.separation = value.parse().map_err(|_| bad_f(key))?,
                "seed" => spec.seed = value.parse().map_err(bad)?,
                other => return Err(format!("unknown synthetic spec key {other:?}")),
            }
        }
        Ok(spec)
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> crate::Result<LabeledDataset> {
        let mut means = ndarray::Array2::zeros((self.classes, self.dim.max(1)));
        for y in 0..self.classes {
            let sign = if (y / self.dim.max(1)).is_multiple_of(2) { 1.0 } else { -1.0 };
            means[[y, y % self.dim.max(1)]] = sign * self.separation;
        }
        data::synth_gaussian(means.view(), self.sigma, self.n_per_class, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub source: Option<DataSource>,
    /// Stratified train share; the rest is held out as the risk proxy.
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { source: None, train_fraction: 0.8, split_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub loss: LossKind,
    /// Hidden widths are chosen so every depth has about this many parameters.
    pub target_params: usize,
    pub mlp_bias: bool,
    pub linear_bias: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { loss: LossKind::Nll, target_params: 100_000, mlp_bias: true, linear_bias: false }
    }
}

impl ModelSpec {
    /// The architecture with `depth` weight layers (1 is the linear model).
    pub fn architecture(&self, input_dim: usize, classes: usize, depth: usize) -> crate::Result<Arc<MlpArchitecture>> {
        let arch = if depth == 1 {
            MlpArchitecture::linear(input_dim, classes)?.with_bias(self.linear_bias)
        } else {
            let widths = MlpArchitecture::equal_param_widths(input_dim, classes, depth, self.target_params, self.mlp_bias)?;
            MlpArchitecture::mlp(input_dim, classes, widths)?.with_bias(self.mlp_bias)
        };
        Ok(Arc::new(arch))
    }
}

/// Sweep axes. Unset axes take per-experiment defaults when resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub depths: Option<Vec<usize>>,
    /// Prior standard deviations.
    pub sigmas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<LambdaSpec>>,
    /// Size of the log-spaced `[1, m]` lambda grid used when fitting envelopes
    /// without an explicit lambda list.
    pub lambda_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    /// Standard deviation of the Gaussian posterior around the trained weights.
    pub posterior_sigma: f64,
    pub delta: f64,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self { posterior_sigma: 0.05, delta: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitySpec {
    /// Random small loss supports for the decomposition and Herbst checks.
    pub instances: usize,
    /// Random (model, alpha) configurations for the log-Sobolev check.
    pub logsobolev_configs: usize,
    pub logsobolev_points: usize,
    pub seed: u64,
}

impl Default for IdentitySpec {
    fn default() -> Self {
        Self { instances: 50, logsobolev_configs: 20, logsobolev_points: 100_000, seed: 0 }
    }
}

pub const DEFAULT_SIGMAS: [f64; 7] = [0.0004, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub data: DataSpec,
    pub model: ModelSpec,
    pub grids: Grids,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub subgamma: FitConfig,
    pub report: ReportSpec,
    pub identity: IdentitySpec,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        toml::from_str(s).map_err(|e| config_err(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fills unset grids with the defaults of the selected experiment.
    pub fn resolved(mut self) -> Self {
        use Experiment::*;
        let e = self.experiment;
        let g = &mut self.grids;
        if g.depths.is_none() {
            g.depths = Some(match e {
                TrainReport => vec![1],
                _ => vec![1, 2, 3, 4, 5],
            });
        }
        if g.sigmas.is_none() {
            g.sigmas = Some(match e {
                NaiveVsLambda | FitSubgamma | TrainReport => vec![0.1],
                _ => DEFAULT_SIGMAS.to_vec(),
            });
        }
        if g.lambdas.is_none() {
            let sym = |s: &str| LambdaSpec::Symbol(s.to_owned());
            g.lambdas = match e {
                NaiveVsLambda => Some(
                    [1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0, 2500.0]
                        .into_iter()
                        .map(LambdaSpec::Value)
                        .chain([sym("m")])
                        .collect(),
                ),
                BoundVsVariance => Some(vec![sym("sqrt_m"), sym("m")]),
                _ => None,
            };
        }
        if g.lambda_points == 0 {
            g.lambda_points = 41;
        }
        self
    }

    /// Checks the resolved spec; messages name the offending field.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.estimator.validate().map_err(|e| config_err(format!("estimator: {e}")))?;
        self.train.validate().map_err(|e| config_err(format!("train: {e}")))?;
        let g = &self.grids;
        if let Some(d) = &g.depths {
            if d.is_empty() || d.contains(&0) {
                return Err(config_err("grids.depths must be a nonempty list of depths >= 1"));
            }
        }
        if let Some(s) = &g.sigmas {
            if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(config_err("grids.sigmas must be a nonempty list of positive reals"));
            }
        }
        if let Some(l) = &g.lambdas {
            if l.is_empty() {
                return Err(config_err("grids.lambdas must not be empty"));
            }
            for spec in l {
                if let LambdaSpec::Value(v) = spec {
                    if !(*v > 0.0 && v.is_finite()) {
                        return Err(config_err(format!("grids.lambdas entries must be positive, got {v}")));
                    }
                } else {
                    spec.resolve(1)?;
                }
            }
        }
        if g.lambda_points < 2 {
            return Err(config_err("grids.lambda_points must be >= 2"));
        }
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(config_err("data.train_fraction must lie in (0, 1)"));
        }
        if !(self.report.posterior_sigma > 0.0) {
            return Err(config_err("report.posterior_sigma must be positive"));
        }
        if !(self.report.delta > 0.0 && self.report.delta <= 1.0) {
            return Err(config_err("report.delta must lie in (0, 1]"));
        }
        if self.experiment != Experiment::IdentityChecks {
            match &d.source {
                None => {
                    return Err(config_err(
                        "no data source: pass --data-images and --data-labels, --synthetic, or set [data.source]",
                    ))
                }
                Some(DataSource::Idx { images, labels }) => {
                    for p in [images, labels] {
                        if !p.is_file() {
                            return Err(ExperimentError::Data(crate::Error::InvalidArgument(format!(
                                "no such file: {}",
                                p.display()
                            ))));
                        }
                    }
                }
                Some(DataSource::Synthetic(s)) => {
                    if s.classes == 0 || s.dim == 0 || s.n_per_class == 0 || !(s.sigma > 0.0) {
                        return Err(config_err("synthetic spec needs k, d, n >= 1 and sigma > 0"));
                    }
                }
            }
        }
        if self.experiment == Experiment::IdentityChecks
            && (self.identity.instances == 0 || self.identity.logsobolev_configs == 0 || self.identity.logsobolev_points < 2)
        {
            return Err(config_err("identity checks need instances, configs >= 1 and points >= 2"));
        }
        Ok(())
    }

    /// Loads the data source and splits it into `(train, heldout)`.
    pub fn load_data(&self) -> Result<(LabeledDataset, LabeledDataset), ExperimentError> {
        let full = match &self.data.source {
            Some(DataSource::Idx { images, labels }) => data::load_idx(images, labels).map_err(ExperimentError::Data)?,
            Some(DataSource::Synthetic(s)) => s.generate().map_err(|e| config_err(format!("synthetic data: {e}")))?,
            None => return Err(config_err("no data source configured")),
        };
        data::split(&full, self.data.train_fraction, self.data.split_seed).map_err(ExperimentError::Data)
    }
}

/// A finished sweep: the result table plus the configuration echo.
#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: Experiment,
    pub table: Table,
    /// `{"spec": <resolved spec>, "context": {...}}`, embedded in every output.
    pub config: Value,
}

impl Report {
    pub fn write<W: std::io::Write>(&self, format: OutputFormat, out: W) -> std::io::Result<()> {
        self.table.write(format, &self.config, out)
    }
}

/// Resolves, validates and runs a sweep.
///
/// An identity-check sweep whose checks fail still returns its table through
/// [`RunOutcome::report`]; the failure is reported separately so the table
/// can be written before exiting with an error.
pub fn run(spec: SweepSpec) -> Result<RunOutcome, ExperimentError> {
    let spec = spec.resolved();
    spec.validate()?;
    sweeps::run(&spec)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub failure: Option<ExperimentError>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_symbols() {
        assert_eq!("m".parse::<LambdaSpec>().unwrap().resolve(400).unwrap(), 400.0);
        assert_eq!("sqrt_m".parse::<LambdaSpec>().unwrap().resolve(400).unwrap(), 20.0);
        assert_eq!(" 2.5".parse::<LambdaSpec>().unwrap(), LambdaSpec::Value(2.5));
        assert!("sqrt".parse::<LambdaSpec>().is_err());
    }

    #[test]
    fn synthetic_spec_parsing() {
        let s: SyntheticSpec = "k=3, d=4, sigma=0.5, n=10, sep=1.5, seed=9".parse().unwrap();
        assert_eq!(s, SyntheticSpec { classes: 3, dim: 4, sigma: 0.5, n_per_class: 10, separation: 1.5, seed: 9 });
        assert!("k=3,x=1".parse::<SyntheticSpec>().is_err());
        assert!("k".parse::<SyntheticSpec>().is_err());
        let data = s.generate().unwrap();
        assert_eq!((data.len(), data.input_dim(), data.class_count()), (30, 4, 3));
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let spec = SweepSpec::from_toml_str(
            r#"
            experiment = "bound-vs-variance"
            [grids]
            sigmas = [0.1, 0.3]
            lambdas = [10.0, "sqrt_m"]
            [estimator]
            n_weight_samples = 8
            [data.source]
            kind = "synthetic"
            classes = 3
            "#,
        )
        .unwrap();
        assert_eq!(spec.experiment, Experiment::BoundVsVariance);
        assert_eq!(spec.estimator.n_weight_samples, 8);
        assert_eq!(spec.grids.lambdas.as_ref().unwrap()[1], LambdaSpec::Symbol("sqrt_m".into()));
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(SweepSpec::from_toml_str(&text).unwrap(), spec);
        assert!(SweepSpec::from_toml_str("[estimator]\nsamples = 3").is_err());
    }

    #[test]
    fn validation_messages() {
        let spec = SweepSpec { experiment: Experiment::LossVsVariance, ..Default::default() }.resolved();
        let err = spec.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut spec = SweepSpec::default().resolved();
        spec.data.source = Some(DataSource::Idx { images: "/nonexistent/a".into(), labels: "/nonexistent/b".into() });
        assert_eq!(spec.validate().unwrap_err().exit_code(), 3);
        spec.grids.sigmas = Some(vec![]);
        assert_eq!(spec.validate().unwrap_err().exit_code(), 2);
    }
}
