use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pacgrad::experiments::{self, DataSource, Experiment, ExperimentError, LambdaSpec, OutputFormat, SweepSpec, SyntheticSpec};

/// PAC-Bayes complexity-term sweeps.
///
/// Settings come from built-in defaults, then the --config TOML file, then
/// flags. The resolved settings are embedded in every output file.
#[derive(Parser, Debug)]
#[command(name = "pacgrad", version)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Naive complexity-term estimate over a lambda grid.
    NaiveVsLambda(Common),
    /// Expected squared input-gradient norm against prior scale and depth.
    GradnormVsVariance(Common),
    /// Expected loss under the prior and the resulting loss bound b.
    LossVsVariance(Common),
    /// Gradient-norm bound on the complexity term against prior scale.
    BoundVsVariance(Common),
    /// Sub-gamma envelope fit to the measured bound curve.
    FitSubgamma(Common),
    /// Train, evaluate and report bounds for the trained posterior.
    TrainReport(Common),
    /// Numerical checks of the identities behind the bound.
    IdentityChecks(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML sweep file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for prior sampling and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// IDX image file.
    #[arg(long, value_name = "PATH", requires = "data_labels")]
    data_images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, value_name = "PATH", requires = "data_images")]
    data_labels: Option<PathBuf>,
    /// Synthetic Gaussian data, e.g. "k=3,d=10,sigma=1,n=500,sep=2,seed=0".
    #[arg(long, value_name = "SPEC", conflicts_with = "data_images")]
    synthetic: Option<SyntheticSpec>,
    /// Prior standard deviations, comma separated.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Lambda values, comma separated; "m" and "sqrt_m" are allowed.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<LambdaSpec>>,
    /// Depths (weight layers; 1 is the linear model), comma separated.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Prior weight samples per estimate.
    #[arg(long)]
    samples: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

fn build_spec(experiment: Experiment, c: Common) -> Result<SweepSpec, ExperimentError> {
    let mut spec = match &c.config {
        Some(path) => SweepSpec::from_toml_file(path)?,
        None => SweepSpec::default(),
    };
    spec.experiment = experiment;
    if let Some(seed) = c.seed {
        spec.estimator.seed = seed;
        spec.train.seed = seed;
        spec.identity.seed = seed;
    }
    if let Some(out) = c.out {
        spec.out = Some(out);
    }
    if let Some(f) = c.format {
        spec.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if let (Some(images), Some(labels)) = (c.data_images, c.data_labels) {
        spec.data.source = Some(DataSource::Idx { images, labels });
    }
    if let Some(s) = c.synthetic {
        spec.data.source = Some(DataSource::Synthetic(s));
    }
    if c.sigmas.is_some() {
        spec.grids.sigmas = c.sigmas;
    }
    if c.lambdas.is_some() {
        spec.grids.lambdas = c.lambdas;
    }
    if c.depths.is_some() {
        spec.grids.depths = c.depths;
    }
    if let Some(n) = c.samples {
        spec.estimator.n_weight_samples = n;
    }
    if let Some(n) = c.epochs {
        spec.train.epochs = n;
    }
    Ok(spec)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let (experiment, common) = match cli.command {
        Command::NaiveVsLambda(c) => (Experiment::NaiveVsLambda, c),
        Command::GradnormVsVariance(c) => (Experiment::GradnormVsVariance, c),
        Command::LossVsVariance(c) => (Experiment::LossVsVariance, c),
        Command::BoundVsVariance(c) => (Experiment::BoundVsVariance, c),
        Command::FitSubgamma(c) => (Experiment::FitSubgamma, c),
        Command::TrainReport(c) => (Experiment::TrainReport, c),
        Command::IdentityChecks(c) => (Experiment::IdentityChecks, c),
    };
    let spec = build_spec(experiment, common)?;
    let (format, out) = (spec.format, spec.out.clone());
    let outcome = experiments::run(spec)?;
    match &out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            outcome.report.write(format, &mut w)?;
            w.flush()?;
        }
        None => outcome.report.write(format, std::io::stdout().lock())?,
    }
    match outcome.failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = ExperimentError::Config(e.render().to_string().trim_end().to_owned());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = match e.downcast_ref::<ExperimentError>() {
                Some(err) => err.to_json(),
                None => json!({ "error": "io", "message": format!("{e:#}"), "exit_code": 1 }),
            };
            eprintln!("{record}");
            let code = record["exit_code"].as_u64().unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
