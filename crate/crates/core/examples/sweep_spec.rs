//! Running a sweep from a TOML spec through the library, as the CLI does.

use pacgrad::experiments::{self, OutputFormat, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SweepSpec::from_toml_str(
        r#"
        experiment = "bound-vs-variance"

        [data.source]
        kind = "synthetic"
        classes = 3
        dim = 5
        n_per_class = 400

        [grids]
        depths = [1, 2]
        sigmas = [0.05, 0.5]
        lambdas = ["sqrt_m", 100.0]

        [estimator]
        n_weight_samples = 16
        "#,
    )?;
    let outcome = experiments::run(spec)?;
    outcome.report.write(OutputFormat::Csv, std::io::stdout().lock())?;
    Ok(())
}
