//! Naive complexity-term estimate for the linear model over a lambda grid.
//!
//! The direct evaluation overflows once `lambda L_D` leaves single precision;
//! the log-space value stays finite.

use std::path::Path;
use std::sync::Arc;

use pacgrad::estimators::{naive_complexity_from_losses, sample_losses};
use pacgrad::{load_idx, split, EstimatorConfig, GaussianFamily, LossKind, MlpArchitecture};

fn main() -> pacgrad::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (train, heldout) = split(&data, 0.8, 0)?;
    let arch = Arc::new(MlpArchitecture::linear(data.input_dim(), data.class_count())?);
    let prior = GaussianFamily::isotropic(arch, 0.1)?;
    let cfg = EstimatorConfig::default();

    // One pass over the data serves the whole grid.
    let losses = sample_losses(&prior, &heldout, LossKind::Nll, &cfg)?;
    println!("{:>8} {:>14} {:>14} {:>10}", "lambda", "value", "log-space", "overflow");
    for lambda in [1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 1000.0, train.len() as f64] {
        let e = naive_complexity_from_losses(&losses, lambda, train.len(), cfg.direct_precision)?;
        println!("{lambda:>8} {:>14.6e} {:>14.6e} {:>10}", e.value, e.log_space_value, e.overflowed);
    }
    Ok(())
}
