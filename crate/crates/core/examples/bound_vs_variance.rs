//! Gradient-norm bound on the complexity term at lambda = sqrt(m) as the prior
//! scale grows, next to the closed form for the linear model.

use std::path::Path;
use std::sync::Arc;

use pacgrad::estimators::{corollary1_bound, corollary2_from_survey, survey_prior};
use pacgrad::nn::lipschitz_bound;
use pacgrad::{load_idx, split, EstimatorConfig, GaussianFamily, LossKind, MlpArchitecture};

fn main() -> pacgrad::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (train, heldout) = split(&data, 0.8, 0)?;
    let (d, k, m) = (data.input_dim(), data.class_count(), train.len());
    let lambda = (m as f64).sqrt();
    let cfg = EstimatorConfig { n_weight_samples: 32, ..Default::default() };
    let mlp = Arc::new(MlpArchitecture::mlp(d, k, vec![126])?);

    println!("{:>7} {:>8} {:>14} {:>9} {:>14}", "sigma", "b", "mlp bound", "overflow", "linear closed");
    for sigma in [0.0004, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7] {
        let survey = survey_prior(&GaussianFamily::isotropic(mlp.clone(), sigma)?, &heldout, LossKind::Nll, &cfg)?;
        let b = survey.b(cfg.b_slack);
        let e = corollary2_from_survey(&survey, lambda, m, b, cfg.direct_precision)?;
        let closed = corollary1_bound(k, d, m, lipschitz_bound(LossKind::Nll), sigma, lambda);
        println!("{sigma:>7} {b:>8.3} {:>14.6e} {:>9} {closed:>14.6e}", e.log_space_value, e.overflowed);
    }
    Ok(())
}
