//! Sub-gamma envelopes: a synthetic round trip, then a fit to a measured
//! bound curve.

use std::path::Path;
use std::sync::Arc;

use pacgrad::estimators::{corollary2_from_survey, survey_prior};
use pacgrad::subgamma::{self, envelope, FitConfig};
use pacgrad::{load_idx, split, EstimatorConfig, GaussianFamily, LossKind, MlpArchitecture};

fn main() -> pacgrad::Result<()> {
    let cfg = FitConfig::default();
    let lambdas: Vec<f64> = (0..30).map(|i| (i as f64 * 5.5 / 29.0).exp()).collect();
    let grid: Vec<(f64, f64)> = lambdas.iter().map(|&l| (l, envelope(2.0, 1e-4, l).unwrap())).collect();
    let f = subgamma::fit(&grid, &cfg)?;
    println!("synthetic (v=2, c=1e-4): v = {:.4}, c = {:.3e}, dominates = {}", f.v, f.c, subgamma::check(&f, &grid));

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (train, heldout) = split(&data, 0.8, 0)?;
    let m = train.len();
    let est = EstimatorConfig { n_weight_samples: 32, ..Default::default() };
    let arch = Arc::new(MlpArchitecture::mlp(data.input_dim(), data.class_count(), vec![100, 100, 100])?);
    let survey = survey_prior(&GaussianFamily::isotropic(arch, 0.1)?, &heldout, LossKind::Nll, &est)?;
    let b = survey.b(est.b_slack);
    let mut curve = Vec::new();
    for i in 0..41 {
        let lambda = (m as f64).powf(i as f64 / 40.0);
        let e = corollary2_from_survey(&survey, lambda, m, b, est.direct_precision)?;
        curve.push((lambda, e.log_space_value));
    }
    let f = subgamma::fit(&curve, &cfg)?;
    println!(
        "depth-4 MLP at sigma 0.1: v = {:.4e}, c = {:.3e}, residual = {}, dominates = {}",
        f.v,
        f.c,
        f.residual,
        subgamma::check(&f, &curve)
    );
    Ok(())
}
