//! Train a linear model and assemble the bound for a Gaussian posterior
//! around the final iterate.

use std::path::Path;
use std::sync::Arc;

use pacgrad::estimators::{alquier_assemble, corollary1_bound};
use pacgrad::nn::lipschitz_bound;
use pacgrad::trainer::{evaluate, train};
use pacgrad::{kl_divergence, load_idx, split, GaussianFamily, LossKind, MlpArchitecture, TrainConfig};

fn main() -> pacgrad::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (train_set, test_set) = split(&data, 0.8, 0)?;
    let (d, k, m) = (data.input_dim(), data.class_count(), train_set.len());
    let sigma = 0.1;
    let arch = Arc::new(MlpArchitecture::linear(d, k)?);
    let cfg = TrainConfig { init_stddev: sigma, ..Default::default() };

    let outcome = train(arch.clone(), &train_set, LossKind::Nll, &cfg)?;
    let (train_loss, train_acc) = evaluate(&outcome.params, &train_set, LossKind::Nll)?;
    let (test_loss, test_acc) = evaluate(&outcome.params, &test_set, LossKind::Nll)?;
    println!("train loss {train_loss:.4} (acc {train_acc:.3}), test loss {test_loss:.4} (acc {test_acc:.3})");

    let prior = GaussianFamily::isotropic(arch, sigma)?;
    let posterior = GaussianFamily::around(&outcome.params, 0.05)?;
    let kl = kl_divergence(&posterior, &prior)?;
    let l = lipschitz_bound(LossKind::Nll);
    for lambda in [(m as f64).sqrt(), m as f64] {
        let c = corollary1_bound(k, d, m, l, sigma, lambda);
        let bound = alquier_assemble(train_loss, c, kl, lambda, 0.05);
        println!("lambda {lambda:>6}: C <= {c:.2}, KL = {kl:.1}, risk bound {bound:.3}");
    }
    Ok(())
}
