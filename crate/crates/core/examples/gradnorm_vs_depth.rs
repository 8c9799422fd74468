//! Expected squared input-gradient norm under the prior, by depth, at equal
//! parameter count.

use std::path::Path;
use std::sync::Arc;

use pacgrad::estimators::survey_prior;
use pacgrad::nn::lipschitz_bound;
use pacgrad::{load_idx, split, EstimatorConfig, GaussianFamily, LossKind, MlpArchitecture};

fn main() -> pacgrad::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (_, heldout) = split(&data, 0.8, 0)?;
    let (d, k) = (data.input_dim(), data.class_count());
    let cfg = EstimatorConfig::default();
    let sigma = 0.1;

    for depth in 1..=5 {
        let widths = MlpArchitecture::equal_param_widths(d, k, depth, 100_000, true)?;
        let arch = if depth == 1 {
            MlpArchitecture::linear(d, k)?
        } else {
            MlpArchitecture::mlp(d, k, widths)?
        };
        let (params, hidden) = (arch.param_count(), arch.hidden_widths().to_vec());
        let survey = survey_prior(&GaussianFamily::isotropic(Arc::new(arch), sigma)?, &heldout, LossKind::Nll, &cfg)?;
        let (g, se) = survey.expected_grad_norm();
        print!("depth {depth} {hidden:?} ({params} params): E|grad_x|^2 = {g:.4} +- {se:.4}");
        if depth == 1 {
            print!(", worst case L^2 E|W|^2 = {:.2}", survey.lipschitz_grad_bound(lipschitz_bound(LossKind::Nll)));
        }
        println!();
    }
    Ok(())
}
