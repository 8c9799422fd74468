//! The exact decomposition, the cumulant identity and the log-Sobolev
//! inequality on small random instances.

use pacgrad::estimators::{herbst_identity_check, logsobolev_check, mgf_decomposition_check};
use pacgrad::experiments::checks::{logsobolev_instance, support_instance};
use pacgrad::LossKind;

fn main() -> pacgrad::Result<()> {
    for i in 0..5 {
        let s = support_instance(0, i);
        let (lhs, rhs) = mgf_decomposition_check(&s.losses, s.lambda, s.m)?;
        let (k_lhs, k_rhs) = herbst_identity_check(&s.losses, s.lambda, s.m)?;
        println!(
            "support {:?}, m = {}, lambda = {:.3}: decomposition {:.3e}, cumulant {:.3e}",
            s.losses.len(),
            s.m,
            s.lambda,
            (lhs - rhs).abs(),
            (k_lhs - k_rhs).abs()
        );
    }
    for i in 0..4 {
        let inst = logsobolev_instance(0, i, 20_000)?;
        let c = logsobolev_check(&inst.params, &inst.data, LossKind::Nll, inst.alpha)?;
        println!(
            "log-Sobolev config {i}: lhs {:.4e} <= rhs {:.4e} ({} std errors of margin)",
            c.lhs,
            c.rhs,
            ((c.rhs - c.lhs) / c.std_error).round()
        );
    }
    Ok(())
}
