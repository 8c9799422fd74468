//! Random instances for the identity and inequality checks.

use std::sync::Arc;

use ndarray::Array2;

use crate::data::{synth_gaussian, LabeledDataset};
use crate::distributions::{GaussianFamily, StdDev};
use crate::estimators::{herbst_identity_check, logsobolev_check, mgf_decomposition_check};
use crate::nn::{LossKind, MlpArchitecture, ParamVector};
use crate::rng::{self, Stream};
use crate::Result;

use super::output::{Cell, Table};
use super::IdentitySpec;

/// Tolerance of the exact decomposition, relative to `max(1, |rhs|)`.
pub const MGF_TOLERANCE: f64 = 1e-12;
/// Tolerance of the quadrature-based cumulant identity, same scaling.
pub const HERBST_TOLERANCE: f64 = 1e-6;
/// Standard errors allowed on the wrong side of the log-Sobolev inequality.
pub const LOGSOBOLEV_Z: f64 = 3.0;

pub const COLUMNS: &[&str] = &["check", "instance", "params", "lhs", "rhs", "error", "tolerance", "pass"];

/// A uniform distribution over a short list of losses, with a sample size
/// and lambda for the exact checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportInstance {
    pub losses: Vec<f64>,
    pub lambda: f64,
    pub m: usize,
}

/// Instance `index`: 1 to 6 losses in `[0, 3)`, `m` in 1..=4, `lambda` in `[0.1, 5)`.
pub fn support_instance(seed: u64, index: u64) -> SupportInstance {
    let mut r = rng::stream(seed, Stream::Custom((1 << 32) | index));
    let n = 1 + rng::below(&mut r, 6);
    let m = 1 + rng::below(&mut r, 4);
    let lambda = 0.1 + 4.9 * rng::uniform(&mut r);
    let losses = (0..n).map(|_| 3.0 * rng::uniform(&mut r)).collect();
    SupportInstance { losses, lambda, m }
}

/// A model, Gaussian-class data and an `alpha` for the log-Sobolev check.
#[derive(Debug, Clone)]
pub struct LogSobolevInstance {
    pub params: ParamVector,
    pub data: LabeledDataset,
    pub alpha: f64,
}

/// Configuration `index`: `k` in 2..=5 classes, `d` in 2..=8 inputs, class
/// means `N(0, I)`, unit within-class variance, about `points` samples.
/// Even indices use the linear model, odd ones one hidden layer of 16. Weights
/// are `N(0, 1/fan_in)` per layer and `alpha` is uniform in `[0.1, 1)`.
pub fn logsobolev_instance(seed: u64, index: u64, points: usize) -> Result<LogSobolevInstance> {
    let s = seed.wrapping_add(index);
    let mut r = rng::stream(s, Stream::Custom(0));
    let k = 2 + rng::below(&mut r, 4);
    let d = 2 + rng::below(&mut r, 7);
    let alpha = 0.1 + 0.9 * rng::uniform(&mut r);
    let mut means = Array2::zeros((k, d));
    rng::fill_standard_normal(&mut r, means.as_slice_mut().expect("standard layout"));
    let arch = Arc::new(if index.is_multiple_of(2) {
        MlpArchitecture::linear(d, k)?
    } else {
        MlpArchitecture::mlp(d, k, vec![16])?
    });
    let sd: Vec<f64> = arch
        .layers()
        .iter()
        .flat_map(|l| {
            let n = l.fan_in * l.fan_out + if l.bias_offset.is_some() { l.fan_out } else { 0 };
            std::iter::repeat_n(1.0 / (l.fan_in as f64).sqrt(), n)
        })
        .collect();
    let params = GaussianFamily::new(arch, vec![0.0; sd.len()], StdDev::PerCoordinate(sd))?.sample_one(s, 0);
    let data = synth_gaussian(means.view(), 1.0, (points / k).max(1), s)?;
    Ok(LogSobolevInstance { params, data, alpha })
}

fn relative_row(table: &mut Table, check: &str, i: usize, params: String, (lhs, rhs): (f64, f64), tol: f64) -> bool {
    let error = (lhs - rhs).abs();
    let tolerance = tol * rhs.abs().max(1.0);
    let pass = error <= tolerance;
    table.push(vec![
        check.into(),
        i.into(),
        params.into(),
        lhs.into(),
        rhs.into(),
        error.into(),
        tolerance.into(),
        pass.into(),
    ]);
    pass
}

/// Runs all three suites; returns the table and the number of failures.
pub fn run_identity_checks(spec: &IdentitySpec) -> Result<(Table, usize)> {
    let mut table = Table::new(COLUMNS);
    let mut failed = 0;
    let describe = |s: &SupportInstance| format!("n={} m={} lambda={}", s.losses.len(), s.m, s.lambda);
    let instances: Vec<SupportInstance> = (0..spec.instances as u64).map(|i| support_instance(spec.seed, i)).collect();
    for (i, s) in instances.iter().enumerate() {
        let sides = mgf_decomposition_check(&s.losses, s.lambda, s.m)?;
        failed += usize::from(!relative_row(&mut table, "mgf-decomposition", i, describe(s), sides, MGF_TOLERANCE));
    }
    for (i, s) in instances.iter().enumerate() {
        let sides = herbst_identity_check(&s.losses, s.lambda, s.m)?;
        failed += usize::from(!relative_row(&mut table, "herbst", i, describe(s), sides, HERBST_TOLERANCE));
    }
    for i in 0..spec.logsobolev_configs {
        let inst = logsobolev_instance(spec.seed, i as u64, spec.logsobolev_points)?;
        let c = logsobolev_check(&inst.params, &inst.data, LossKind::Nll, inst.alpha)?;
        let arch = inst.params.arch();
        let params = format!(
            "k={} d={} hidden={:?} alpha={} n={}",
            arch.class_count(),
            arch.input_dim(),
            arch.hidden_widths(),
            inst.alpha,
            c.n
        );
        let pass = c.holds(LOGSOBOLEV_Z);
        failed += usize::from(!pass);
        table.push(vec![
            "logsobolev".into(),
            i.into(),
            params.into(),
            c.lhs.into(),
            c.rhs.into(),
            (c.lhs - c.rhs).into(),
            Cell::from(LOGSOBOLEV_Z * c.std_error),
            pass.into(),
        ]);
    }
    Ok((table, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_in_range() {
        for i in 0..30 {
            let s = support_instance(4, i);
            assert_eq!(s, support_instance(4, i));
            assert!((1..=6).contains(&s.losses.len()) && (1..=4).contains(&s.m));
            assert!((0.1..5.0).contains(&s.lambda));
            assert!(s.losses.iter().all(|l| (0.0..3.0).contains(l)));
        }
        assert_ne!(support_instance(4, 0), support_instance(5, 0));
    }

    #[test]
    fn small_suite_passes() {
        let spec = IdentitySpec { instances: 5, logsobolev_configs: 2, logsobolev_points: 20_000, seed: 0 };
        let (table, failed) = run_identity_checks(&spec).unwrap();
        assert_eq!(table.rows().len(), 12);
        assert_eq!(failed, 0);
    }
}
