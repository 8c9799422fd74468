mod common;

use std::sync::Arc;

use common::*;
use ndarray::{Array2, ArrayView1};
use pacgrad::math::{log_mean_exp, log_sum_exp};
use pacgrad::nn::{grad_input, lipschitz_bound, logit_gradient};
use pacgrad::{kl_divergence, synth_gaussian, GaussianFamily, LossKind, MlpArchitecture, StdDev};
use proptest::prelude::*;

#[test]
fn kl_matches_integration() {
    let mut r = rng(3);
    let u = |r: &mut rand_chacha::ChaCha8Rng| pacgrad::rng::uniform(r);
    for _ in 0..100 {
        let (mq, mp) = (2.0 * u(&mut r) - 1.0, 2.0 * u(&mut r) - 1.0);
        let (sq, sp) = (0.05 + 2.0 * u(&mut r), 0.05 + 2.0 * u(&mut r));
        let got = kl_divergence(&one_dim(mq, sq), &one_dim(mp, sp)).unwrap();
        let want = kl_by_quadrature(mq, sq, mp, sp);
        assert!((got - want).abs() <= 1e-8 * want.abs(), "({mq},{sq}) vs ({mp},{sp}): {got} vs {want}");
    }
}

#[test]
fn kl_is_additive_over_coordinates() {
    let arch = Arc::new(MlpArchitecture::linear(2, 1).unwrap());
    let mut r = rng(4);
    for _ in 0..50 {
        let m = normals(&mut r, 4, 1.0);
        let s: Vec<f64> = normals(&mut r, 4, 0.5).iter().map(|v| v.abs() + 0.1).collect();
        let q = GaussianFamily::new(arch.clone(), m[..2].to_vec(), StdDev::PerCoordinate(s[..2].to_vec())).unwrap();
        let p = GaussianFamily::new(arch.clone(), m[2..].to_vec(), StdDev::PerCoordinate(s[2..].to_vec())).unwrap();
        let joint = kl_divergence(&q, &p).unwrap();
        let parts = kl_divergence(&one_dim(m[0], s[0]), &one_dim(m[2], s[2])).unwrap()
            + kl_divergence(&one_dim(m[1], s[1]), &one_dim(m[3], s[3])).unwrap();
        assert!((joint - parts).abs() <= 1e-12 * parts.max(1.0));
    }
}

#[test]
fn prior_samples_have_the_requested_variance() {
    let prior = one_dim(0.0, 0.1);
    let draws: Vec<f64> = prior.sample(7, 100_000).iter().map(|w| w.values()[0]).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((var / 0.01 - 1.0).abs() < 0.05, "variance {var}");
    assert!(mean.abs() < 0.002);
}

#[test]
fn synthetic_class_means_follow_the_law_of_large_numbers() {
    let means = Array2::from_shape_vec((3, 2), vec![1.0, -2.0, 0.0, 0.5, 3.0, 3.0]).unwrap();
    let data = synth_gaussian(means.view(), 0.7, 20_000, 5).unwrap();
    for y in 0..3 {
        let rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == y).collect();
        for j in 0..2 {
            let m = rows.iter().map(|&i| data.row(i)[j]).sum::<f64>() / rows.len() as f64;
            assert!((m - means[[y, j]]).abs() < 0.02, "class {y} coord {j}: {m}");
        }
    }
}

fn logit_grad_norm(t: &[f64], y: usize, kind: LossKind) -> f64 {
    logit_gradient(ArrayView1::from(t), y, kind).iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn lipschitz_constant_bounds_logit_gradients() {
    for kind in [LossKind::Nll, LossKind::MultiClassHinge] {
        let l = lipschitz_bound(kind);
        for k in 2..=5usize {
            let steps = 11usize;
            let mut t = vec![0.0; k];
            for idx in 0..steps.pow(k as u32) {
                let mut c = idx;
                for tj in t.iter_mut() {
                    *tj = -5.0 + (c % steps) as f64;
                    c /= steps;
                }
                for y in 0..k {
                    assert!(logit_grad_norm(&t, y, kind) <= l + 1e-12);
                }
            }
        }
        let mut r = rng(8);
        for _ in 0..100_000 {
            let k = 2 + pacgrad::rng::below(&mut r, 8);
            let t = normals(&mut r, k, 20.0);
            let y = pacgrad::rng::below(&mut r, k);
            assert!(logit_grad_norm(&t, y, kind) <= l + 1e-12);
        }
    }
}

#[test]
fn linear_input_gradient_is_bounded_by_the_weight_norm() {
    let mut r = rng(9);
    let l = lipschitz_bound(LossKind::Nll);
    for _ in 0..10_000 {
        let (d, k) = (1 + pacgrad::rng::below(&mut r, 6), 2 + pacgrad::rng::below(&mut r, 5));
        let arch = Arc::new(MlpArchitecture::linear(d, k).unwrap());
        let w = random_params(&arch, &mut r, 2.0);
        let x = normals(&mut r, d, 3.0);
        let y = pacgrad::rng::below(&mut r, k);
        let g: f64 = grad_input(&w, &x, y, LossKind::Nll).unwrap().iter().map(|v| v * v).sum();
        assert!(g <= l * l * w.weight_squared_norm() * (1.0 + 1e-12));
    }
}

proptest! {
    #[test]
    fn log_sum_exp_is_shift_invariant(v in prop::collection::vec(-700.0f64..700.0, 1..20), c in -300.0f64..300.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = log_sum_exp(shifted.iter().copied());
        let b = log_sum_exp(v.iter().copied()) + c;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn log_mean_exp_lies_between_min_and_max(v in prop::collection::vec(-50.0f64..50.0, 1..30)) {
        let lme = log_mean_exp(&v);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lme >= lo - 1e-12 && lme <= hi + 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal(m in -3.0f64..3.0, s in 0.01f64..5.0, mp in -3.0f64..3.0, sp in 0.01f64..5.0) {
        prop_assert!(kl_divergence(&one_dim(m, s), &one_dim(mp, sp)).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&one_dim(m, s), &one_dim(m, s)).unwrap(), 0.0);
    }
}
