#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use pacgrad::rng::{self, Stream};
use pacgrad::{GaussianFamily, LabeledDataset, MlpArchitecture, ParamVector, Provenance, StdDev};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

pub fn mnist() -> LabeledDataset {
    let dir = data_dir();
    pacgrad::load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte")).expect("bundled subset")
}

/// The 4,096 / 1,024 split used throughout.
pub fn mnist_split() -> (LabeledDataset, LabeledDataset) {
    pacgrad::split(&mnist(), 0.8, 0).unwrap()
}

pub fn rng(tag: u64) -> ChaCha8Rng {
    rng::stream(tag, Stream::Custom(99))
}

pub fn normals(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng::fill_standard_normal(r, &mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

pub fn random_params(arch: &Arc<MlpArchitecture>, r: &mut ChaCha8Rng, scale: f64) -> ParamVector {
    ParamVector::new(arch.clone(), normals(r, arch.param_count(), scale)).unwrap()
}

pub fn random_data(r: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> LabeledDataset {
    let x = Array2::from_shape_vec((n, d), normals(r, n * d, 1.0)).unwrap();
    let labels = (0..n).map(|_| rng::below(r, k)).collect();
    LabeledDataset::new(x, labels, k, Provenance::InMemory).unwrap()
}

/// Architectures with 1 to 5 weight layers on small inputs.
pub fn small_archs(d: usize, k: usize, width: usize) -> Vec<Arc<MlpArchitecture>> {
    (1..=5)
        .map(|depth| {
            Arc::new(if depth == 1 {
                MlpArchitecture::linear(d, k).unwrap()
            } else {
                MlpArchitecture::mlp(d, k, vec![width; depth - 1]).unwrap()
            })
        })
        .collect()
}

pub fn prior(arch: &Arc<MlpArchitecture>, sigma: f64) -> GaussianFamily {
    GaussianFamily::isotropic(arch.clone(), sigma).unwrap()
}

/// Loop-based forward pass, independent of the library's batched one.
/// Returns the logits and the smallest hidden pre-activation magnitude.
pub fn reference_forward(params: &ParamVector, x: &[f64]) -> (Vec<f64>, f64) {
    let layers = params.arch().layers();
    let mut a = x.to_vec();
    let mut min_abs = f64::INFINITY;
    for (l, shape) in layers.iter().enumerate() {
        let w = params.weights(shape);
        let b = params.bias(shape);
        let mut z = vec![0.0; shape.fan_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = b.as_ref().map_or(0.0, |b| b[o]);
            for (i, ai) in a.iter().enumerate() {
                s += w[[o, i]] * ai;
            }
            *zo = s;
        }
        if l + 1 < layers.len() {
            min_abs = z.iter().fold(min_abs, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        } else {
            a = z;
        }
    }
    (a, min_abs)
}

/// Softmax NLL by direct summation with a max shift.
pub fn reference_nll(logits: &[f64], y: usize) -> f64 {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|t| (t - mx).exp()).sum();
    mx + s.ln() - logits[y]
}

pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;
/// Cases whose hidden pre-activations come this close to a ReLU kink are
/// redrawn: a finite difference across the kink measures neither side.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn central<F: Fn(&[f64]) -> f64>(f: F, at: &[f64]) -> Vec<f64> {
    let mut v = at.to_vec();
    (0..at.len())
        .map(|i| {
            v[i] = at[i] + FD_STEP;
            let up = f(&v);
            v[i] = at[i] - FD_STEP;
            let down = f(&v);
            v[i] = at[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn draw_case(arch: &Arc<MlpArchitecture>, r: &mut rand_chacha::ChaCha8Rng) -> (ParamVector, Vec<f64>, usize) {
    loop {
        let params = random_params(arch, r, 0.6);
        let x = normals(r, arch.input_dim(), 1.0);
        let y = pacgrad::rng::below(r, arch.class_count());
        if reference_forward(&params, &x).1 > KINK_MARGIN {
            return (params, x, y);
        }
    }
}

/// Composite Simpson on `n` and `2n` panels, Richardson-extrapolated.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let simpson = |n: usize| {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        h / 3.0 * (f(a) + inner + f(b))
    };
    let (coarse, fine) = (simpson(n), simpson(2 * n));
    fine + (fine - coarse) / 15.0
}

/// `KL(N(mq, sq^2) || N(mp, sp^2))` by integrating `q log(q/p)` in the
/// standardized variable of `q`.
pub fn kl_by_quadrature(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let f = |u: f64| {
        let x = mq + sq * u;
        let log_ratio = -0.5 * u * u - sq.ln() + (x - mp).powi(2) / (2.0 * sp * sp) + sp.ln();
        (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt() * log_ratio
    };
    integrate(&f, -40.0, 40.0, 1 << 16)
}

pub fn one_dim(mean: f64, sd: f64) -> GaussianFamily {
    let arch = Arc::new(MlpArchitecture::linear(1, 1).unwrap());
    GaussianFamily::new(arch, vec![mean], StdDev::Scalar(sd)).unwrap()
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}
