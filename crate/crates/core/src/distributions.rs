//! Diagonal Gaussian distributions over parameter vectors.

use std::sync::Arc;

use crate::nn::{MlpArchitecture, ParamVector};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StdDev {
    /// One standard deviation shared by every coordinate.
    Scalar(f64),
    PerCoordinate(Vec<f64>),
}

impl StdDev {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            StdDev::Scalar(s) => *s,
            StdDev::PerCoordinate(v) => v[i],
        }
    }
}

/// `N(mean, diag(stddev^2))` over the parameters of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFamily {
    arch: Arc<MlpArchitecture>,
    mean: Vec<f64>,
    stddev: StdDev,
}

impl GaussianFamily {
    pub fn new(arch: Arc<MlpArchitecture>, mean: Vec<f64>, stddev: StdDev) -> Result<Self> {
        let n = arch.param_count();
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                what: "gaussian mean",
                expected: n,
                got: mean.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean".into()));
        }
        let valid = |s: f64| s > 0.0 && s.is_finite();
        match &stddev {
            StdDev::Scalar(s) if !valid(*s) => {
                return Err(Error::InvalidArgument(format!("stddev must be positive, got {s}")))
            }
            StdDev::PerCoordinate(v) if v.len() != n => {
                return Err(Error::DimensionMismatch {
                    what: "gaussian stddev",
                    expected: n,
                    got: v.len(),
                })
            }
            StdDev::PerCoordinate(v) if !v.iter().all(|&s| valid(s)) => {
                return Err(Error::InvalidArgument("stddev entries must be positive".into()))
            }
            _ => {}
        }
        Ok(Self { arch, mean, stddev })
    }

    /// Zero-mean isotropic prior `N(0, sigma^2 I)`.
    pub fn isotropic(arch: Arc<MlpArchitecture>, sigma: f64) -> Result<Self> {
        let n = arch.param_count();
        Self::new(arch, vec![0.0; n], StdDev::Scalar(sigma))
    }

    /// `N(center, sigma^2 I)` around a given parameter vector.
    pub fn around(center: &ParamVector, sigma: f64) -> Result<Self> {
        Self::new(center.arch().clone(), center.values().to_vec(), StdDev::Scalar(sigma))
    }

    pub fn arch(&self) -> &Arc<MlpArchitecture> {
        &self.arch
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &StdDev {
        &self.stddev
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw `index` of the stream keyed by `seed`; independent of how many
    /// other draws are taken.
    pub fn sample_one(&self, seed: u64, index: u64) -> ParamVector {
        let mut rng = rng::stream(seed, Stream::WeightSample(index));
        let mut z = vec![0.0; self.dim()];
        rng::fill_standard_normal(&mut rng, &mut z);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = self.mean[i] + self.stddev.at(i) * *zi;
        }
        ParamVector::new(self.arch.clone(), z).expect("finite gaussian draw")
    }

    /// The first `count` draws of the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<ParamVector> {
        (0..count as u64).map(|i| self.sample_one(seed, i)).collect()
    }
}

/// Closed-form `KL(q || p)` between diagonal Gaussians:
/// `sum_i log(s_p/s_q) + (s_q^2 + (m_q - m_p)^2) / (2 s_p^2) - 1/2`.
pub fn kl_divergence(q: &GaussianFamily, p: &GaussianFamily) -> Result<f64> {
    if q.arch != p.arch && *q.arch != *p.arch {
        return Err(Error::LayoutMismatch("KL divergence between different architectures".into()));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (sq, sp) = (q.stddev.at(i), p.stddev.at(i));
        let dm = q.mean[i] - p.mean[i];
        let r = sq / sp;
        // r^2 - 1 - 2 ln r, written to stay accurate when r is near 1.
        let ratio_term = (r - 1.0) * (r + 1.0) - 2.0 * r.ln();
        kl += 0.5 * ratio_term + dm * dm / (2.0 * sp * sp);
    }
    Ok(kl.max(0.0))
}
