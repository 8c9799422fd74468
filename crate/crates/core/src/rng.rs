//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, stream id)`: the 64-bit seed keys the cipher and the stream id
//! picks one of its 2^64 independent counter streams. Stream ids are
//! namespaced by [`Stream`] so that, for example, prior weight sample `i`
//! depends only on `(seed, i)` and never on how many samples are drawn or on
//! which worker draws it.
//!
//! Standard normals use the Box–Muller transform on 53-bit uniforms, which
//! keeps golden values independent of any distribution crate's internals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose-tagged stream selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// The `i`-th draw from a parameter distribution.
    WeightSample(u64),
    /// Synthetic data generation.
    Data,
    /// Dataset shuffling for splits.
    Split,
    /// Initialization of a training run.
    TrainInit,
    /// Mini-batch order of epoch `e`.
    Epoch(u64),
    /// Free-form streams for tests and examples.
    Custom(u64),
}

const TAG_SHIFT: u32 = 56;

impl Stream {
    pub fn id(self) -> u64 {
        let (tag, idx) = match self {
            Stream::WeightSample(i) => (0u64, i),
            Stream::Data => (1, 0),
            Stream::Split => (2, 0),
            Stream::TrainInit => (3, 0),
            Stream::Epoch(e) => (4, e),
            Stream::Custom(i) => (5, i),
        };
        debug_assert!(idx < 1 << TAG_SHIFT);
        (tag << TAG_SHIFT) | idx
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Uniform on `(0, 1]` with 53 random bits.
#[inline]
pub fn uniform_open0<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with independent standard normals (Box–Muller, both outputs used).
pub fn fill_standard_normal<R: RngCore>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng).0;
    }
}

fn box_muller<R: RngCore>(rng: &mut R) -> (f64, f64) {
    let u1 = uniform_open0(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Uniform index in `0..n` by rejection.
pub fn below<R: RngCore>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Fisher–Yates shuffle.
pub fn shuffle<R: RngCore, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, Stream::WeightSample(3));
        let mut b = stream(7, Stream::WeightSample(3));
        let mut c = stream(7, Stream::WeightSample(4));
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_ne!(Stream::Data.id(), Stream::WeightSample(1).id());
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut rng = stream(1, Stream::Custom(0));
        let mut v = vec![0.0; 200_001];
        fill_standard_normal(&mut rng, &mut v);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        assert!(m.abs() < 0.01, "{m}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = stream(3, Stream::Split);
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut rng, &mut v);
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
