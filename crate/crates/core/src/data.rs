//! Labeled datasets: IDX parsing, class-conditional Gaussian generation and
//! stratified splits.
//!
//! Labels are stored 0-based (`0..k`).

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: wrong magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("{path}: truncated, need {needed} bytes but file has {len}")]
    Truncated { path: String, needed: usize, len: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// Where a dataset came from; echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Idx {
        images: String,
        labels: String,
        /// Pixel scaling applied on load.
        normalization: String,
    },
    Synthetic {
        sigma: f64,
        n_per_class: usize,
        seed: u64,
    },
    InMemory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(
        inputs: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: inputs.nrows(),
                got: labels.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: class_count,
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset inputs".into()));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            provenance,
        })
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.inputs
            .row(i)
            .to_slice()
            .expect("dataset rows are contiguous")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_count];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            provenance: self.provenance.clone(),
        })
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_file(path: &Path) -> std::result::Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_header(
    bytes: &[u8],
    path: &Path,
    magic: u32,
    ndims: usize,
) -> std::result::Result<Vec<usize>, IdxError> {
    let header = 4 + 4 * ndims;
    let name = || path.display().to_string();
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            path: name(),
            needed: 4,
            len: bytes.len(),
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(IdxError::BadMagic {
            path: name(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            path: name(),
            needed: header,
            len: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..ndims).map(|i| read_u32(bytes, 4 + 4 * i) as usize).collect();
    let needed = header + dims.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: name(),
            needed,
            len: bytes.len(),
        });
    }
    Ok(dims)
}

/// Loads an IDX image/label pair. Pixels are scaled by `1/255` into `[0, 1]`
/// and each image is flattened row-major. The class count is
/// `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(ip)?;
    let idims = parse_header(&img, ip, IDX_IMAGES_MAGIC, 3)?;
    let lab = read_file(lp)?;
    let ldims = parse_header(&lab, lp, IDX_LABELS_MAGIC, 1)?;
    let (count, d) = (idims[0], idims[1] * idims[2]);
    if count != ldims[0] {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: ldims[0],
        }
        .into());
    }
    let pixels = &img[16..16 + count * d];
    let inputs = Array2::from_shape_vec((count, d), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("count x d pixels");
    let labels: Vec<usize> = lab[8..8 + count].iter().map(|&l| l as usize).collect();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    LabeledDataset::new(
        inputs,
        labels,
        k,
        Provenance::Idx {
            images: ip.display().to_string(),
            labels: lp.display().to_string(),
            normalization: "x / 255".into(),
        },
    )
}

/// Encoders for the IDX container.
pub mod idx {
    use super::{IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

    /// `count` images of `rows x cols` bytes, concatenated row-major.
    pub fn encode_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let per = (rows * cols) as usize;
        assert!(per > 0 && pixels.len().is_multiple_of(per), "pixel buffer is not a whole number of images");
        let mut out = Vec::with_capacity(16 + pixels.len());
        for v in [IDX_IMAGES_MAGIC, (pixels.len() / per) as u32, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + labels.len());
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }
}

/// Draws `n_per_class` points `x ~ N(mean_y, sigma^2 I)` for every class `y`.
/// Rows are ordered class by class.
pub fn synth_gaussian(
    class_means: ArrayView2<'_, f64>,
    sigma: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let (k, d) = class_means.dim();
    if k == 0 || d == 0 || n_per_class == 0 {
        return Err(Error::InvalidArgument("need k, d, n_per_class >= 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let mut inputs = Array2::zeros((k * n_per_class, d));
    rng::fill_standard_normal(&mut rng, inputs.as_slice_mut().expect("standard layout"));
    let mut labels = Vec::with_capacity(k * n_per_class);
    for y in 0..k {
        for i in 0..n_per_class {
            let mut row = inputs.row_mut(y * n_per_class + i);
            row *= sigma;
            row += &class_means.row(y);
            labels.push(y);
        }
    }
    LabeledDataset::new(
        inputs,
        labels,
        k,
        Provenance::Synthetic {
            sigma,
            n_per_class,
            seed,
        },
    )
}

/// Stratified split into `(train, heldout)`.
///
/// The train side gets `round(train_fraction * m)` examples, allocated to
/// classes by largest remainder (ties to the lower class), so every class
/// count is within one of its proportional share. Both sides are shuffled
/// deterministically by `seed`.
pub fn split(data: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let m = data.len();
    let n_train = (train_fraction * m as f64).round() as usize;
    if n_train == 0 || n_train == m {
        return Err(Error::InvalidArgument(format!(
            "split of {m} examples at {train_fraction} leaves one side empty"
        )));
    }

    let mut rng = rng::stream(seed, Stream::Split);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.class_count()];
    for (i, &y) in data.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    for idx in &mut by_class {
        rng::shuffle(&mut rng, idx);
    }

    let quota: Vec<f64> = by_class
        .iter()
        .map(|c| c.len() as f64 * n_train as f64 / m as f64)
        .collect();
    let mut take: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..take.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
        rb.partial_cmp(&ra).expect("finite quotas").then(a.cmp(&b))
    });
    let mut missing = n_train - take.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    let mut held = Vec::with_capacity(m - n_train);
    for (idx, &t) in by_class.iter().zip(&take) {
        train.extend_from_slice(&idx[..t]);
        held.extend_from_slice(&idx[t..]);
    }
    rng::shuffle(&mut rng, &mut train);
    rng::shuffle(&mut rng, &mut held);
    Ok((data.select(&train)?, data.select(&held)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::HashSet;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn two_image_fixture_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx::encode_images(2, 2, &[0, 255, 51, 102, 255, 0, 0, 255]));
        let lab = write(dir.path(), "lab", &idx::encode_labels(&[3, 1]));
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 4);
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.row(1), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.labels(), &[3, 1]);
        assert_eq!(ds.class_count(), 4);
    }

    #[test]
    fn idx_error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx::encode_images(2, 2, &[0; 8]));
        // Labels file carrying the image magic.
        let bad = write(dir.path(), "bad", &idx::encode_images(1, 1, &[0]));
        assert!(matches!(
            load_idx(&img, &bad),
            Err(Error::Idx(IdxError::BadMagic { found: 0x803, .. }))
        ));
        let mut short = idx::encode_images(2, 2, &[0; 8]);
        short.truncate(20);
        let short = write(dir.path(), "short", &short);
        let lab = write(dir.path(), "lab", &idx::encode_labels(&[0, 1]));
        assert!(matches!(load_idx(&short, &lab), Err(Error::Idx(IdxError::Truncated { .. }))));
        let lab3 = write(dir.path(), "lab3", &idx::encode_labels(&[0, 1, 2]));
        assert!(matches!(
            load_idx(&img, &lab3),
            Err(Error::Idx(IdxError::CountMismatch { images: 2, labels: 3 }))
        ));
        assert!(matches!(
            load_idx(dir.path().join("missing"), &lab),
            Err(Error::Idx(IdxError::Io { .. }))
        ));
    }

    #[test]
    fn synthetic_degenerate_and_deterministic() {
        let means = array![[1.0, -2.0], [0.5, 3.0], [0.0, 0.0]];
        let ds = synth_gaussian(means.view(), 1e-30, 4, 9).unwrap();
        assert_eq!(ds.class_counts(), vec![4, 4, 4]);
        for i in 0..ds.len() {
            let y = ds.labels()[i];
            for (x, m) in ds.row(i).iter().zip(means.row(y)) {
                assert!((x - m).abs() < 1e-20);
            }
        }
        let a = synth_gaussian(means.view(), 0.7, 10, 1).unwrap();
        let b = synth_gaussian(means.view(), 0.7, 10, 1).unwrap();
        assert_eq!(a, b);
    }

    fn fixture(k: usize, per: &[usize]) -> LabeledDataset {
        let labels: Vec<usize> = per
            .iter()
            .enumerate()
            .flat_map(|(y, &n)| std::iter::repeat_n(y, n))
            .collect();
        let m = labels.len();
        let inputs = Array2::from_shape_fn((m, 1), |(i, _)| i as f64);
        LabeledDataset::new(inputs, labels, k, Provenance::InMemory).unwrap()
    }

    #[test]
    fn split_is_a_stratified_partition() {
        let ds = fixture(10, &[50, 41, 37, 60, 12, 33, 29, 8, 44, 51]);
        for seed in 0..5 {
            let (tr, ho) = split(&ds, 0.8, seed).unwrap();
            assert_eq!(tr.len() + ho.len(), ds.len());
            assert_eq!(tr.len(), (0.8 * ds.len() as f64).round() as usize);
            let ids: HashSet<u64> = tr
                .inputs()
                .iter()
                .chain(ho.inputs().iter())
                .map(|v| *v as u64)
                .collect();
            assert_eq!(ids.len(), ds.len());
            for (c, (&n, &t)) in ds.class_counts().iter().zip(&tr.class_counts()).enumerate() {
                let share = n as f64 * tr.len() as f64 / ds.len() as f64;
                assert!((t as f64 - share).abs() <= 1.0, "class {c}: {t} vs {share}");
            }
        }
        let (a, _) = split(&ds, 0.5, 3).unwrap();
        let (b, _) = split(&ds, 0.5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_empty_sides() {
        let ds = fixture(2, &[1, 1]);
        assert!(split(&ds, 0.1, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
        assert!(split(&ds, 0.5, 0).is_ok());
    }
}
