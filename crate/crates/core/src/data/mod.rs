//! Dataset loading, pixel normalization and labeled/unlabeled pool bookkeeping.

pub mod idx;
pub mod pool;
pub mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use idx::{IdxError, ImageTensor};
pub use pool::{
    stratified_seed, stratified_seed_from, subsample_indices, LabeledPool, Oracle, PoolError, UnlabeledPool,
};

/// Number of classes in both supported benchmarks.
pub const NUM_CLASSES: usize = 10;
pub const IMAGE_SIDE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetId {
    Mnist,
    Fmnist,
}

impl DatasetId {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Fmnist => "fmnist",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "fmnist" => Ok(DatasetId::Fmnist),
            other => Err(format!("unknown dataset `{other}` (expected mnist or fmnist)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn file_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Raw images and labels for one split. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub images: ImageTensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl RawDataset {
    pub fn new(images: ImageTensor, labels: Vec<u8>, split: Split) -> Result<Self, PoolError> {
        if images.count != labels.len() {
            return Err(PoolError::LengthMismatch {
                images: images.count,
                labels: labels.len(),
            });
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.pixels_per_image()
    }

    /// Label-free view of the images, handed to selection strategies.
    pub fn features(&self) -> FeatureSource<'_> {
        FeatureSource { images: &self.images }
    }
}

/// Read-only access to normalized pixels without labels.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSource<'a> {
    images: &'a ImageTensor,
}

impl<'a> FeatureSource<'a> {
    pub fn new(images: &'a ImageTensor) -> Self {
        Self { images }
    }

    pub fn dim(&self) -> usize {
        self.images.pixels_per_image()
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.images.count == 0
    }

    pub fn rows(&self) -> usize {
        self.images.rows
    }

    pub fn cols(&self) -> usize {
        self.images.cols
    }

    pub fn get(&self, index: usize) -> FeatureVector {
        let mut fv = normalize(self.images.image(index));
        fv.source_index = index;
        fv
    }

    pub fn write(&self, index: usize, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(self.images.image(index)) {
            *o = f64::from(p) / 255.0;
        }
    }
}

/// A normalized image in `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub source_index: usize,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, source_index: usize) -> Self {
        Self {
            values,
            source_index,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scales raw bytes to `[0, 1]` by dividing by 255.
pub fn normalize(raw_pixels: &[u8]) -> FeatureVector {
    FeatureVector {
        values: raw_pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        source_index: 0,
    }
}

/// Train and test splits of one benchmark.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: DatasetId,
    pub train: RawDataset,
    pub test: RawDataset,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("no IDX file `{name}` (or `{name}.gz`) under {dir}")]
    Missing { name: String, dir: PathBuf },
    #[error("expected {expected}x{expected} images, found {rows}x{cols}")]
    BadShape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
}

pub fn image_file_name(split: Split) -> String {
    format!("{}-images-idx3-ubyte", split.file_prefix())
}

pub fn label_file_name(split: Split) -> String {
    format!("{}-labels-idx1-ubyte", split.file_prefix())
}

fn locate(dir: &Path, name: &str) -> Result<PathBuf, LoadError> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(LoadError::Missing {
        name: name.to_string(),
        dir: dir.to_path_buf(),
    })
}

pub fn load_split(dir: &Path, split: Split) -> Result<RawDataset, LoadError> {
    let images = idx::parse_idx_images(&idx::read_idx_file(&locate(dir, &image_file_name(split))?)?)?;
    if images.rows != IMAGE_SIDE || images.cols != IMAGE_SIDE {
        return Err(LoadError::BadShape {
            expected: IMAGE_SIDE,
            rows: images.rows,
            cols: images.cols,
        });
    }
    let labels = idx::parse_idx_labels(
        &idx::read_idx_file(&locate(dir, &label_file_name(split))?)?,
        NUM_CLASSES,
    )?;
    Ok(RawDataset::new(images, labels, split)?)
}

/// Directory holding the IDX files for `id`: `<root>/<id>` when it exists,
/// otherwise `root` itself.
pub fn dataset_dir(root: &Path, id: DatasetId) -> PathBuf {
    let nested = root.join(id.as_str());
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

pub fn load_dataset(root: &Path, id: DatasetId) -> Result<Dataset, LoadError> {
    let dir = dataset_dir(root, id);
    Ok(Dataset {
        id,
        train: load_split(&dir, Split::Train)?,
        test: load_split(&dir, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_endpoints() {
        let zeros = normalize(&[0u8; 784]);
        assert!(zeros.values.iter().all(|&v| v == 0.0));
        let ones = normalize(&[255u8; 784]);
        assert!(ones.values.iter().all(|&v| v == 1.0));
        assert_eq!(ones.len(), 784);
    }

    #[test]
    fn normalize_mid_value() {
        let v = normalize(&[51]).values[0];
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dataset_ids_parse() {
        assert_eq!("mnist".parse::<DatasetId>().unwrap(), DatasetId::Mnist);
        assert_eq!("fmnist".parse::<DatasetId>().unwrap(), DatasetId::Fmnist);
        assert!("cifar".parse::<DatasetId>().is_err());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let images = ImageTensor {
            count: 2,
            rows: 1,
            cols: 1,
            pixels: vec![0, 0],
        };
        assert!(RawDataset::new(images, vec![1], Split::Train).is_err());
    }
}
