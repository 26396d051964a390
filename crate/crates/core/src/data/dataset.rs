use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::idx::{RawIdxImages, RawIdxLabels};
use super::DataError;
use crate::rng::{derive_seed, streams, XorShift64Star};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Sizes of the three splits plus the seed of the assigning permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Full MNIST: 50k/10k carved from the training file, the whole test file.
    pub fn full(seed: u64) -> Self {
        Self { train_count: 50_000, validation_count: 10_000, test_count: 10_000, seed }
    }

    pub fn desk(seed: u64) -> Self {
        Self { train_count: 8_000, validation_count: 2_000, test_count: 2_000, seed }
    }
}

/// Labeled images of one split, pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    images: Vec<T>,
    labels: Vec<u8>,
    /// `[channels, rows, cols]` of one sample.
    item_shape: [usize; 3],
    split: Split,
    /// Position of each sample in the file it came from.
    source_indices: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    /// Build from already-normalized values. `images.len()` must equal
    /// `labels.len() · Π item_shape`.
    pub fn new(
        images: Vec<T>,
        labels: Vec<u8>,
        item_shape: [usize; 3],
        split: Split,
    ) -> Result<Self, DataError> {
        let per: usize = item_shape.iter().product();
        if per == 0 || images.len() != labels.len() * per {
            return Err(DataError::CountMismatch {
                images: if per == 0 { 0 } else { images.len() / per },
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) =
            labels.iter().enumerate().find(|(_, &l)| l as usize >= crate::NUM_CLASSES)
        {
            return Err(DataError::LabelOutOfRange { index, label });
        }
        let source_indices = (0..labels.len()).collect();
        Ok(Self { images, labels, item_shape, split, source_indices })
    }

    /// Gather `indices` of the raw files into a normalized dataset.
    pub fn from_raw(
        images: &RawIdxImages,
        labels: &RawIdxLabels,
        indices: &[usize],
        split: Split,
    ) -> Self {
        let per = images.rows * images.cols;
        let mut pixels = Vec::with_capacity(indices.len() * per);
        let scale = T::of(255.0);
        for &i in indices {
            pixels.extend(images.image(i).iter().map(|&b| T::of(b as f64) / scale));
        }
        Self {
            images: pixels,
            labels: indices.iter().map(|&i| labels.labels[i]).collect(),
            item_shape: [1, images.rows, images.cols],
            split,
            source_indices: indices.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn item_shape(&self) -> [usize; 3] {
        self.item_shape
    }

    pub fn item_len(&self) -> usize {
        self.item_shape.iter().product()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn images(&self) -> &[T] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[T] {
        let n = self.item_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    /// Resample with replacement to the same size.
    pub fn bootstrap(&self, seed: u64) -> Self {
        let mut rng = XorShift64Star::new(derive_seed(seed, streams::BOOTSTRAP));
        let picks: Vec<usize> = (0..self.len()).map(|_| rng.below(self.len())).collect();
        self.select(&picks)
    }

    /// Samples at `positions` (indices into this dataset).
    pub fn select(&self, positions: &[usize]) -> Self {
        let n = self.item_len();
        let mut images = Vec::with_capacity(positions.len() * n);
        for &p in positions {
            images.extend_from_slice(self.image(p));
        }
        Self {
            images,
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            item_shape: self.item_shape,
            split: self.split,
            source_indices: positions.iter().map(|&p| self.source_indices[p]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits<T> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    pub test: Dataset<T>,
}

/// Assign the training file to train/validation by a seeded permutation and
/// draw the test subset from the test file with a second derived permutation.
///
/// When `test_count` equals the test file size the test split is the whole
/// file in its original order.
pub fn make_splits<T: Scalar>(
    train_images: &RawIdxImages,
    train_labels: &RawIdxLabels,
    test_images: &RawIdxImages,
    test_labels: &RawIdxLabels,
    spec: &SplitSpec,
) -> Result<Splits<T>, DataError> {
    for (imgs, lbls) in [(train_images, train_labels), (test_images, test_labels)] {
        if imgs.count != lbls.count {
            return Err(DataError::CountMismatch { images: imgs.count, labels: lbls.count });
        }
    }
    if (train_images.rows, train_images.cols) != (test_images.rows, test_images.cols) {
        return Err(DataError::DimensionMismatch {
            train: (train_images.rows, train_images.cols),
            test: (test_images.rows, test_images.cols),
        });
    }
    let wanted = spec.train_count + spec.validation_count;
    if wanted > train_images.count {
        return Err(DataError::SpecTooLarge {
            split: "train+validation",
            requested: wanted,
            available: train_images.count,
        });
    }
    if spec.test_count > test_images.count {
        return Err(DataError::SpecTooLarge {
            split: "test",
            requested: spec.test_count,
            available: test_images.count,
        });
    }

    let order = XorShift64Star::new(derive_seed(spec.seed, streams::SPLIT_TRAIN))
        .permutation(train_images.count);
    let (train_idx, rest) = order.split_at(spec.train_count);
    let validation_idx = &rest[..spec.validation_count];

    let test_idx: Vec<usize> = if spec.test_count == test_images.count {
        (0..test_images.count).collect()
    } else {
        let mut perm = XorShift64Star::new(derive_seed(spec.seed, streams::SPLIT_TEST))
            .permutation(test_images.count);
        perm.truncate(spec.test_count);
        perm
    };

    Ok(Splits {
        train: Dataset::from_raw(train_images, train_labels, train_idx, Split::Train),
        validation: Dataset::from_raw(train_images, train_labels, validation_idx, Split::Validation),
        test: Dataset::from_raw(test_images, test_labels, &test_idx, Split::Test),
    })
}

/// The four standard MNIST file names inside one directory.
#[derive(Debug, Clone)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

pub fn load_mnist<T: Scalar>(dir: &Path, spec: &SplitSpec) -> Result<Splits<T>, DataError> {
    let files = MnistFiles::in_dir(dir);
    let train_images = RawIdxImages::read(&files.train_images)?;
    let train_labels = RawIdxLabels::read(&files.train_labels)?;
    let test_images = RawIdxImages::read(&files.test_images)?;
    let test_labels = RawIdxLabels::read(&files.test_labels)?;
    make_splits(&train_images, &train_labels, &test_images, &test_labels, spec)
}
