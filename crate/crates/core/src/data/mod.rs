//! MNIST ingestion: IDX parsing, seeded splits and minibatching.

mod batch;
mod dataset;
pub mod idx;

use std::path::PathBuf;

pub use batch::{Batch, BatchIterator};
pub use dataset::{load_mnist, make_splits, Dataset, MnistFiles, Split, SplitSpec, Splits};
pub use idx::{parse_idx_images, parse_idx_labels, RawIdxImages, RawIdxLabels};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wrong IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: header promises {expected} bytes, file has {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("IDX file has {actual} bytes, header accounts for only {expected}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("label {label} at index {index} is not a digit class")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("requested {requested} {split} samples but only {available} are available")]
    SpecTooLarge { split: &'static str, requested: usize, available: usize },
    #[error("training images are {train:?} but test images are {test:?}")]
    DimensionMismatch { train: (usize, usize), test: (usize, usize) },
    #[error("batch size must be positive")]
    ZeroBatchSize,
}
