use super::{DataError, Dataset};
use crate::rng::{derive_seed, XorShift64Star};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// Positions of the samples within the dataset.
    pub indices: Vec<usize>,
    /// `[batch, channels, rows, cols]`.
    pub images: Tensor<T>,
    pub labels: Vec<u8>,
}

impl<T: Scalar> Batch<T> {
    pub fn gather(dataset: &Dataset<T>, indices: &[usize]) -> Self {
        let per = dataset.item_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(dataset.image(i));
        }
        let [c, h, w] = dataset.item_shape();
        Self {
            indices: indices.to_vec(),
            images: Tensor::from_vec(&[indices.len(), c, h, w], data)
                .expect("gathered exactly batch·item values"),
            labels: indices.iter().map(|&i| dataset.labels()[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[batch, 10]` indicator matrix of the labels.
    pub fn one_hot(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(&[self.len(), NUM_CLASSES]);
        for (row, &label) in self.labels.iter().enumerate() {
            t.data_mut()[row * NUM_CLASSES + label as usize] = T::one();
        }
        t
    }
}

/// Shuffled minibatches over one dataset.
///
/// The order of epoch `e` is the permutation drawn from
/// `XorShift64Star::new(derive_seed(seed, e))`, so it depends only on
/// `(seed, epoch)` and the dataset length.
#[derive(Debug, Clone)]
pub struct BatchIterator<'a, T> {
    dataset: &'a Dataset<T>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a, T: Scalar> BatchIterator<'a, T> {
    pub fn new(dataset: &'a Dataset<T>, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::ZeroBatchSize);
        }
        let mut it = Self { dataset, batch_size, seed, epoch: 0, order: Vec::new(), cursor: 0 };
        it.start_epoch(0);
        Ok(it)
    }

    /// Rewind to the beginning of `epoch` with its own permutation.
    pub fn start_epoch(&mut self, epoch: u64) {
        self.epoch = epoch;
        self.order =
            XorShift64Star::new(derive_seed(self.seed, epoch)).permutation(self.dataset.len());
        self.cursor = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Next slice of the epoch permutation; `None` marks the end of the epoch.
    pub fn next_batch(&mut self) -> Option<Batch<T>> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = Batch::gather(self.dataset, &self.order[self.cursor..end]);
        self.cursor = end;
        Some(batch)
    }
}

impl<T: Scalar> Iterator for BatchIterator<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        self.next_batch()
    }
}
