use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax of `[batch, classes]` logits, max-shifted.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let classes = logits.item_len();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels, and its
/// gradient with respect to the logits, `(softmax − onehot)/batch`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> (T, Tensor<T>) {
    let classes = logits.item_len();
    let batch = T::of(labels.len() as f64);
    let mut grad = softmax(logits);
    let mut loss = T::zero();
    for ((row, logit_row), &label) in grad
        .data_mut()
        .chunks_exact_mut(classes)
        .zip(logits.data().chunks_exact(classes))
        .zip(labels)
    {
        let label = label as usize;
        // log-sum-exp form keeps −log p finite when p underflows
        let max = logit_row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logit_row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        loss += lse - logit_row[label];
        row[label] -= T::one();
        for v in row.iter_mut() {
            *v /= batch;
        }
    }
    (loss / batch, grad)
}
