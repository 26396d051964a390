use super::NetworkError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer `y = x·Wᵀ + b` on `[batch, in]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct LinearCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeroed(inputs: usize, outputs: usize) -> Self {
        Self { weight: Tensor::zeros(&[outputs, inputs]), bias: Tensor::zeros(&[outputs]) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.inputs() {
            return Err(NetworkError::shape("linear input", &[0, self.inputs()], s));
        }
        let (b, o) = (s[0], self.outputs());
        let mut out = Vec::with_capacity(b * o);
        for _ in 0..b {
            out.extend_from_slice(self.bias.data());
        }
        T::gemm(b, self.inputs(), o, x.data(), false, self.weight.data(), true, &mut out, true);
        Ok(Tensor::from_vec(&[b, o], out).expect("batch×outputs"))
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LinearCache<T>), NetworkError> {
        let y = self.forward(x)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// Returns `(dL/dx, [dL/dweight, dL/dbias])`.
    pub fn backward(&self, cache: &LinearCache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        let (b, i, o) = (grad_out.shape()[0], self.inputs(), self.outputs());
        let g = grad_out.data();
        let mut dw = vec![T::zero(); o * i];
        T::gemm(o, b, i, g, true, cache.input.data(), false, &mut dw, false);
        let mut db = vec![T::zero(); o];
        for row in g.chunks_exact(o) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![T::zero(); b * i];
        T::gemm(b, o, i, g, false, self.weight.data(), false, &mut dx, false);
        (
            Tensor::from_vec(&[b, i], dx).expect("input-shaped gradient"),
            vec![
                Tensor::from_vec(&[o, i], dw).expect("weight-shaped gradient"),
                Tensor::from_vec(&[o], db).expect("bias-shaped gradient"),
            ],
        )
    }
}
