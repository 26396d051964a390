use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max pooling over `size×size` windows. Trailing rows/columns that do not
/// fill a window are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: [usize; 4],
    /// Flat input index that won each output position.
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3], NetworkError> {
        let [c, h, w] = input;
        if self.size == 0 || self.stride == 0 || h < self.size || w < self.size {
            return Err(NetworkError::shape("pool window", &[self.size, self.size], &[h, w]));
        }
        Ok([c, (h - self.size) / self.stride + 1, (w - self.size) / self.stride + 1])
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache), NetworkError> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(NetworkError::shape("pool input rank", &[4], &[s.len()]));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let [_, ho, wo] = self.output_shape([c, h, w])?;
        let xd = x.data();
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::with_capacity(b * c * ho * wo);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    let mut best = base + y0 * w + x0;
                    // Strict `>` keeps the first maximum in row-major scan order.
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let idx = base + (y0 + dy) * w + x0 + dx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let y = Tensor::from_vec(&[b, c, ho, wo], out).expect("pool output sized from window");
        Ok((y, PoolCache { input_shape: [b, c, h, w], argmax }))
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.run(x).map(|(y, _)| y)
    }

    pub fn forward_train<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache), NetworkError> {
        self.run(x)
    }

    pub fn backward<T: Scalar>(&self, cache: &PoolCache, grad_out: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(&cache.input_shape);
        let d = dx.data_mut();
        for (&src, &g) in cache.argmax.iter().zip(grad_out.data()) {
            d[src] += g;
        }
        dx
    }
}
