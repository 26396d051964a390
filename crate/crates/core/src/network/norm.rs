use super::layer::Activation;
use super::NetworkError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel batch normalization over `(batch, rows, cols)`.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// statistics into the running estimates as
/// `running = momentum·running + (1 − momentum)·batch`, using the unbiased
/// variance `m/(m−1)·var` for the running variance when `m > 1`. Infer mode
/// normalizes with the running estimates and never mutates them.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    output: Tensor<T>,
}

impl<T> NormCache<T> {
    /// Normalized activations before the affine scale and shift.
    pub fn normalized(&self) -> &[T] {
        &self.xhat
    }
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64, activation: Activation) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            eps,
            momentum,
            activation,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize), NetworkError> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.channels() {
            return Err(NetworkError::shape("batch-norm input", &[0, self.channels(), 0, 0], s));
        }
        Ok((s[0], s[1], s[2] * s[3]))
    }

    /// Normalize with the given per-channel statistics, then scale, shift, activate.
    fn normalize(
        &self,
        x: &Tensor<T>,
        mean: &[T],
        inv_std: &[T],
        keep_xhat: bool,
    ) -> (Tensor<T>, Vec<T>) {
        let (b, c, hw) = (x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]);
        let mut out = vec![T::zero(); x.len()];
        let mut xhat = if keep_xhat { vec![T::zero(); x.len()] } else { Vec::new() };
        let (g, be) = (self.gamma.data(), self.beta.data());
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    let n = (x.data()[i] - mean[ci]) * inv_std[ci];
                    if keep_xhat {
                        xhat[i] = n;
                    }
                    out[i] = self.activation.apply(g[ci] * n + be[ci]);
                }
            }
        }
        (Tensor::from_vec(x.shape(), out).expect("same shape as input"), xhat)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.dims(x)?;
        let eps = T::of(self.eps);
        let inv_std: Vec<T> =
            self.running_var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        Ok(self.normalize(x, self.running_mean.data(), &inv_std, false).0)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>), NetworkError> {
        let (b, c, hw) = self.dims(x)?;
        let m = b * hw;
        let mf = T::of(m as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ci in 0..c {
            let mut acc = T::zero();
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                acc += x.data()[base..base + hw].iter().copied().sum::<T>();
            }
            mean[ci] = acc / mf;
            let mut sq = T::zero();
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for &v in &x.data()[base..base + hw] {
                    let d = v - mean[ci];
                    sq += d * d;
                }
            }
            var[ci] = sq / mf;
        }
        let eps = T::of(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (output, xhat) = self.normalize(x, &mean, &inv_std, true);

        let mom = T::of(self.momentum);
        let keep = T::one() - mom;
        let unbias = if m > 1 { mf / T::of((m - 1) as f64) } else { T::one() };
        for ci in 0..c {
            let rm = &mut self.running_mean.data_mut()[ci];
            *rm = mom * *rm + keep * mean[ci];
            let rv = &mut self.running_var.data_mut()[ci];
            *rv = mom * *rv + keep * var[ci] * unbias;
        }
        Ok((output.clone(), NormCache { xhat, inv_std, output }))
    }

    /// Returns `(dL/dx, [dL/dgamma, dL/dbeta])`.
    pub fn backward(&self, cache: &NormCache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        let s = grad_out.shape();
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        let mf = T::of((b * hw) as f64);
        let dy: Vec<T> = grad_out
            .data()
            .iter()
            .zip(cache.output.data())
            .map(|(&g, &y)| self.activation.backprop(y, g))
            .collect();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    dgamma[ci] += dy[i] * cache.xhat[i];
                    dbeta[ci] += dy[i];
                }
            }
        }
        // dx = γ·inv_std/m · (m·dy − Σdy − x̂·Σ(dy·x̂))
        let mut dx = vec![T::zero(); dy.len()];
        for bi in 0..b {
            for ci in 0..c {
                let k = self.gamma.data()[ci] * cache.inv_std[ci] / mf;
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    dx[i] = k * (mf * dy[i] - dbeta[ci] - cache.xhat[i] * dgamma[ci]);
                }
            }
        }
        (
            Tensor::from_vec(s, dx).expect("input-shaped gradient"),
            vec![
                Tensor::from_vec(&[c], dgamma).expect("channel gradient"),
                Tensor::from_vec(&[c], dbeta).expect("channel gradient"),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
        let mut rng = XorShift64Star::new(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
    }

    #[test]
    fn normalized_activations_have_zero_mean_unit_variance() {
        let mut bn = BatchNorm2d::<f64>::new(3, 1e-5, 0.9, Activation::Identity);
        let x = random(&[4, 3, 5, 5], 1, -2.0, 3.0);
        let (_, cache) = bn.forward_train(&x).unwrap();
        let xhat = cache.normalized();
        for ci in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|b| xhat[(b * 3 + ci) * 25..(b * 3 + ci + 1) * 25].to_vec()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm2d::<f64>::new(1, 1e-5, 0.9, Activation::Identity);
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        bn.forward_train(&x).unwrap();
        // mean 3, biased var 3.5, unbiased 14/3
        assert!((bn.running_mean.data()[0] - 0.3).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 14.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn infer_mode_is_pure() {
        let mut bn = BatchNorm2d::<f64>::new(2, 1e-5, 0.9, Activation::Relu);
        bn.forward_train(&random(&[3, 2, 2, 2], 2, -1.0, 1.0)).unwrap();
        let before = bn.clone();
        let x = random(&[1, 2, 2, 2], 3, -1.0, 1.0);
        let a = bn.forward(&x).unwrap();
        let b = bn.forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(bn, before);
    }

    #[test]
    fn running_variance_stays_nonnegative() {
        let mut bn = BatchNorm2d::<f64>::new(2, 1e-5, 0.9, Activation::Identity);
        for s in 0..20 {
            bn.forward_train(&random(&[2, 2, 3, 3], s, -5.0, 5.0)).unwrap();
        }
        assert!(bn.running_var.data().iter().all(|&v| v >= 0.0));
    }
}
