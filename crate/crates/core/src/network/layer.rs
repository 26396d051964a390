use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvCache};
use super::dense::{Linear, LinearCache};
use super::norm::{BatchNorm2d, NormCache};
use super::pool::{MaxPool2d, PoolCache};
use super::NetworkError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Pointwise nonlinearity fused onto the end of a Conv or BatchNorm layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(T::zero()),
        }
    }

    /// Gradient through the activation given its output `y`.
    #[inline]
    pub fn backprop<T: Scalar>(self, y: T, grad: T) -> T {
        match self {
            Activation::Relu if y <= T::zero() => T::zero(),
            _ => grad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    MaxPool,
    BatchNorm,
    Flatten,
    FullyConnected,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    MaxPool(MaxPool2d),
    BatchNorm(BatchNorm2d<T>),
    Flatten,
    FullyConnected(Linear<T>),
}

/// Whatever a layer must remember from its train-mode forward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv(ConvCache<T>),
    MaxPool(PoolCache),
    BatchNorm(NormCache<T>),
    Flatten(Vec<usize>),
    FullyConnected(LinearCache<T>),
}

fn item3(shape: &[usize], what: &str) -> Result<[usize; 3], NetworkError> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(NetworkError::shape(what, &[0, 0, 0], shape)),
    }
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(_) => LayerKind::Conv,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Flatten => LayerKind::Flatten,
            Layer::FullyConnected(_) => LayerKind::FullyConnected,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NetworkError> {
        match self {
            Layer::Conv(c) => Ok(c.output_shape(item3(input, "conv input")?)?.to_vec()),
            Layer::MaxPool(p) => Ok(p.output_shape(item3(input, "pool input")?)?.to_vec()),
            Layer::BatchNorm(bn) => {
                let s = item3(input, "batch-norm input")?;
                if s[0] != bn.channels() {
                    return Err(NetworkError::shape("batch-norm channels", &[bn.channels()], &[s[0]]));
                }
                Ok(s.to_vec())
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::FullyConnected(fc) => match *input {
                [n] if n == fc.inputs() => Ok(vec![fc.outputs()]),
                _ => Err(NetworkError::shape("linear input", &[fc.inputs()], input)),
            },
        }
    }

    /// Trainable tensors in a fixed order (weight then bias, or gamma then beta).
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            Layer::FullyConnected(fc) => vec![&fc.weight, &fc.bias],
            Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::FullyConnected(fc) => vec![&mut fc.weight, &mut fc.bias],
            Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    /// Every stored tensor with its name: parameters plus BN running statistics.
    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::BatchNorm(bn) => vec![
                ("gamma", &bn.gamma),
                ("beta", &bn.beta),
                ("running_mean", &bn.running_mean),
                ("running_var", &bn.running_var),
            ],
            Layer::FullyConnected(fc) => vec![("weight", &fc.weight), ("bias", &fc.bias)],
            Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv(c) => vec![("weight", &mut c.weight), ("bias", &mut c.bias)],
            Layer::BatchNorm(bn) => vec![
                ("gamma", &mut bn.gamma),
                ("beta", &mut bn.beta),
                ("running_mean", &mut bn.running_mean),
                ("running_var", &mut bn.running_var),
            ],
            Layer::FullyConnected(fc) => vec![("weight", &mut fc.weight), ("bias", &mut fc.bias)],
            Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::MaxPool(p) => p.forward(x),
            Layer::BatchNorm(bn) => bn.forward(x),
            Layer::Flatten => flatten(x),
            Layer::FullyConnected(fc) => fc.forward(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>), NetworkError> {
        Ok(match self {
            Layer::Conv(c) => {
                let (y, cache) = c.forward_train(x)?;
                (y, LayerCache::Conv(cache))
            }
            Layer::MaxPool(p) => {
                let (y, cache) = p.forward_train(x)?;
                (y, LayerCache::MaxPool(cache))
            }
            Layer::BatchNorm(bn) => {
                let (y, cache) = bn.forward_train(x)?;
                (y, LayerCache::BatchNorm(cache))
            }
            Layer::Flatten => (flatten(x)?, LayerCache::Flatten(x.shape().to_vec())),
            Layer::FullyConnected(fc) => {
                let (y, cache) = fc.forward_train(x)?;
                (y, LayerCache::FullyConnected(cache))
            }
        })
    }

    /// Input gradient and parameter gradients (aligned with [`Layer::params`]).
    pub fn backward(&self, cache: &LayerCache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        self.backward_with(cache, grad_out, true)
    }

    /// As [`Layer::backward`]; a convolution skips its input gradient when
    /// `input_grad` is false.
    pub fn backward_with(
        &self,
        cache: &LayerCache<T>,
        grad_out: &Tensor<T>,
        input_grad: bool,
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        match (self, cache) {
            (Layer::Conv(c), LayerCache::Conv(k)) => c.backward(k, grad_out, input_grad),
            (Layer::MaxPool(p), LayerCache::MaxPool(k)) => (p.backward(k, grad_out), Vec::new()),
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(k)) => bn.backward(k, grad_out),
            (Layer::Flatten, LayerCache::Flatten(shape)) => (
                grad_out.clone().reshape(shape).expect("flatten preserves element count"),
                Vec::new(),
            ),
            (Layer::FullyConnected(fc), LayerCache::FullyConnected(k)) => fc.backward(k, grad_out),
            _ => unreachable!("cache produced by a different layer kind"),
        }
    }
}

fn flatten<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
    let b = x.batch();
    if x.shape().len() < 2 {
        return Err(NetworkError::shape("flatten input rank", &[0, 0], x.shape()));
    }
    Ok(x.clone().reshape(&[b, x.item_len()]).expect("same element count"))
}
