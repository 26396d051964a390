//! From-scratch convolutional classifiers: layers, exact backpropagation and
//! minibatch SGD.

pub mod checkpoint;
mod conv;
mod dense;
mod layer;
pub mod loss;
mod norm;
mod pool;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use conv::{Conv2d, ConvGeometry};
pub use dense::Linear;
pub use layer::{Activation, Layer, LayerCache, LayerKind};
pub use norm::BatchNorm2d;
pub use pool::MaxPool2d;
pub use train::{train, train_network, EpochStats, SgdConfig};

use crate::rng::{derive_seed, streams, XorShift64Star};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { context: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("loss became non-finite{}", loss_context(.epoch, .batch))]
    NonFiniteLoss { epoch: Option<usize>, batch: Option<usize> },
    #[error("operation requires {required:?} mode but the network is in {actual:?} mode")]
    ModeMismatch { required: Mode, actual: Mode },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn loss_context(epoch: &Option<usize>, batch: &Option<usize>) -> String {
    match (epoch, batch) {
        (Some(e), Some(b)) => format!(" at epoch {e}, batch {b}"),
        _ => String::new(),
    }
}

impl NetworkError {
    pub(crate) fn shape(context: &str, expected: &[usize], found: &[usize]) -> Self {
        NetworkError::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `{Conv, MP} × 3` then one FC layer.
    LeNetA,
    /// `{Conv, BN, MP} × 3` then one FC layer.
    LeNetB,
    /// `{Conv, Conv, MP} × 3` then one FC layer.
    LeNetC,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String =
            s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "a" | "leneta" => Ok(Variant::LeNetA),
            "b" | "lenetb" => Ok(Variant::LeNetB),
            "c" | "lenetc" => Ok(Variant::LeNetC),
            _ => Err(format!("unknown architecture `{s}` (expected lenet-a, lenet-b or lenet-c)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::LeNetA => "LeNet-A",
            Variant::LeNetB => "LeNet-B",
            Variant::LeNetC => "LeNet-C",
        })
    }
}

/// Architecture and layer hyperparameters of one LeNet variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    pub variant: Variant,
    /// Output channels of the three feature-extractor blocks.
    pub channels: [usize; 3],
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// `[channels, rows, cols]` of one input image.
    pub input: [usize; 3],
    pub classes: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self::new(Variant::LeNetA)
    }
}

impl ArchSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            channels: [8, 16, 32],
            kernel_size: 5,
            stride: 1,
            padding: 2,
            pool_size: 2,
            pool_stride: 2,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            input: [1, 28, 28],
            classes: NUM_CLASSES,
        }
    }

    fn conv<T: Scalar>(&self, in_channels: usize, out_channels: usize, activation: Activation) -> Layer<T> {
        Layer::Conv(Conv2d::zeroed(
            ConvGeometry {
                in_channels,
                out_channels,
                kernel: self.kernel_size,
                stride: self.stride,
                padding: self.padding,
            },
            activation,
        ))
    }

    /// Uninitialized (all-zero) layer stack, BN at identity.
    pub fn layers<T: Scalar>(&self) -> Result<Vec<Layer<T>>, NetworkError> {
        let pool = Layer::MaxPool(MaxPool2d { size: self.pool_size, stride: self.pool_stride });
        let mut layers = Vec::new();
        let mut shape = self.input.to_vec();
        let mut in_ch = self.input[0];
        for &ch in &self.channels {
            match self.variant {
                Variant::LeNetA => layers.push(self.conv(in_ch, ch, Activation::Relu)),
                Variant::LeNetB => {
                    layers.push(self.conv(in_ch, ch, Activation::Identity));
                    layers.push(Layer::BatchNorm(BatchNorm2d::new(
                        ch,
                        self.bn_eps,
                        self.bn_momentum,
                        Activation::Relu,
                    )));
                }
                Variant::LeNetC => {
                    layers.push(self.conv(in_ch, ch, Activation::Relu));
                    layers.push(self.conv(ch, ch, Activation::Relu));
                }
            }
            layers.push(pool.clone());
            in_ch = ch;
        }
        layers.push(Layer::Flatten);
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        layers.push(Layer::FullyConnected(Linear::zeroed(shape[0], self.classes)));
        Ok(layers)
    }
}

/// Per-layer parameter gradients, aligned with [`Layer::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<Vec<Tensor<T>>>);

impl<T: Scalar> Gradients<T> {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.0.iter().flatten()
    }
}

/// Ordered layer stack ending in 10 class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Option<ArchSpec>,
    input_shape: [usize; 3],
    layers: Vec<Layer<T>>,
    mode: Mode,
}

/// Anything that maps an image batch to per-class probabilities.
pub trait Classifier<T> {
    /// `[batch, 10]` rows of class probabilities; must not mutate state.
    fn class_scores(&self, images: &Tensor<T>) -> Result<Tensor<T>, NetworkError>;
}

impl<T: Scalar> Classifier<T> for Network<T> {
    fn class_scores(&self, images: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.infer(images)
    }
}

/// Fill every weight tensor with `U(−a, a)`, `a = sqrt(6/(fan_in + fan_out))`,
/// drawn in layer order, row-major. Biases and BN shift start at zero,
/// BN scale at one.
fn initialize<T: Scalar>(layers: &mut [Layer<T>], seed: u64) {
    let mut rng = XorShift64Star::new(derive_seed(seed, streams::WEIGHT_INIT));
    for layer in layers {
        let (weight, fan_in, fan_out) = match layer {
            Layer::Conv(c) => {
                let g = c.geometry;
                let kk = g.kernel * g.kernel;
                (&mut c.weight, g.in_channels * kk, g.out_channels * kk)
            }
            Layer::FullyConnected(fc) => {
                let (i, o) = (fc.inputs(), fc.outputs());
                (&mut fc.weight, i, o)
            }
            _ => continue,
        };
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in weight.data_mut() {
            *w = T::of(rng.uniform(-bound, bound));
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Instantiate `spec` with seeded initial weights, in infer mode.
    pub fn build(spec: &ArchSpec, seed: u64) -> Result<Self, NetworkError> {
        let mut net = Self::from_layers(spec.input, spec.layers()?)?;
        initialize(&mut net.layers, seed);
        net.arch = Some(spec.clone());
        Ok(net)
    }

    /// Wrap an arbitrary layer stack; shapes are checked end to end.
    pub fn from_layers(input_shape: [usize; 3], layers: Vec<Layer<T>>) -> Result<Self, NetworkError> {
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape != [NUM_CLASSES] {
            return Err(NetworkError::shape("network output", &[NUM_CLASSES], &shape));
        }
        Ok(Self { arch: None, input_shape, layers, mode: Mode::Infer })
    }

    /// Seeded initialization of an arbitrary stack.
    pub fn initialized(input_shape: [usize; 3], layers: Vec<Layer<T>>, seed: u64) -> Result<Self, NetworkError> {
        let mut net = Self::from_layers(input_shape, layers)?;
        initialize(&mut net.layers, seed);
        Ok(net)
    }

    pub fn arch(&self) -> Option<&ArchSpec> {
        self.arch.as_ref()
    }

    pub(crate) fn set_arch(&mut self, arch: Option<ArchSpec>) {
        self.arch = arch;
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(Tensor::len).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NetworkError> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            let mut want = vec![0];
            want.extend_from_slice(&self.input_shape);
            return Err(NetworkError::shape("network input", &want, s));
        }
        Ok(())
    }

    /// Infer-mode logits. Pure: BN uses running statistics.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check_input(x)?;
        self.layers.iter().try_fold(x.clone(), |h, layer| layer.forward(&h))
    }

    /// Infer-mode class probabilities, `[batch, 10]`.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(loss::softmax(&self.logits(x)?))
    }

    /// Class probabilities in the current mode. In train mode BN normalizes
    /// with batch statistics and updates its running estimates.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        match self.mode {
            Mode::Infer => self.infer(x),
            Mode::Train => Ok(loss::softmax(&self.forward_train(x)?.0)),
        }
    }

    /// Train-mode logits plus the per-layer caches needed by [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<LayerCache<T>>), NetworkError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (y, cache) = layer.forward_train(&h)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Backpropagate `grad_logits` through the cached pass; returns the
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, caches: &[LayerCache<T>], grad_logits: Tensor<T>) -> (Gradients<T>, Tensor<T>) {
        self.backprop(caches, grad_logits, true)
    }

    fn backprop(&self, caches: &[LayerCache<T>], grad_logits: Tensor<T>, input_grad: bool) -> (Gradients<T>, Tensor<T>) {
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut g = grad_logits;
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let (gx, gp) = layer.backward_with(cache, &g, input_grad || i > 0);
            grads[i] = gp;
            g = gx;
        }
        (Gradients(grads), g)
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(&mut self, x: &Tensor<T>, labels: &[u8]) -> Result<(T, Gradients<T>), NetworkError> {
        if self.mode != Mode::Train {
            return Err(NetworkError::ModeMismatch { required: Mode::Train, actual: self.mode });
        }
        if labels.len() != x.batch() {
            return Err(NetworkError::shape("labels", &[x.batch()], &[labels.len()]));
        }
        let (logits, caches) = self.forward_train(x)?;
        let (loss, grad) = loss::softmax_cross_entropy(&logits, labels);
        if !loss.is_finite() {
            return Err(NetworkError::NonFiniteLoss { epoch: None, batch: None });
        }
        Ok((loss, self.backprop(&caches, grad, false).0))
    }

    /// `p ← p − lr·g` for every trainable tensor. BN running statistics are untouched.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) -> Result<(), NetworkError> {
        if grads.0.len() != self.layers.len() {
            return Err(NetworkError::shape("gradient layers", &[self.layers.len()], &[grads.0.len()]));
        }
        for (layer, lg) in self.layers.iter().zip(&grads.0) {
            let params = layer.params();
            if params.len() != lg.len() || params.iter().zip(lg).any(|(p, g)| p.shape() != g.shape()) {
                let want: Vec<usize> = params.iter().map(|p| p.len()).collect();
                let got: Vec<usize> = lg.iter().map(|g| g.len()).collect();
                return Err(NetworkError::shape("gradient tensors", &want, &got));
            }
        }
        for (layer, lg) in self.layers.iter_mut().zip(&grads.0) {
            for (p, g) in layer.params_mut().into_iter().zip(lg) {
                for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *pv -= lr * gv;
                }
            }
        }
        Ok(())
    }

    /// Element type conversion of every stored tensor.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv2d {
                    geometry: c.geometry,
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    activation: c.activation,
                }),
                Layer::MaxPool(p) => Layer::MaxPool(*p),
                Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNorm2d {
                    gamma: bn.gamma.cast(),
                    beta: bn.beta.cast(),
                    running_mean: bn.running_mean.cast(),
                    running_var: bn.running_var.cast(),
                    eps: bn.eps,
                    momentum: bn.momentum,
                    activation: bn.activation,
                }),
                Layer::Flatten => Layer::Flatten,
                Layer::FullyConnected(fc) => {
                    Layer::FullyConnected(Linear { weight: fc.weight.cast(), bias: fc.bias.cast() })
                }
            })
            .collect();
        Network { arch: self.arch.clone(), input_shape: self.input_shape, layers, mode: self.mode }
    }
}
