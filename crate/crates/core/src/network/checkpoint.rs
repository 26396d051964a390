//! Model checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic, ASCII "SWECKPT1"
//! 8       4     u32 header length H
//! 12      H     UTF-8 JSON header (see `Header`)
//! 12+H    ...   tensor payloads in header order, each Π(shape) f64 values
//! ```
//!
//! The header records the layer stack (so any stack can be rebuilt, not
//! only the LeNet variants), the optional `ArchSpec`, the SGD settings and
//! seed used for training, the storage precision the model was trained in,
//! and the name and shape of every tensor. Tensors are always stored as
//! 64-bit floats regardless of training precision. The file must end exactly
//! after the last payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Activation, ArchSpec, BatchNorm2d, Conv2d, ConvGeometry, Layer, Linear, MaxPool2d, Network, NetworkError,
    SgdConfig,
};
use crate::scalar::{Precision, Scalar};

pub const MAGIC: &[u8; 8] = b"SWECKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("checkpoint has {extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("tensor {name} in file does not match the layer stack")]
    TensorMismatch { name: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Layer description sufficient to rebuild an uninitialized layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { geometry: ConvGeometry, activation: Activation },
    MaxPool { size: usize, stride: usize },
    BatchNorm { channels: usize, eps: f64, momentum: f64, activation: Activation },
    Flatten,
    FullyConnected { inputs: usize, outputs: usize },
}

impl LayerSpec {
    fn of<T: Scalar>(layer: &Layer<T>) -> Self {
        match layer {
            Layer::Conv(c) => LayerSpec::Conv { geometry: c.geometry, activation: c.activation },
            Layer::MaxPool(p) => LayerSpec::MaxPool { size: p.size, stride: p.stride },
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm {
                channels: bn.channels(),
                eps: bn.eps,
                momentum: bn.momentum,
                activation: bn.activation,
            },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::FullyConnected(fc) => LayerSpec::FullyConnected { inputs: fc.inputs(), outputs: fc.outputs() },
        }
    }

    fn build<T: Scalar>(&self) -> Layer<T> {
        match *self {
            LayerSpec::Conv { geometry, activation } => Layer::Conv(Conv2d::zeroed(geometry, activation)),
            LayerSpec::MaxPool { size, stride } => Layer::MaxPool(MaxPool2d { size, stride }),
            LayerSpec::BatchNorm { channels, eps, momentum, activation } => {
                Layer::BatchNorm(BatchNorm2d::new(channels, eps, momentum, activation))
            }
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::FullyConnected { inputs, outputs } => Layer::FullyConnected(Linear::zeroed(inputs, outputs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub seed: u64,
    pub sgd: Option<SgdConfig>,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub arch: Option<ArchSpec>,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub training: TrainingInfo,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes<T: Scalar>(net: &Network<T>, training: &TrainingInfo) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        for (name, t) in layer.state() {
            tensors.push(TensorEntry { name: format!("layers.{i}.{name}"), shape: t.shape().to_vec() });
            for v in t.data() {
                payload.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        arch: net.arch().cloned(),
        input_shape: net.input_shape(),
        layers: net.layers().iter().map(LayerSpec::of).collect(),
        training: training.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, Header), CheckpointError> {
    if bytes.len() < 12 {
        return Err(if bytes.len() >= 8 && &bytes[..8] != MAGIC {
            CheckpointError::BadMagic
        } else {
            CheckpointError::Truncated { expected: 12, actual: bytes.len() }
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12 + hlen;
    if bytes.len() < body {
        return Err(CheckpointError::Truncated { expected: body, actual: bytes.len() });
    }
    let header: Header = serde_json::from_slice(&bytes[12..body])?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(header.format_version));
    }

    let layers: Vec<Layer<T>> = header.layers.iter().map(LayerSpec::build).collect();
    let mut net = Network::from_layers(header.input_shape, layers)?;
    net.set_arch(header.arch.clone());

    let mut entries = header.tensors.iter();
    let mut offset = body;
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        for (name, t) in layer.state_mut() {
            let full = format!("layers.{i}.{name}");
            let entry = entries.next().ok_or_else(|| CheckpointError::TensorMismatch { name: full.clone() })?;
            if entry.name != full || entry.shape != t.shape() {
                return Err(CheckpointError::TensorMismatch { name: entry.name.clone() });
            }
            let need = offset + 8 * t.len();
            if bytes.len() < need {
                return Err(CheckpointError::Truncated { expected: need, actual: bytes.len() });
            }
            for (dst, chunk) in t.data_mut().iter_mut().zip(bytes[offset..need].chunks_exact(8)) {
                *dst = T::of(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
            }
            offset = need;
        }
    }
    if let Some(extra) = entries.next() {
        return Err(CheckpointError::TensorMismatch { name: extra.name.clone() });
    }
    if offset != bytes.len() {
        return Err(CheckpointError::TrailingBytes { extra: bytes.len() - offset });
    }
    Ok((net, header))
}

pub fn save<T: Scalar>(net: &Network<T>, training: &TrainingInfo, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(net, training))
        .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load<T: Scalar>(path: &Path) -> Result<(Network<T>, Header), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    from_bytes(&bytes)
}
