//! Score fusion across independently trained members.
//!
//! * Self-weighted (SWE): member `n` contributes its probability matrix
//!   scaled by its validation reliability, `P_n = R_n·S_n`, and the fused
//!   output is `Y = Σ_n P_n`, summed in member-index order.
//! * Bagging: each member votes for its row-wise argmax; the class with the
//!   most votes wins, ties going to the largest summed raw score among the
//!   tied classes and then to the lowest class index.
//! * Average: unweighted mean of the member probabilities (reported only).
//!
//! Every argmax in this module breaks ties toward the lowest class index.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::metrics::{self, MetricsError};
use crate::network::checkpoint::{self, CheckpointError};
use crate::network::{Classifier, Network, NetworkError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("member {member} has {found} score rows, expected {expected}")]
    ShapeMismatch { member: usize, expected: usize, found: usize },
    #[error("{scores} score matrices but {reliabilities} reliabilities")]
    LengthMismatch { scores: usize, reliabilities: usize },
    #[error("invalid score matrix: {0}")]
    InvalidScores(String),
    #[error("reliability {0} is outside [0, 1]")]
    InvalidReliability(f64),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot access manifest {path}: {source}")]
    ManifestIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    ManifestFormat(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Swe,
    Bagging,
    Average,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "swe" | "self-weighted" => Ok(Method::Swe),
            "bagging" | "vote" | "majority" => Ok(Method::Bagging),
            "average" | "soft" | "mean" => Ok(Method::Average),
            other => Err(format!("unknown fusion method `{other}` (expected swe, bagging or average)")),
        }
    }
}

/// `samples × 10` grid of per-class values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGrid<T> {
    samples: usize,
    values: Vec<T>,
}

impl<T: Scalar> ClassGrid<T> {
    pub fn zeros(samples: usize) -> Self {
        Self { samples, values: vec![T::zero(); samples * NUM_CLASSES] }
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self, EnsembleError> {
        if values.len() % NUM_CLASSES != 0 {
            return Err(EnsembleError::InvalidScores(format!(
                "{} values do not form rows of {NUM_CLASSES}",
                values.len()
            )));
        }
        Ok(Self { samples: values.len() / NUM_CLASSES, values })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(NUM_CLASSES)
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }
}

/// First index of the maximum.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One member's class probabilities: entries in `[0, 1]`, rows summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T>(ClassGrid<T>);

impl<T: Scalar> ScoreMatrix<T> {
    /// Row-sum tolerance: `max(1e-6, 16·ε)` of the element type.
    pub fn tolerance() -> f64 {
        (16.0 * T::epsilon().to_f64_lossy()).max(1e-6)
    }

    pub fn new(values: Vec<T>) -> Result<Self, EnsembleError> {
        let grid = ClassGrid::from_vec(values)?;
        let tol = Self::tolerance();
        for (i, row) in grid.rows().enumerate() {
            if row.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(EnsembleError::InvalidScores(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().map(|v| v.to_f64_lossy()).sum();
            if (sum - 1.0).abs() > tol {
                return Err(EnsembleError::InvalidScores(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(grid))
    }

    pub fn from_tensor(t: Tensor<T>) -> Result<Self, EnsembleError> {
        if t.shape().len() != 2 || t.shape()[1] != NUM_CLASSES {
            return Err(EnsembleError::InvalidScores(format!("tensor shape {:?} is not [n, 10]", t.shape())));
        }
        Self::new(t.into_data())
    }

    pub fn grid(&self) -> &ClassGrid<T> {
        &self.0
    }

    pub fn samples(&self) -> usize {
        self.0.samples
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.0.argmax()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedOutput<T> {
    /// SWE: `Y`. Bagging: vote tallies. Average: mean probabilities.
    pub fused: ClassGrid<T>,
    pub predicted: Vec<usize>,
    /// Per-member reliability-scaled scores `P_n`, when requested.
    pub partials: Option<Vec<ClassGrid<T>>>,
}

fn check_parts<T: Scalar>(parts: &[ScoreMatrix<T>]) -> Result<usize, EnsembleError> {
    let first = parts.first().ok_or(EnsembleError::EmptyEnsemble)?;
    let samples = first.samples();
    for (member, p) in parts.iter().enumerate() {
        if p.samples() != samples {
            return Err(EnsembleError::ShapeMismatch { member, expected: samples, found: p.samples() });
        }
    }
    Ok(samples)
}

/// `Y = Σ_n R_n·S_n`, prediction `argmax Y`. Reliabilities are used as given,
/// without normalization.
pub fn swe_combine<T: Scalar>(
    parts: &[ScoreMatrix<T>],
    reliabilities: &[T],
    keep_partials: bool,
) -> Result<CombinedOutput<T>, EnsembleError> {
    let samples = check_parts(parts)?;
    if reliabilities.len() != parts.len() {
        return Err(EnsembleError::LengthMismatch { scores: parts.len(), reliabilities: reliabilities.len() });
    }
    let mut fused = ClassGrid::zeros(samples);
    let mut partials = keep_partials.then(|| Vec::with_capacity(parts.len()));
    for (scores, &r) in parts.iter().zip(reliabilities) {
        let partial: Vec<T> = scores.grid().values().iter().map(|&s| s * r).collect();
        for (y, &p) in fused.values.iter_mut().zip(&partial) {
            *y += p;
        }
        if let Some(ps) = partials.as_mut() {
            ps.push(ClassGrid { samples, values: partial });
        }
    }
    let predicted = fused.argmax();
    Ok(CombinedOutput { fused, predicted, partials })
}

/// Majority vote over member argmaxes with a total tie-break.
pub fn bagging_combine<T: Scalar>(parts: &[ScoreMatrix<T>]) -> Result<CombinedOutput<T>, EnsembleError> {
    let samples = check_parts(parts)?;
    let mut fused = ClassGrid::zeros(samples);
    let mut predicted = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut votes = [0usize; NUM_CLASSES];
        let mut summed = [T::zero(); NUM_CLASSES];
        for p in parts {
            let row = p.row(i);
            votes[argmax(row)] += 1;
            for (s, &v) in summed.iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] > summed[best]) {
                best = c;
            }
        }
        for (f, &v) in fused.values[i * NUM_CLASSES..(i + 1) * NUM_CLASSES].iter_mut().zip(&votes) {
            *f = T::of(v as f64);
        }
        predicted.push(best);
    }
    Ok(CombinedOutput { fused, predicted, partials: None })
}

/// Unweighted mean of member probabilities.
pub fn average_combine<T: Scalar>(parts: &[ScoreMatrix<T>]) -> Result<CombinedOutput<T>, EnsembleError> {
    let samples = check_parts(parts)?;
    let mut fused = ClassGrid::zeros(samples);
    for p in parts {
        for (y, &s) in fused.values.iter_mut().zip(p.grid().values()) {
            *y += s;
        }
    }
    let n = T::of(parts.len() as f64);
    fused.values.iter_mut().for_each(|v| *v /= n);
    let predicted = fused.argmax();
    Ok(CombinedOutput { fused, predicted, partials: None })
}

/// Class probabilities of `model` on every sample, evaluated in chunks.
pub fn score_dataset<T: Scalar, M: Classifier<T>>(
    model: &M,
    dataset: &Dataset<T>,
    chunk: usize,
) -> Result<ScoreMatrix<T>, EnsembleError> {
    let chunk = chunk.max(1);
    let mut values = Vec::with_capacity(dataset.len() * NUM_CLASSES);
    let all: Vec<usize> = (0..dataset.len()).collect();
    for idx in all.chunks(chunk) {
        let batch = Batch::gather(dataset, idx);
        values.extend_from_slice(model.class_scores(&batch.images)?.data());
    }
    ScoreMatrix::new(values)
}

pub const EVAL_CHUNK: usize = 500;

/// Macro-F1 of the model's argmax predictions on the validation set.
pub fn measure_reliability<T: Scalar, M: Classifier<T>>(
    model: &M,
    validation: &Dataset<T>,
) -> Result<f64, EnsembleError> {
    if validation.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let predicted = score_dataset(model, validation, EVAL_CHUNK)?.argmax();
    Ok(metrics::macro_f1_of(&predicted, validation.labels())?)
}

/// A trained model with its validation reliability, fixed at construction.
#[derive(Debug, Clone)]
pub struct EnsembleMember<M> {
    model: M,
    reliability: f64,
}

impl<M> EnsembleMember<M> {
    pub fn new(model: M, reliability: f64) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&reliability) {
            return Err(EnsembleError::InvalidReliability(reliability));
        }
        Ok(Self { model, reliability })
    }

    /// Measure the reliability on `validation` and pair it with the model.
    pub fn measured<T: Scalar>(model: M, validation: &Dataset<T>) -> Result<Self, EnsembleError>
    where
        M: Classifier<T>,
    {
        let r = measure_reliability(&model, validation)?;
        Self::new(model, r)
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn reliability(&self) -> f64 {
        self.reliability
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble<M> {
    members: Vec<EnsembleMember<M>>,
    method: Method,
}

impl<M> Ensemble<M> {
    pub fn new(members: Vec<EnsembleMember<M>>, method: Method) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::EmptyEnsemble);
        }
        Ok(Self { members, method })
    }

    pub fn members(&self) -> &[EnsembleMember<M>] {
        &self.members
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn reliabilities(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.reliability).collect()
    }

    /// Fuse already-computed member scores with this ensemble's method.
    pub fn combine<T: Scalar>(
        &self,
        scores: &[ScoreMatrix<T>],
        keep_partials: bool,
    ) -> Result<CombinedOutput<T>, EnsembleError> {
        if scores.len() != self.members.len() {
            return Err(EnsembleError::LengthMismatch { scores: scores.len(), reliabilities: self.members.len() });
        }
        match self.method {
            Method::Swe => {
                let r: Vec<T> = self.members.iter().map(|m| T::of(m.reliability)).collect();
                swe_combine(scores, &r, keep_partials)
            }
            Method::Bagging => bagging_combine(scores),
            Method::Average => average_combine(scores),
        }
    }
}

impl<M: Sync> Ensemble<M> {
    /// Infer-mode scores of every member, in member order.
    pub fn member_scores<T: Scalar>(&self, x: &Tensor<T>) -> Result<Vec<ScoreMatrix<T>>, EnsembleError>
    where
        M: Classifier<T>,
    {
        self.members
            .par_iter()
            .map(|m| ScoreMatrix::from_tensor(m.model.class_scores(x)?))
            .collect()
    }

    pub fn member_scores_on<T: Scalar>(&self, dataset: &Dataset<T>) -> Result<Vec<ScoreMatrix<T>>, EnsembleError>
    where
        M: Classifier<T>,
    {
        self.members.par_iter().map(|m| score_dataset(&m.model, dataset, EVAL_CHUNK)).collect()
    }

    pub fn predict<T: Scalar>(&self, x: &Tensor<T>, keep_partials: bool) -> Result<CombinedOutput<T>, EnsembleError>
    where
        M: Classifier<T>,
    {
        self.combine(&self.member_scores(x)?, keep_partials)
    }
}

/// JSON description of an ensemble on disk. Relative checkpoint paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub master_seed: u64,
    pub members: Vec<ManifestMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub checkpoint: PathBuf,
    pub reliability: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| EnsembleError::ManifestIo { path: path.to_path_buf(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EnsembleError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|source| EnsembleError::ManifestIo { path: path.to_path_buf(), source })
    }

    /// Load every member checkpoint.
    pub fn ensemble<T: Scalar>(&self, base_dir: &Path) -> Result<Ensemble<Network<T>>, EnsembleError> {
        let members = self
            .members
            .iter()
            .map(|m| {
                let path = if m.checkpoint.is_absolute() { m.checkpoint.clone() } else { base_dir.join(&m.checkpoint) };
                let (net, _) = checkpoint::load::<T>(&path)?;
                EnsembleMember::new(net, m.reliability)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ensemble::new(members, self.method)
    }
}
