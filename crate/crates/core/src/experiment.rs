//! Monte Carlo comparison of SWE against bagging.
//!
//! A trial trains `N` members from seeds derived from
//! `(master_seed, trial, member)`, measures each member's validation
//! macro-F1, scores the test split once per member and feeds those same score
//! matrices to every combiner. Repeating this `T` times gives paired F1
//! values, their means and a win/draw/loss tally.
//!
//! Member seed: `derive_seed(derive_seed(master_seed, trial), member)`, where
//! `derive_seed(a, b) = splitmix64(splitmix64(a) ^ b)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_mnist, DataError, SplitSpec, Splits};
use crate::ensemble::{
    average_combine, bagging_combine, measure_reliability, score_dataset, swe_combine, EnsembleError,
    ScoreMatrix, EVAL_CHUNK,
};
use crate::metrics;
use crate::network::{train, ArchSpec, Network, NetworkError, SgdConfig, Variant};
use crate::rng::derive_seed;
use crate::scalar::{Precision, Scalar};

pub const REPORT_FILE: &str = "report.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const PLOT_FILE: &str = "plotdata.tsv";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    ConfigFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("trial {trial}, member {member}: training failed: {source}")]
    Training {
        trial: usize,
        member: usize,
        #[source]
        source: NetworkError,
    },
    #[error("trial {trial}: {source}")]
    Ensemble {
        trial: usize,
        #[source]
        source: EnsembleError,
    },
    #[error("no trials to summarize")]
    EmptyTrials,
    #[error("cannot access {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

/// Everything that determines an experiment's outcome, plus where to find
/// data and put results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: ArchSpec,
    pub ensemble_size: usize,
    pub trials: usize,
    /// `sgd.seed` is ignored; each member gets its own derived seed.
    pub sgd: SgdConfig,
    pub split: SplitSpec,
    pub master_seed: u64,
    pub precision: Precision,
    /// Train each member on a bootstrap resample of the training split.
    pub bootstrap: bool,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 8k/2k/2k subset, LeNet-A, N=5, T=10, 5 epochs.
    pub fn desk() -> Self {
        Self {
            arch: ArchSpec::new(Variant::LeNetA),
            ensemble_size: 5,
            trials: 10,
            sgd: SgdConfig { learning_rate: 0.05, ..SgdConfig::default() },
            split: SplitSpec::desk(0),
            master_seed: 2024,
            precision: Precision::F32,
            bootstrap: false,
            data_dir: PathBuf::from("data/mnist"),
            output_dir: PathBuf::from("results/desk"),
        }
    }

    /// Full MNIST (50k/10k/10k), N=5, T=30.
    pub fn full(variant: Variant) -> Self {
        Self {
            arch: ArchSpec::new(variant),
            trials: 30,
            split: SplitSpec::full(0),
            output_dir: PathBuf::from(format!("results/full-{}", variant.to_string().to_lowercase())),
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" | "full-a" => Some(Self::full(Variant::LeNetA)),
            "full-b" => Some(Self::full(Variant::LeNetB)),
            "full-c" => Some(Self::full(Variant::LeNetC)),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ExperimentError::ConfigIo { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if self.split.train_count == 0 || self.split.validation_count == 0 || self.split.test_count == 0 {
            return bad("every split needs at least one sample".into());
        }
        self.sgd.validate().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        self.arch.layers::<f64>().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn member_seed(&self, trial: usize, member: usize) -> u64 {
        member_seed(self.master_seed, trial, member)
    }
}

pub fn member_seed(master_seed: u64, trial: usize, member: usize) -> u64 {
    derive_seed(derive_seed(master_seed, trial as u64), member as u64)
}

/// Paired outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub bagging_f1: f64,
    pub swe_f1: f64,
    /// Unweighted probability average, reported alongside the two compared rules.
    pub soft_average_f1: f64,
    pub reliabilities: Vec<f64>,
    pub member_seeds: Vec<u64>,
    pub wall_clock_seconds: f64,
}

impl TrialResult {
    pub fn difference(&self) -> f64 {
        self.swe_f1 - self.bagging_f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuperiorityCount {
    pub bagging_wins: usize,
    pub draws: usize,
    pub swe_wins: usize,
}

impl SuperiorityCount {
    pub fn total(&self) -> usize {
        self.bagging_wins + self.draws + self.swe_wins
    }

    pub fn swe_win_percentage(&self) -> f64 {
        100.0 * self.swe_wins as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub mean_bagging_f1: f64,
    pub mean_swe_f1: f64,
    pub mean_soft_average_f1: f64,
    /// `mean_swe_f1 − mean_bagging_f1`.
    pub mean_difference: f64,
    pub superiority: SuperiorityCount,
    pub swe_win_percentage: f64,
}

/// F1 at the five decimals used for comparisons and reporting.
pub fn rounded_f1(v: f64) -> i64 {
    (v * 1e5).round() as i64
}

/// F1 values of the three fusion rules on one set of member scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedScores {
    pub bagging_f1: f64,
    pub swe_f1: f64,
    pub soft_average_f1: f64,
}

/// Apply every combiner to the same member score matrices.
pub fn evaluate_combiners<T: Scalar>(
    parts: &[ScoreMatrix<T>],
    reliabilities: &[f64],
    labels: &[u8],
) -> Result<PairedScores, EnsembleError> {
    let weights: Vec<T> = reliabilities.iter().map(|&r| T::of(r)).collect();
    let f1 = |predicted: &[usize]| metrics::macro_f1_of(predicted, labels);
    Ok(PairedScores {
        bagging_f1: f1(&bagging_combine(parts)?.predicted)?,
        swe_f1: f1(&swe_combine(parts, &weights, false)?.predicted)?,
        soft_average_f1: f1(&average_combine(parts)?.predicted)?,
    })
}

/// Train and evaluate one trial on already-loaded splits.
pub fn run_trial<T: Scalar>(
    cfg: &ExperimentConfig,
    splits: &Splits<T>,
    trial: usize,
) -> Result<TrialResult, ExperimentError> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..cfg.ensemble_size).map(|m| cfg.member_seed(trial, m)).collect();
    let members: Vec<(Network<T>, f64)> = seeds
        .par_iter()
        .enumerate()
        .map(|(member, &seed)| {
            let sgd = SgdConfig { seed, ..cfg.sgd };
            let trained = if cfg.bootstrap {
                train(&cfg.arch, &splits.train.bootstrap(seed), &sgd)
            } else {
                train(&cfg.arch, &splits.train, &sgd)
            };
            let net = trained.map_err(|source| ExperimentError::Training { trial, member, source })?;
            let r = measure_reliability(&net, &splits.validation)
                .map_err(|source| ExperimentError::Ensemble { trial, source })?;
            log::debug!("trial {trial} member {member}: reliability {r:.5}");
            Ok((net, r))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let wrap = |source| ExperimentError::Ensemble { trial, source };
    let parts: Vec<ScoreMatrix<T>> = members
        .par_iter()
        .map(|(net, _)| score_dataset(net, &splits.test, EVAL_CHUNK))
        .collect::<Result<_, _>>()
        .map_err(wrap)?;
    let reliabilities: Vec<f64> = members.iter().map(|(_, r)| *r).collect();
    let paired = evaluate_combiners(&parts, &reliabilities, splits.test.labels()).map_err(wrap)?;

    let result = TrialResult {
        trial,
        bagging_f1: paired.bagging_f1,
        swe_f1: paired.swe_f1,
        soft_average_f1: paired.soft_average_f1,
        reliabilities,
        member_seeds: seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "trial {trial}: bagging {:.5} swe {:.5} ({:.1}s)",
        result.bagging_f1,
        result.swe_f1,
        result.wall_clock_seconds
    );
    Ok(result)
}

/// Per-trial win/draw/loss on F1 rounded to five decimals.
pub fn count_superiority(trials: &[TrialResult]) -> Result<SuperiorityCount, ExperimentError> {
    if trials.is_empty() {
        return Err(ExperimentError::EmptyTrials);
    }
    let mut count = SuperiorityCount::default();
    for t in trials {
        match rounded_f1(t.swe_f1).cmp(&rounded_f1(t.bagging_f1)) {
            std::cmp::Ordering::Greater => count.swe_wins += 1,
            std::cmp::Ordering::Equal => count.draws += 1,
            std::cmp::Ordering::Less => count.bagging_wins += 1,
        }
    }
    Ok(count)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn aggregate(config: ExperimentConfig, trials: Vec<TrialResult>) -> Result<ExperimentReport, ExperimentError> {
    let superiority = count_superiority(&trials)?;
    let mean_bagging_f1 = mean(trials.iter().map(|t| t.bagging_f1));
    let mean_swe_f1 = mean(trials.iter().map(|t| t.swe_f1));
    let mean_soft_average_f1 = mean(trials.iter().map(|t| t.soft_average_f1));
    Ok(ExperimentReport {
        config,
        trials,
        mean_bagging_f1,
        mean_swe_f1,
        mean_soft_average_f1,
        mean_difference: mean_swe_f1 - mean_bagging_f1,
        superiority,
        swe_win_percentage: superiority.swe_win_percentage(),
    })
}

/// All trials of `cfg` on pre-loaded splits, reported in trial order.
pub fn run_experiment_on<T: Scalar>(
    cfg: &ExperimentConfig,
    splits: &Splits<T>,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, splits, t))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(cfg.clone(), trials)
}

/// Load MNIST from `cfg.data_dir` in the configured precision and run every trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_experiment_on(cfg, &load_mnist::<f32>(&cfg.data_dir, &cfg.split)?),
        Precision::F64 => run_experiment_on(cfg, &load_mnist::<f64>(&cfg.data_dir, &cfg.split)?),
    }
}

impl ExperimentReport {
    /// Check the internal consistency of a report read from disk.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::MalformedReport(m.to_string()));
        if self.trials.is_empty() {
            return Err(ExperimentError::EmptyTrials);
        }
        if self.superiority.total() != self.trials.len() {
            return bad("superiority counts do not add up to the number of trials");
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.trials.iter().all(|t| in_unit(t.bagging_f1) && in_unit(t.swe_f1) && in_unit(t.soft_average_f1)) {
            return bad("F1 value outside [0, 1]");
        }
        if count_superiority(&self.trials)? != self.superiority {
            return bad("superiority counts disagree with the trial values");
        }
        Ok(())
    }

    /// `trial,bagging_f1,swe_f1,diff`, one row per trial.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,bagging_f1,swe_f1,diff\n");
        for t in &self.trials {
            writeln!(out, "{},{},{},{}", t.trial, t.bagging_f1, t.swe_f1, t.difference()).expect("string write");
        }
        out
    }

    pub fn plot_tsv(&self) -> String {
        let mut out = String::from("trial\tbagging_f1\tswe_f1\n");
        for t in &self.trials {
            writeln!(out, "{}\t{}\t{}", t.trial, t.bagging_f1, t.swe_f1).expect("string write");
        }
        out
    }

    /// Write `report.json`, `trials.csv` and `plotdata.tsv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(), ExperimentError> {
        let io = |path: PathBuf| move |source| ExperimentError::IoFailure { path: path.clone(), source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        for (name, body) in [(REPORT_FILE, json), (TRIALS_FILE, self.trials_csv()), (PLOT_FILE, self.plot_tsv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(path.clone()))?;
        }
        Ok(())
    }

    /// Read a report from `path`, which is either `report.json` itself or the
    /// directory holding it.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file)
            .map_err(|source| ExperimentError::IoFailure { path: file.clone(), source })?;
        let report: Self =
            serde_json::from_str(&text).map_err(|e| ExperimentError::MalformedReport(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }
}
