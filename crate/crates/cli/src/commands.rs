use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use swe_core::data::{load_mnist, DataError, Dataset, Splits};
use swe_core::ensemble::{measure_reliability, score_dataset, EnsembleError, Manifest, ManifestMember, Method, EVAL_CHUNK};
use swe_core::experiment::{run_experiment, ExperimentConfig, ExperimentError, ExperimentReport};
use swe_core::metrics::{confusion, macro_f1};
use swe_core::network::checkpoint::{self, CheckpointError, TrainingInfo};
use swe_core::network::{train_network, ArchSpec, Network, SgdConfig};
use swe_core::{Precision, Scalar};

use crate::output::{self, emit};
use crate::{CliError, DataArgs, EnsembleArgs, EvalSplit, EvaluateArgs, ExperimentArgs, Format, ReportArgs, TrainArgs};

fn data_err(e: DataError) -> CliError {
    CliError::Input(format!("data: {e}"))
}

fn checkpoint_err(e: CheckpointError) -> CliError {
    CliError::Input(format!("checkpoint: {e}"))
}

fn ensemble_err(e: EnsembleError) -> CliError {
    match e {
        EnsembleError::Checkpoint(c) => checkpoint_err(c),
        e @ (EnsembleError::ManifestIo { .. }
        | EnsembleError::ManifestFormat(_)
        | EnsembleError::EmptyEnsemble
        | EnsembleError::InvalidReliability(_)) => CliError::Input(e.to_string()),
        other => CliError::Training(other.to_string()),
    }
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Training { .. } | ExperimentError::Ensemble { .. } => CliError::Training(e.to_string()),
        ExperimentError::IoFailure { .. } => CliError::Output(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn load<T: Scalar>(data: &DataArgs) -> Result<Splits<T>, CliError> {
    load_mnist(&data.data_dir, &data.spec()).map_err(data_err)
}

fn pick<T>(splits: &Splits<T>, on: EvalSplit) -> &Dataset<T> {
    match on {
        EvalSplit::Validation => &splits.validation,
        EvalSplit::Test => &splits.test,
    }
}

pub fn train(args: &TrainArgs, fmt: Format) -> Result<(), CliError> {
    let sgd = SgdConfig { learning_rate: args.lr, batch_size: args.batch_size, epochs: args.epochs, seed: args.seed };
    sgd.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    match args.precision {
        Precision::F32 => train_as::<f32>(args, sgd, fmt),
        Precision::F64 => train_as::<f64>(args, sgd, fmt),
    }
}

fn train_as<T: Scalar>(args: &TrainArgs, sgd: SgdConfig, fmt: Format) -> Result<(), CliError> {
    let splits = load::<T>(&args.data)?;
    let arch = ArchSpec::new(args.arch);
    let training = |e: swe_core::network::NetworkError| CliError::Training(e.to_string());
    let net = Network::<T>::build(&arch, args.seed).map_err(training)?;
    let (net, history) = train_network(net, &splits.train, &sgd).map_err(training)?;
    let reliability = measure_reliability(&net, &splits.validation).map_err(ensemble_err)?;

    let info = TrainingInfo { seed: args.seed, sgd: Some(sgd), precision: T::PRECISION };
    checkpoint::save(&net, &info, &args.out).map_err(|e| CliError::Output(e.to_string()))?;
    if let Some(path) = &args.manifest {
        append_member(path, &args.out, reliability, args.seed)?;
    }

    let value = json!({
        "checkpoint": args.out,
        "arch": args.arch.to_string(),
        "precision": T::PRECISION.to_string(),
        "seed": args.seed,
        "train_samples": splits.train.len(),
        "validation_samples": splits.validation.len(),
        "epochs": history.iter().map(|h| json!({"epoch": h.epoch + 1, "mean_loss": h.mean_loss})).collect::<Vec<_>>(),
        "reliability": reliability,
    });
    let mut text = String::new();
    writeln!(text, "checkpoint   {}", args.out.display()).unwrap();
    writeln!(text, "arch         {} ({}, seed {})", args.arch, T::PRECISION, args.seed).unwrap();
    for h in &history {
        writeln!(text, "epoch {:<6} mean loss {:.5}", h.epoch + 1, h.mean_loss).unwrap();
    }
    writeln!(text, "reliability  {:.5} (validation macro-F1, {} samples)", reliability, splits.validation.len()).unwrap();
    emit(fmt, &value, &text)
}

fn append_member(manifest: &Path, checkpoint: &Path, reliability: f64, seed: u64) -> Result<(), CliError> {
    let mut m = if manifest.exists() {
        Manifest::load(manifest).map_err(ensemble_err)?
    } else {
        Manifest { method: Method::Swe, master_seed: seed, members: Vec::new() }
    };
    let checkpoint = std::path::absolute(checkpoint).map_err(|e| CliError::Output(e.to_string()))?;
    m.members.push(ManifestMember { checkpoint, reliability });
    m.save(manifest).map_err(|e| CliError::Output(e.to_string()))
}

pub fn evaluate(args: &EvaluateArgs, fmt: Format) -> Result<(), CliError> {
    let (net, header) = checkpoint::load::<f64>(&args.checkpoint).map_err(checkpoint_err)?;
    match header.training.precision {
        Precision::F32 => evaluate_as(args, &net.cast::<f32>(), fmt),
        Precision::F64 => evaluate_as(args, &net, fmt),
    }
}

fn evaluate_as<T: Scalar>(args: &EvaluateArgs, net: &Network<T>, fmt: Format) -> Result<(), CliError> {
    let splits = load::<T>(&args.data)?;
    let ds = pick(&splits, args.on);
    let predicted = score_dataset(net, ds, EVAL_CHUNK).map_err(ensemble_err)?.argmax();
    let cm = confusion(&predicted, ds.labels()).map_err(|e| CliError::Training(e.to_string()))?;
    let report = macro_f1(&cm).map_err(|e| CliError::Input(e.to_string()))?;
    let split = output::split_name(args.on);
    let value = json!({
        "checkpoint": args.checkpoint,
        "split": split,
        "samples": ds.len(),
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
        "per_class": report.per_class,
    });
    let text = output::f1_table(&args.checkpoint.display().to_string(), split, ds.len(), &report);
    emit(fmt, &value, &text)
}

pub fn ensemble_predict(args: &EnsembleArgs, fmt: Format) -> Result<(), CliError> {
    match args.precision {
        Precision::F32 => ensemble_as::<f32>(args, fmt),
        Precision::F64 => ensemble_as::<f64>(args, fmt),
    }
}

fn ensemble_as<T: Scalar>(args: &EnsembleArgs, fmt: Format) -> Result<(), CliError> {
    let manifest = Manifest::load(&args.manifest).map_err(ensemble_err)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let mut ensemble = manifest.ensemble::<T>(base).map_err(ensemble_err)?;
    if let Some(m) = args.method {
        ensemble = ensemble.with_method(m);
    }
    let splits = load::<T>(&args.data)?;
    let ds = pick(&splits, args.on);
    let parts = ensemble.member_scores_on(ds).map_err(ensemble_err)?;
    let fused = ensemble.combine(&parts, false).map_err(ensemble_err)?;
    let cm = confusion(&fused.predicted, ds.labels()).map_err(|e| CliError::Training(e.to_string()))?;
    let report = macro_f1(&cm).map_err(|e| CliError::Input(e.to_string()))?;

    if let Some(path) = &args.predictions_out {
        let mut rows = String::from("index,label,predicted\n");
        for (i, (&label, &p)) in ds.labels().iter().zip(&fused.predicted).enumerate() {
            writeln!(rows, "{i},{label},{p}").unwrap();
        }
        std::fs::write(path, rows).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }

    let method = output::method_name(ensemble.method());
    let split = output::split_name(args.on);
    let reliabilities = ensemble.reliabilities();
    let value = json!({
        "method": method,
        "members": reliabilities.len(),
        "reliabilities": reliabilities,
        "split": split,
        "samples": ds.len(),
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
    });
    let mut text = String::new();
    writeln!(text, "method       {method}").unwrap();
    writeln!(text, "members      {}", reliabilities.len()).unwrap();
    for (i, r) in reliabilities.iter().enumerate() {
        writeln!(text, "  member {i:<3} reliability {r:.5}").unwrap();
    }
    writeln!(text, "split        {split} ({} samples)", ds.len()).unwrap();
    writeln!(text, "macro-F1     {:.5}", report.macro_f1).unwrap();
    writeln!(text, "micro-F1     {:.5}", report.micro_f1).unwrap();
    emit(fmt, &value, &text)
}

pub fn experiment(args: &ExperimentArgs, fmt: Format) -> Result<(), CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path).map_err(experiment_err)?,
        (None, Some(name)) => ExperimentConfig::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}` (desk, full, full-a, full-b, full-c)")))?,
        (None, None) => return Err(CliError::Usage("experiment needs --config or --preset".into())),
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dir) = &args.data_dir {
        cfg.data_dir = dir.clone();
    }
    let report = run_experiment(&cfg).map_err(experiment_err)?;
    report.persist(&cfg.output_dir).map_err(experiment_err)?;
    log::info!("wrote report files to {}", cfg.output_dir.display());
    emit(fmt, &output::summary_json(&report), &output::summary_table(&report))
}

pub fn report(args: &ReportArgs, fmt: Format) -> Result<(), CliError> {
    let report = ExperimentReport::load(&args.input).map_err(|e| match e {
        ExperimentError::IoFailure { .. } => CliError::Input(e.to_string()),
        other => experiment_err(other),
    })?;
    emit(fmt, &output::summary_json(&report), &output::summary_table(&report))
}
