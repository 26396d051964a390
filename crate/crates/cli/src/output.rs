use std::fmt::Write as _;

use serde_json::{json, Value};
use swe_core::ensemble::Method;
use swe_core::experiment::ExperimentReport;
use swe_core::metrics::F1Report;

use crate::{CliError, EvalSplit, Format};

pub fn emit(fmt: Format, value: &Value, text: &str) -> Result<(), CliError> {
    match fmt {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes")),
        Format::Text => print!("{text}"),
    }
    Ok(())
}

pub fn split_name(on: EvalSplit) -> &'static str {
    match on {
        EvalSplit::Validation => "validation",
        EvalSplit::Test => "test",
    }
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Swe => "swe",
        Method::Bagging => "bagging",
        Method::Average => "average",
    }
}

pub fn f1_table(source: &str, split: &str, samples: usize, report: &F1Report) -> String {
    let mut t = String::new();
    writeln!(t, "checkpoint   {source}").unwrap();
    writeln!(t, "split        {split} ({samples} samples)").unwrap();
    writeln!(t, "macro-F1     {:.5}", report.macro_f1).unwrap();
    writeln!(t, "micro-F1     {:.5}", report.micro_f1).unwrap();
    writeln!(t).unwrap();
    writeln!(t, "class  precision   recall       f1  support").unwrap();
    for (c, s) in report.per_class.iter().enumerate() {
        writeln!(t, "{c:>5}  {:>9.5} {:>8.5} {:>8.5} {:>8}", s.precision, s.recall, s.f1, s.support).unwrap();
    }
    t
}

pub fn summary_json(r: &ExperimentReport) -> Value {
    json!({
        "arch": r.config.arch.variant.to_string(),
        "ensemble_size": r.config.ensemble_size,
        "trials": r.trials.len(),
        "mean_bagging_f1": r.mean_bagging_f1,
        "mean_swe_f1": r.mean_swe_f1,
        "mean_soft_average_f1": r.mean_soft_average_f1,
        "mean_difference": r.mean_difference,
        "superiority": r.superiority,
        "swe_win_percentage": r.swe_win_percentage,
    })
}

pub fn summary_table(r: &ExperimentReport) -> String {
    let s = &r.superiority;
    let mut t = String::new();
    writeln!(
        t,
        "Monte Carlo comparison: {}, {} members, {} trials",
        r.config.arch.variant,
        r.config.ensemble_size,
        r.trials.len()
    )
    .unwrap();
    writeln!(t).unwrap();
    writeln!(t, "{:<16}{:>13}", "method", "mean macro-F1").unwrap();
    writeln!(t, "{:<16}{:>13.5}", "bagging", r.mean_bagging_f1).unwrap();
    writeln!(t, "{:<16}{:>13.5}", "swe", r.mean_swe_f1).unwrap();
    writeln!(t, "{:<16}{:>13.5}", "soft average", r.mean_soft_average_f1).unwrap();
    writeln!(t, "{:<16}{:>+13.5}", "swe - bagging", r.mean_difference).unwrap();
    writeln!(t).unwrap();
    writeln!(t, "{:<16}{:>13}", "outcome", "trials").unwrap();
    writeln!(t, "{:<16}{:>13}", "bagging wins", s.bagging_wins).unwrap();
    writeln!(t, "{:<16}{:>13}", "draws", s.draws).unwrap();
    writeln!(t, "{:<16}{:>13}", "swe wins", s.swe_wins).unwrap();
    writeln!(t, "{:<16}{:>12.2}%", "swe win rate", r.swe_win_percentage).unwrap();
    t
}
