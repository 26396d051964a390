//! Oracle comparisons that both the integration tests and the acceptance
//! runner execute. Each returns the first disagreement it finds.

use swe_core::ensemble::{average_combine, bagging_combine, swe_combine};
use swe_core::metrics::{confusion, macro_f1, ConfusionMatrix};
use swe_core::rng::XorShift64Star;
use swe_core::NUM_CLASSES;

use super::{matrices, naive_macro_f1, random_counts, random_ensemble, swe_reference, vote_reference};

pub const ORACLE_TOLERANCE: f64 = 1e-12;

pub fn combiners_match_references(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = XorShift64Star::new(seed);
    for case in 0..instances {
        let (parts, r) = random_ensemble(&mut rng, true);
        let m = matrices(&parts);
        let (want_fused, want_pred) = swe_reference(&parts, &r);
        let got = swe_combine(&m, &r, false).map_err(|e| format!("case {case}: {e}"))?;
        let worst = got.fused.values().iter().zip(&want_fused).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > ORACLE_TOLERANCE {
            return Err(format!("case {case}: fused scores differ by {worst:e}"));
        }
        if got.predicted != want_pred {
            return Err(format!("case {case}: swe predictions differ"));
        }
        let voted = bagging_combine(&m).map_err(|e| format!("case {case}: {e}"))?;
        if voted.predicted != vote_reference(&parts) {
            return Err(format!("case {case}: vote predictions differ"));
        }
    }
    Ok(())
}

pub fn macro_f1_matches_reference(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = XorShift64Star::new(seed);
    for case in 0..instances {
        let counts = random_counts(&mut rng);
        let got = macro_f1(&ConfusionMatrix::from_counts(counts)).map_err(|e| e.to_string())?.macro_f1;
        let want = naive_macro_f1(&counts);
        if (got - want).abs() > ORACLE_TOLERANCE {
            return Err(format!("case {case}: {got} vs {want}"));
        }
    }
    Ok(())
}

fn f1(pred: &[usize], truth: &[usize]) -> Result<f64, String> {
    let cm = confusion(pred, truth).map_err(|e| e.to_string())?;
    Ok(macro_f1(&cm).map_err(|e| e.to_string())?.macro_f1)
}

/// Shuffling samples leaves macro-F1 bit-identical; permuting class ids
/// changes only the summation order.
pub fn macro_f1_invariances(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = XorShift64Star::new(seed);
    for case in 0..cases {
        let n = 1 + rng.below(300);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(NUM_CLASSES)).collect();
        let pred: Vec<usize> =
            truth.iter().map(|&t| if rng.below(3) == 0 { rng.below(NUM_CLASSES) } else { t }).collect();
        let base = f1(&pred, &truth)?;

        let order = rng.permutation(n);
        let p2: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let t2: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        if f1(&p2, &t2)? != base {
            return Err(format!("case {case}: sample order changed macro-F1"));
        }

        let relabel = rng.permutation(NUM_CLASSES);
        let p3: Vec<usize> = pred.iter().map(|&c| relabel[c]).collect();
        let t3: Vec<usize> = truth.iter().map(|&c| relabel[c]).collect();
        if (f1(&p3, &t3)? - base).abs() > ORACLE_TOLERANCE {
            return Err(format!("case {case}: relabeling changed macro-F1"));
        }
    }
    Ok(())
}

// Exact ties are excluded here: rescaling rounds differently, so a tie that
// exists in one computation need not survive in the other.
pub fn argmax_invariances(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = XorShift64Star::new(seed);
    for case in 0..cases {
        let (parts, r) = random_ensemble(&mut rng, false);
        let m = matrices(&parts);
        let err = |e: swe_core::ensemble::EnsembleError| format!("case {case}: {e}");
        let base = swe_combine(&m, &r, false).map_err(err)?.predicted;
        for c in [1e-3, 1.0, 1e3] {
            let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
            if swe_combine(&m, &scaled, false).map_err(err)?.predicted != base {
                return Err(format!("case {case}: scaling by {c} changed predictions"));
            }
        }
        let uniform = vec![0.5 + rng.next_f64() / 2.0; parts.len()];
        if swe_combine(&m, &uniform, false).map_err(err)?.predicted != average_combine(&m).map_err(err)?.predicted {
            return Err(format!("case {case}: uniform weights differ from the score average"));
        }
    }
    Ok(())
}
