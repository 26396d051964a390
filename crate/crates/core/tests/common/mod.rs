//! Independent reference implementations shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use swe_core::ensemble::ScoreMatrix;
use swe_core::network::loss::softmax_cross_entropy;
use swe_core::network::{Activation, BatchNorm2d, Conv2d, ConvGeometry, Layer, Linear, MaxPool2d};
use swe_core::rng::XorShift64Star;
use swe_core::{Tensor, NUM_CLASSES};

pub mod suites;

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// MNIST directory: `$SWE_DATA_DIR` or `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    match std::env::var_os("SWE_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    }
}

pub fn random_tensor(rng: &mut XorShift64Star, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn between(rng: &mut XorShift64Star, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Gradients whose norm is below this are treated as zero: central
/// differences carry roughly `1e-16·|L|/ε ≈ 1e-11` of round-off, so a
/// relative error against an exactly-zero gradient (a conv bias feeding
/// batch norm) is meaningless.
pub const ZERO_GRADIENT_NORM: f64 = 1e-6;

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, ZERO_GRADIENT_NORM)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    diff / scale.max(ZERO_GRADIENT_NORM)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train-mode output of a fresh copy of `layer`.
fn eval(layer: &Layer<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    layer.clone().forward_train(x).unwrap().0
}

fn central_difference(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(FD_EPS) - f(-FD_EPS)) / (2.0 * FD_EPS)
}

/// Worst relative error between analytic and central-difference gradients of
/// `L = Σ y·R` (random `R`) with respect to the input and every parameter.
pub fn check_layer(layer: &Layer<f64>, x: &Tensor<f64>, rng: &mut XorShift64Star) -> f64 {
    let y = eval(layer, x);
    let r = random_tensor(rng, y.shape(), -1.0, 1.0);
    let mut work = layer.clone();
    let (_, cache) = work.forward_train(x).unwrap();
    let (dx, dparams) = work.backward(&cache, &r);

    let numeric_dx: Vec<f64> = (0..x.len())
        .map(|i| {
            central_difference(|h| {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                dot(eval(layer, &xp).data(), r.data())
            })
        })
        .collect();
    let mut worst = rel_error(dx.data(), &numeric_dx);

    let n_params = layer.params().len();
    assert_eq!(dparams.len(), n_params);
    for (p, analytic) in dparams.iter().enumerate() {
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                central_difference(|h| {
                    let mut lp = layer.clone();
                    lp.params_mut()[p].data_mut()[i] += h;
                    dot(eval(&lp, x).data(), r.data())
                })
            })
            .collect();
        worst = worst.max(rel_error(analytic.data(), &numeric));
    }
    worst
}

fn activation(rng: &mut XorShift64Star) -> Activation {
    if rng.below(2) == 0 {
        Activation::Identity
    } else {
        Activation::Relu
    }
}

pub fn conv_case(rng: &mut XorShift64Star) -> (Layer<f64>, Tensor<f64>) {
    let kernel = between(rng, 1, 4);
    let geometry = ConvGeometry {
        in_channels: between(rng, 1, 3),
        out_channels: between(rng, 1, 4),
        kernel,
        stride: between(rng, 1, 3),
        padding: between(rng, 0, 2),
    };
    let mut conv = Conv2d::zeroed(geometry, activation(rng));
    conv.weight = random_tensor(rng, conv.weight.shape(), -1.0, 1.0);
    conv.bias = random_tensor(rng, conv.bias.shape(), -0.5, 0.5);
    let h = between(rng, kernel, kernel + 5);
    let w = between(rng, kernel, kernel + 5);
    let shape = [between(rng, 1, 3), geometry.in_channels, h, w];
    let x = random_tensor(rng, &shape, -1.0, 1.0);
    (Layer::Conv(conv), x)
}

pub fn pool_case(rng: &mut XorShift64Star) -> (Layer<f64>, Tensor<f64>) {
    let size = between(rng, 1, 3);
    let pool = MaxPool2d { size, stride: between(rng, 1, 3) };
    let shape = [between(rng, 1, 3), between(rng, 1, 3), between(rng, size, size + 5), between(rng, size, size + 5)];
    (Layer::MaxPool(pool), random_tensor(rng, &shape, -1.0, 1.0))
}

pub fn norm_case(rng: &mut XorShift64Star) -> (Layer<f64>, Tensor<f64>) {
    let channels = between(rng, 1, 4);
    let mut bn = BatchNorm2d::new(channels, 1e-5, 0.9, activation(rng));
    bn.gamma = random_tensor(rng, &[channels], 0.5, 1.5);
    bn.beta = random_tensor(rng, &[channels], -0.5, 0.5);
    let shape = [between(rng, 2, 4), channels, between(rng, 1, 4), between(rng, 1, 4)];
    (Layer::BatchNorm(bn), random_tensor(rng, &shape, -2.0, 2.0))
}

pub fn linear_case(rng: &mut XorShift64Star) -> (Layer<f64>, Tensor<f64>) {
    let (inputs, outputs) = (between(rng, 1, 12), between(rng, 1, 10));
    let mut fc = Linear::zeroed(inputs, outputs);
    fc.weight = random_tensor(rng, &[outputs, inputs], -1.0, 1.0);
    fc.bias = random_tensor(rng, &[outputs], -0.5, 0.5);
    let shape = [between(rng, 1, 4), inputs];
    (Layer::FullyConnected(fc), random_tensor(rng, &shape, -1.0, 1.0))
}

pub fn flatten_case(rng: &mut XorShift64Star) -> (Layer<f64>, Tensor<f64>) {
    let shape = [between(rng, 1, 3), between(rng, 1, 3), between(rng, 1, 4), between(rng, 1, 4)];
    (Layer::Flatten, random_tensor(rng, &shape, -1.0, 1.0))
}

/// Worst relative error of the softmax cross-entropy gradient.
pub fn check_loss(rng: &mut XorShift64Star) -> f64 {
    let batch = between(rng, 1, 8);
    let logits = random_tensor(rng, &[batch, NUM_CLASSES], -10.0, 10.0);
    let labels: Vec<u8> = (0..batch).map(|_| rng.below(NUM_CLASSES) as u8).collect();
    let (_, grad) = softmax_cross_entropy(&logits, &labels);
    let numeric: Vec<f64> = (0..logits.len())
        .map(|i| {
            central_difference(|h| {
                let mut z = logits.clone();
                z.data_mut()[i] += h;
                softmax_cross_entropy(&z, &labels).0
            })
        })
        .collect();
    rel_error(grad.data(), &numeric)
}

pub type CaseMaker = fn(&mut XorShift64Star) -> (Layer<f64>, Tensor<f64>);

pub const LAYER_KINDS: [(&str, CaseMaker); 5] = [
    ("conv", conv_case),
    ("max-pool", pool_case),
    ("batch-norm (train)", norm_case),
    ("fully-connected", linear_case),
    ("flatten", flatten_case),
];

/// `(kind, configurations, worst relative error)` for every layer kind and
/// the loss, `cases` random configurations each.
pub fn gradient_suite(cases: usize, seed: u64) -> Vec<(&'static str, usize, f64)> {
    let mut rng = XorShift64Star::new(seed);
    let mut out = Vec::new();
    for (name, make) in LAYER_KINDS {
        let worst = (0..cases)
            .map(|_| {
                let (layer, x) = make(&mut rng);
                check_layer(&layer, &x, &mut rng)
            })
            .fold(0.0, f64::max);
        out.push((name, cases, worst));
    }
    let worst = (0..cases).map(|_| check_loss(&mut rng)).fold(0.0, f64::max);
    out.push(("softmax cross-entropy", cases, worst));
    out
}

/// `samples × 10` probability rows. Coarse rows are built from a handful of
/// integer weights so exact ties are common.
pub fn probability_rows(rng: &mut XorShift64Star, samples: usize, coarse: bool) -> Vec<f64> {
    let mut values = Vec::with_capacity(samples * NUM_CLASSES);
    for _ in 0..samples {
        let raw: Vec<f64> = (0..NUM_CLASSES)
            .map(|_| if coarse { rng.below(4) as f64 } else { rng.next_f64() + 1e-3 })
            .collect();
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            values.extend(std::iter::repeat(1.0 / NUM_CLASSES as f64).take(NUM_CLASSES));
        } else {
            values.extend(raw.iter().map(|v| v / total));
        }
    }
    values
}

fn first_max(row: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..row.len() {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

/// `Y[i][c] = Σ_n r_n·S_n[i][c]` by explicit loops, prediction = first maximum.
pub fn swe_reference(parts: &[Vec<f64>], reliabilities: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let samples = parts[0].len() / NUM_CLASSES;
    let mut fused = vec![0.0; samples * NUM_CLASSES];
    for i in 0..samples {
        for c in 0..NUM_CLASSES {
            let mut y = 0.0;
            for (n, part) in parts.iter().enumerate() {
                y += reliabilities[n] * part[i * NUM_CLASSES + c];
            }
            fused[i * NUM_CLASSES + c] = y;
        }
    }
    let predicted = fused.chunks(NUM_CLASSES).map(first_max).collect();
    (fused, predicted)
}

/// Brute-force vote counter: most votes, then largest summed score, then
/// lowest class.
pub fn vote_reference(parts: &[Vec<f64>]) -> Vec<usize> {
    let samples = parts[0].len() / NUM_CLASSES;
    (0..samples)
        .map(|i| {
            let rows: Vec<&[f64]> = parts.iter().map(|p| &p[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]).collect();
            let votes = |c: usize| rows.iter().filter(|r| first_max(r) == c).count();
            let summed = |c: usize| rows.iter().fold(0.0, |acc, r| acc + r[c]);
            let mut best = 0;
            for c in 1..NUM_CLASSES {
                let better = votes(c) > votes(best) || (votes(c) == votes(best) && summed(c) > summed(best));
                if better {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Macro-F1 via `F1_c = 2·TP/(2·TP + FP + FN)`, zero for an empty class.
pub fn naive_macro_f1(counts: &[[u64; NUM_CLASSES]; NUM_CLASSES]) -> f64 {
    let mut sum = 0.0;
    for c in 0..NUM_CLASSES {
        let tp = counts[c][c];
        let fn_: u64 = (0..NUM_CLASSES).filter(|&p| p != c).map(|p| counts[c][p]).sum();
        let fp: u64 = (0..NUM_CLASSES).filter(|&t| t != c).map(|t| counts[t][c]).sum();
        let den = 2 * tp + fp + fn_;
        if den > 0 {
            sum += 2.0 * tp as f64 / den as f64;
        }
    }
    sum / NUM_CLASSES as f64
}

pub fn random_counts(rng: &mut XorShift64Star) -> [[u64; NUM_CLASSES]; NUM_CLASSES] {
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let sparse = rng.below(3) == 0;
    for row in counts.iter_mut() {
        for v in row.iter_mut() {
            *v = if sparse && rng.below(2) == 0 { 0 } else { rng.below(50) as u64 };
        }
    }
    counts[0][0] += 1;
    counts
}

pub fn matrices(parts: &[Vec<f64>]) -> Vec<ScoreMatrix<f64>> {
    parts.iter().map(|p| ScoreMatrix::new(p.clone()).unwrap()).collect()
}

/// Up to 5 members and 100 samples. Half the ensembles (when `allow_ties`)
/// use coarse rows full of exact ties.
pub fn random_ensemble(rng: &mut XorShift64Star, allow_ties: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let members = 1 + rng.below(5);
    let samples = 1 + rng.below(100);
    let coarse = allow_ties && rng.below(2) == 0;
    let parts = (0..members).map(|_| probability_rows(rng, samples, coarse)).collect();
    let reliabilities = (0..members).map(|_| rng.next_f64()).collect();
    (parts, reliabilities)
}

/// Big-endian IDX encoding written out by hand, independent of the crate's writer.
pub fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

pub fn random_idx_pair(rng: &mut XorShift64Star) -> (Vec<u8>, Vec<u8>, usize, usize, Vec<u8>, Vec<u8>) {
    let count = rng.below(20);
    let rows = 1 + rng.below(6);
    let cols = 1 + rng.below(6);
    let pixels: Vec<u8> = (0..count * rows * cols).map(|_| rng.below(256) as u8).collect();
    let labels: Vec<u8> = (0..count).map(|_| rng.below(NUM_CLASSES) as u8).collect();
    let images = encode_idx(0x803, &[count as u32, rows as u32, cols as u32], &pixels);
    let label_bytes = encode_idx(0x801, &[count as u32], &labels);
    (images, label_bytes, rows, cols, pixels, labels)
}

/// Parse `n` hand-encoded random files and compare field by field, then
/// serialize back and compare bytes.
pub fn idx_round_trips(n: usize, seed: u64) -> Result<(), String> {
    use swe_core::data::{parse_idx_images, parse_idx_labels};
    let mut rng = XorShift64Star::new(seed);
    for case in 0..n {
        let (ib, lb, rows, cols, pixels, labels) = random_idx_pair(&mut rng);
        let imgs = parse_idx_images(&ib).map_err(|e| format!("case {case}: {e}"))?;
        let lbls = parse_idx_labels(&lb).map_err(|e| format!("case {case}: {e}"))?;
        if (imgs.rows, imgs.cols, imgs.count, &imgs.pixels) != (rows, cols, labels.len(), &pixels) {
            return Err(format!("case {case}: image fields differ"));
        }
        if lbls.labels != labels || lbls.count != labels.len() {
            return Err(format!("case {case}: label fields differ"));
        }
        if imgs.to_bytes() != ib || lbls.to_bytes() != lb {
            return Err(format!("case {case}: re-encoding differs"));
        }
    }
    Ok(())
}

/// Every documented `DataError` case, each paired with whether the crate
/// rejected it with the expected variant.
pub fn idx_rejections() -> Vec<(&'static str, bool)> {
    use swe_core::data::{
        load_mnist, make_splits, parse_idx_images, parse_idx_labels, BatchIterator, DataError, Dataset, Split,
        SplitSpec,
    };
    let mut out = Vec::new();
    let good_images = encode_idx(0x803, &[2, 2, 2], &[0; 8]);
    let good_labels = encode_idx(0x801, &[2], &[3, 7]);

    out.push((
        "wrong magic (images)",
        matches!(parse_idx_images(&good_labels), Err(DataError::WrongMagic { expected: 0x803, found: 0x801 })),
    ));
    out.push((
        "wrong magic (labels)",
        matches!(parse_idx_labels(&good_images), Err(DataError::WrongMagic { expected: 0x801, found: 0x803 })),
    ));
    out.push(("truncated magic", matches!(parse_idx_images(&[0, 0]), Err(DataError::TruncatedFile { .. }))));
    out.push((
        "truncated header",
        matches!(parse_idx_images(&good_images[..10]), Err(DataError::TruncatedFile { .. })),
    ));
    out.push((
        "truncated payload (images)",
        matches!(
            parse_idx_images(&good_images[..good_images.len() - 1]),
            Err(DataError::TruncatedFile { expected: 24, actual: 23 })
        ),
    ));
    out.push((
        "truncated payload (labels)",
        matches!(parse_idx_labels(&good_labels[..9]), Err(DataError::TruncatedFile { expected: 10, actual: 9 })),
    ));
    let mut long = good_labels.clone();
    long.push(0);
    out.push(("trailing bytes", matches!(parse_idx_labels(&long), Err(DataError::TrailingBytes { .. }))));
    out.push((
        "label out of range",
        matches!(
            parse_idx_labels(&encode_idx(0x801, &[3], &[1, 10, 2])),
            Err(DataError::LabelOutOfRange { index: 1, label: 10 })
        ),
    ));

    let imgs = parse_idx_images(&good_images).unwrap();
    let lbls = parse_idx_labels(&good_labels).unwrap();
    let three = parse_idx_labels(&encode_idx(0x801, &[3], &[0, 1, 2])).unwrap();
    let spec = SplitSpec { train_count: 1, validation_count: 1, test_count: 1, seed: 0 };
    out.push((
        "image/label count mismatch",
        matches!(make_splits::<f64>(&imgs, &three, &imgs, &lbls, &spec), Err(DataError::CountMismatch { .. })),
    ));
    let big = SplitSpec { train_count: 2, ..spec };
    out.push((
        "split larger than file",
        matches!(make_splits::<f64>(&imgs, &lbls, &imgs, &lbls, &big), Err(DataError::SpecTooLarge { .. })),
    ));
    let other = parse_idx_images(&encode_idx(0x803, &[2, 1, 4], &[0; 8])).unwrap();
    out.push((
        "train/test dimension mismatch",
        matches!(make_splits::<f64>(&imgs, &lbls, &other, &lbls, &spec), Err(DataError::DimensionMismatch { .. })),
    ));
    let missing = std::env::temp_dir().join("swe-no-such-dir-7f3a");
    out.push(("missing file", matches!(load_mnist::<f64>(&missing, &spec), Err(DataError::Io { .. }))));
    let ds = Dataset::new(vec![0.0f64; 2], vec![1, 2], [1, 1, 1], Split::Train).unwrap();
    out.push(("zero batch size", matches!(BatchIterator::new(&ds, 0, 0), Err(DataError::ZeroBatchSize))));
    out
}
