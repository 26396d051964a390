mod common;

use swe_core::data::{load_mnist, SplitSpec};
use swe_core::ensemble::{measure_reliability, score_dataset, EVAL_CHUNK};
use swe_core::metrics::macro_f1_of;
use swe_core::network::{train, ArchSpec, SgdConfig, Variant};

#[test]
fn mnist_files_have_the_standard_shape() {
    let dir = common::mnist_dir();
    let s = load_mnist::<f32>(&dir, &SplitSpec::full(0))
        .unwrap_or_else(|e| panic!("MNIST not found under {}: {e}", dir.display()));
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (50_000, 10_000, 10_000));
    assert_eq!(s.test.item_shape(), [1, 28, 28]);
    let mut seen = [0usize; 10];
    s.test.labels().iter().for_each(|&l| seen[l as usize] += 1);
    assert!(seen.iter().all(|&c| c > 800), "{seen:?}");
}

#[test]
fn lenet_a_learns_the_desk_subset() {
    let splits = load_mnist::<f32>(&common::mnist_dir(), &SplitSpec::desk(0)).expect("MNIST data");
    let sgd = SgdConfig { learning_rate: 0.05, seed: 42, ..SgdConfig::default() };
    let net = train(&ArchSpec::new(Variant::LeNetA), &splits.train, &sgd).unwrap();
    let predicted = score_dataset(&net, &splits.test, EVAL_CHUNK).unwrap().argmax();
    let f1 = macro_f1_of(&predicted, splits.test.labels()).unwrap();
    assert!(f1 >= 0.90, "test macro-F1 {f1}");
    let r = measure_reliability(&net, &splits.validation).unwrap();
    assert!(r >= 0.90, "validation macro-F1 {r}");
}
