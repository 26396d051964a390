mod common;

use common::{encode_idx, idx_rejections, idx_round_trips};
use proptest::prelude::*;
use swe_core::data::{load_mnist, parse_idx_images, parse_idx_labels, RawIdxImages, RawIdxLabels, SplitSpec};

#[test]
fn hand_encoded_files_round_trip() {
    idx_round_trips(500, 17).unwrap();
}

#[test]
fn every_documented_error_is_raised() {
    let failed: Vec<_> = idx_rejections().into_iter().filter(|(_, ok)| !ok).map(|(name, _)| name).collect();
    assert!(failed.is_empty(), "not rejected as documented: {failed:?}");
}

#[test]
fn files_on_disk_load_into_splits() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..30 * 9).map(|i| (i % 256) as u8).collect();
    let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
    let imgs = RawIdxImages::new(3, 3, pixels);
    let lbls = RawIdxLabels::new(labels);
    for (name, bytes) in [
        ("train-images-idx3-ubyte", imgs.to_bytes()),
        ("train-labels-idx1-ubyte", lbls.to_bytes()),
        ("t10k-images-idx3-ubyte", imgs.to_bytes()),
        ("t10k-labels-idx1-ubyte", lbls.to_bytes()),
    ] {
        std::fs::write(dir.path().join(name), bytes).unwrap();
    }
    let spec = SplitSpec { train_count: 20, validation_count: 10, test_count: 30, seed: 5 };
    let s = load_mnist::<f32>(dir.path(), &spec).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (20, 10, 30));
    assert_eq!(s.train.item_shape(), [1, 3, 3]);
    // whole test file keeps file order
    assert_eq!(s.test.source_indices(), (0..30).collect::<Vec<_>>());
    for (i, &src) in s.train.source_indices().iter().enumerate() {
        let want: Vec<f32> = imgs.image(src).iter().map(|&p| p as f32 / 255.0).collect();
        assert_eq!(s.train.image(i), want.as_slice());
        assert_eq!(s.train.labels()[i], lbls.labels[src]);
    }
}

proptest! {
    #[test]
    fn images_survive_encoding(rows in 1usize..8, cols in 1usize..8, count in 0usize..12, fill in any::<u8>()) {
        let pixels: Vec<u8> = (0..rows * cols * count).map(|i| fill.wrapping_add(i as u8)).collect();
        let bytes = encode_idx(0x803, &[count as u32, rows as u32, cols as u32], &pixels);
        let parsed = parse_idx_images(&bytes).unwrap();
        prop_assert_eq!(parsed.pixels, pixels);
        prop_assert_eq!(parsed.count, count);
    }

    #[test]
    fn any_cut_of_a_label_file_is_rejected(labels in prop::collection::vec(0u8..10, 1..40), cut in 1usize..40) {
        let bytes = encode_idx(0x801, &[labels.len() as u32], &labels);
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(parse_idx_labels(&bytes[..bytes.len() - cut]).is_err());
    }
}
