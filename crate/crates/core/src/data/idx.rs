//! IDX container parsing and serialization.
//!
//! ```text
//! images: u32 BE 0x00000803 | u32 BE count | u32 BE rows | u32 BE cols | count·rows·cols bytes
//! labels: u32 BE 0x00000801 | u32 BE count | count bytes
//! ```
//! Pixel bytes are row-major per image, images stored back to back.

use std::fs;
use std::path::Path;

use super::DataError;
use crate::NUM_CLASSES;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const IMAGES_HEADER: usize = 16;
const LABELS_HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIdxImages {
    pub magic: u32,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIdxLabels {
    pub magic: u32,
    pub count: usize,
    pub labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedFile { expected: 4, actual: bytes.len() });
    }
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(DataError::WrongMagic { expected, found });
    }
    Ok(())
}

fn check_length(actual: usize, expected: usize) -> Result<(), DataError> {
    use std::cmp::Ordering::*;
    match actual.cmp(&expected) {
        Less => Err(DataError::TruncatedFile { expected, actual }),
        Greater => Err(DataError::TrailingBytes { expected, actual }),
        Equal => Ok(()),
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawIdxImages, DataError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    if bytes.len() < IMAGES_HEADER {
        return Err(DataError::TruncatedFile { expected: IMAGES_HEADER, actual: bytes.len() });
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(DataError::TruncatedFile { expected: usize::MAX, actual: bytes.len() })?;
    check_length(bytes.len(), IMAGES_HEADER + payload)?;
    Ok(RawIdxImages {
        magic: IMAGES_MAGIC,
        count,
        rows,
        cols,
        pixels: bytes[IMAGES_HEADER..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<RawIdxLabels, DataError> {
    check_magic(bytes, LABELS_MAGIC)?;
    if bytes.len() < LABELS_HEADER {
        return Err(DataError::TruncatedFile { expected: LABELS_HEADER, actual: bytes.len() });
    }
    let count = be_u32(bytes, 4) as usize;
    check_length(bytes.len(), LABELS_HEADER + count)?;
    let labels = bytes[LABELS_HEADER..].to_vec();
    if let Some((index, &label)) =
        labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES)
    {
        return Err(DataError::LabelOutOfRange { index, label });
    }
    Ok(RawIdxLabels { magic: LABELS_MAGIC, count, labels })
}

impl RawIdxImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Self {
        let per = rows * cols;
        let count = if per == 0 { 0 } else { pixels.len() / per };
        Self { magic: IMAGES_MAGIC, count, rows, cols, pixels }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMAGES_HEADER + self.pixels.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&(self.rows as u32).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        parse_idx_images(&read_file(path)?)
    }
}

impl RawIdxLabels {
    pub fn new(labels: Vec<u8>) -> Self {
        Self { magic: LABELS_MAGIC, count: labels.len(), labels }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LABELS_HEADER + self.labels.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        parse_idx_labels(&read_file(path)?)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(words: &[u32]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    #[test]
    fn single_blank_image() {
        let mut bytes = header(&[0x803, 1, 28, 28]);
        bytes.extend(std::iter::repeat(0u8).take(784));
        let raw = parse_idx_images(&bytes).unwrap();
        assert_eq!((raw.count, raw.rows, raw.cols), (1, 28, 28));
        assert!(raw.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn label_magic_on_image_path_is_rejected() {
        let mut bytes = header(&[0x801, 1, 28, 28]);
        bytes.extend(std::iter::repeat(0u8).take(784));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::WrongMagic { expected: 0x803, found: 0x801 })
        ));
        assert!(matches!(
            parse_idx_labels(&header(&[0x803, 0])),
            Err(DataError::WrongMagic { expected: 0x801, found: 0x803 })
        ));
    }

    #[test]
    fn images_shorter_than_header_or_payload() {
        assert!(matches!(parse_idx_images(&[0, 0]), Err(DataError::TruncatedFile { .. })));
        assert!(matches!(
            parse_idx_images(&header(&[0x803, 1, 28])),
            Err(DataError::TruncatedFile { expected: 16, actual: 12 })
        ));
        let mut bytes = header(&[0x803, 2, 2, 2]);
        bytes.extend([1, 2, 3, 4, 5]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::TruncatedFile { expected: 24, actual: 21 })
        ));
    }

    #[test]
    fn labels_decode() {
        let mut bytes = header(&[0x801, 3]);
        bytes.extend([0, 5, 9]);
        assert_eq!(parse_idx_labels(&bytes).unwrap().labels, vec![0, 5, 9]);
    }

    #[test]
    fn labels_truncated() {
        let mut bytes = header(&[0x801, 3]);
        bytes.extend([0, 5]);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(DataError::TruncatedFile { expected: 11, actual: 10 })
        ));
        assert!(matches!(parse_idx_labels(&header(&[0x801])), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = header(&[0x801, 1]);
        bytes.push(12);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(DataError::LabelOutOfRange { index: 0, label: 12 })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = header(&[0x801, 1]);
        bytes.extend([1, 2]);
        assert!(matches!(parse_idx_labels(&bytes), Err(DataError::TrailingBytes { .. })));
    }

    proptest! {
        #[test]
        fn image_round_trip(count in 0usize..5, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut rng = crate::rng::XorShift64Star::new(seed);
            let pixels: Vec<u8> = (0..count * rows * cols).map(|_| rng.next_u64() as u8).collect();
            let bytes = RawIdxImages { magic: IMAGES_MAGIC, count, rows, cols, pixels }.to_bytes();
            prop_assert_eq!(parse_idx_images(&bytes).unwrap().to_bytes(), bytes);
        }

        #[test]
        fn label_round_trip(labels in proptest::collection::vec(0u8..10, 0..64)) {
            let bytes = RawIdxLabels::new(labels).to_bytes();
            prop_assert_eq!(parse_idx_labels(&bytes).unwrap().to_bytes(), bytes);
        }
    }
}
