#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regex::Regex;
use swe_core::data::{RawIdxImages, RawIdxLabels};
use swe_core::rng::XorShift64Star;

pub fn swe() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swe"));
    cmd.env_remove("SWE_DATA_DIR").env("RUST_LOG", "off");
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("swe binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// 28×28 digits whose label is drawn as a bright horizontal band, with noise.
fn images(n: usize, seed: u64) -> (RawIdxImages, RawIdxLabels) {
    let mut rng = XorShift64Star::new(seed);
    let mut pixels = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 10) as u8;
        let top = 3 + 2 * label as usize;
        for r in 0..28 {
            for _ in 0..28 {
                let band = (top..top + 3).contains(&r);
                let noise = rng.below(60) as u8;
                pixels.push(if band { 255 - noise } else { noise });
            }
        }
        labels.push(label);
    }
    (RawIdxImages::new(28, 28, pixels), RawIdxLabels::new(labels))
}

/// Writes the four MNIST file names with `train` and `test` synthetic samples.
pub fn synthetic_mnist(dir: &Path, train: usize, test: usize) {
    let (ti, tl) = images(train, 1);
    let (si, sl) = images(test, 2);
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("train-images-idx3-ubyte"), ti.to_bytes()).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), tl.to_bytes()).unwrap();
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), si.to_bytes()).unwrap();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), sl.to_bytes()).unwrap();
}

pub fn real_mnist_dir() -> PathBuf {
    match std::env::var_os("SWE_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    }
}

/// Replace every decimal number with `#.#` and `tmp` with `<tmp>`.
pub fn mask(text: &str, tmp: &Path) -> String {
    let floats = Regex::new(r"-?\d+\.\d+(e-?\d+)?").unwrap();
    let text = text.replace(tmp.to_str().unwrap(), "<tmp>");
    floats.replace_all(&text, "#.#").into_owned()
}

/// Compare against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}
