#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;

use legendretron::data::{load_libsvm, LabeledDataset};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn dataset(name: &str) -> LabeledDataset {
    load_libsvm(data_path(name)).expect("bundled dataset parses")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Writes straight to stderr so the line shows even when the harness
/// captures test output.
pub fn report(criterion: usize, title: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2} [{status}] {title}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// One Gaussian cloud per class on `p` features, well separated.
pub fn blobs(classes: usize, per_class: usize, p: usize, spread: f64, seed: u64) -> LabeledDataset {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let centre: Vec<f64> = (0..p).map(|j| if j % classes == c { 4.0 } else { 0.0 }).collect();
        for _ in 0..per_class {
            let x: Vec<f64> = centre
                .iter()
                .map(|m| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + spread * e
                })
                .collect();
            rows.push(x);
            labels.push(c + 1);
        }
    }
    LabeledDataset::from_dense(&rows, labels, classes).expect("valid blobs")
}

/// Uncaptured detail line under a criterion.
pub fn note(line: &str) {
    let _ = std::io::stderr().write_all(format!("    {line}\n").as_bytes());
}
