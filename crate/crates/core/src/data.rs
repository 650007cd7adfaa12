//! LIBSVM datasets, train/test splits, symmetric label noise and
//! projected-categorical sampling.
//!
//! Rows stay sparse throughout; feature indices are zero-based in memory and
//! one-based in the text format. Raw labels are mapped to classes `1..=C` by
//! sorting the distinct raw values numerically, so the mapping does not
//! depend on row order.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::ProjectedSimplexPoint;

/// A sparse feature row with strictly increasing zero-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a row from `(zero-based index, value)` pairs; indices must be
    /// strictly increasing.
    pub fn new(pairs: Vec<(usize, f64)>) -> Result<Self> {
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if let Some(&last) = indices.last() {
                if i as u32 <= last {
                    return Err(Error::Domain(format!(
                        "sparse indices must increase ({} after {})",
                        i, last
                    )));
                }
            }
            indices.push(i as u32);
            values.push(v);
        }
        Ok(Self { indices, values })
    }

    /// Keeps the non-zero entries of a dense row.
    pub fn from_dense(x: &[f64]) -> Self {
        let (indices, values) = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        Self { indices, values }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for (i, v) in self.iter() {
            if i < dim {
                x[i] = v;
            }
        }
        x
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// One past the largest stored index.
    pub fn dim_hint(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }
}

/// Rows, labels `1..=C`, and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: Vec<SparseVector>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    /// `raw_labels[c - 1]` is the raw label of class `c`.
    raw_labels: Vec<f64>,
    /// Index of each row in the dataset it was first parsed or built as.
    row_ids: Vec<usize>,
}

/// JSON-friendly summary of a dataset.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub label_map: Vec<LabelMapping>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LabelMapping {
    pub class: usize,
    pub raw: f64,
}

impl LabeledDataset {
    /// Builds a dataset whose classes are already `1..=n_classes`.
    pub fn new(
        rows: Vec<SparseVector>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        if n_classes < 1 {
            return Err(Error::TooFewClasses {
                min: 1,
                found: n_classes,
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l == 0 || l > n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        if let Some(r) = rows.iter().find(|r| r.dim_hint() > n_features) {
            return Err(Error::Dimension {
                expected: n_features,
                found: r.dim_hint(),
            });
        }
        let n = rows.len();
        Ok(Self {
            rows,
            labels,
            n_features,
            n_classes,
            raw_labels: (1..=n_classes).map(|c| c as f64).collect(),
            row_ids: (0..n).collect(),
        })
    }

    /// Dense rows convenience constructor.
    pub fn from_dense(x: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let p = x.first().map_or(0, Vec::len);
        if let Some(r) = x.iter().find(|r| r.len() != p) {
            return Err(Error::Dimension {
                expected: p,
                found: r.len(),
            });
        }
        Self::new(
            x.iter().map(|r| SparseVector::from_dense(r)).collect(),
            labels,
            p,
            n_classes,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn raw_labels(&self) -> &[f64] {
        &self.raw_labels
    }

    /// Declares more classes than the labels reveal (e.g. a test split that
    /// misses a class). Shrinking below an observed label is an error.
    pub fn with_classes(mut self, n_classes: usize) -> Result<Self> {
        if let Some(&label) = self.labels.iter().find(|&&l| l > n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        while self.raw_labels.len() < n_classes {
            let next = self.raw_labels.last().map_or(1.0, |v| v + 1.0);
            self.raw_labels.push(next);
        }
        self.raw_labels.truncate(n_classes);
        self.n_classes = n_classes;
        Ok(self)
    }

    /// Replaces the labels (same length, same class range).
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows.len() {
            return Err(Error::Dimension {
                expected: self.rows.len(),
                found: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l == 0 || l > self.n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.n_classes,
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Rows at `positions`, in that order, keeping their row ids.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            rows: positions.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            raw_labels: self.raw_labels.clone(),
            row_ids: positions.iter().map(|&i| self.row_ids[i]).collect(),
        })
    }

    /// Applies symmetric label noise, seeding each row from its row id.
    pub fn with_symmetric_noise(self, spec: &NoiseSpec) -> Result<Self> {
        let labels = inject_symmetric_noise_by_id(&self.labels, &self.row_ids, self.n_classes, spec)?;
        Ok(Self { labels, ..self })
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n_rows: self.len(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            label_map: self
                .raw_labels
                .iter()
                .enumerate()
                .map(|(i, &raw)| LabelMapping { class: i + 1, raw })
                .collect(),
        }
    }

    /// Number of rows per class, indexed by `class - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }
}

/// Options for [`parse_libsvm_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LibsvmOptions {
    /// Feature count; defaults to the largest index seen.
    pub n_features: Option<usize>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses `<label> <index>:<value> ...` lines. Blank lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    parse_libsvm_with(reader, LibsvmOptions::default())
}

pub fn parse_libsvm_str(text: &str) -> Result<LabeledDataset> {
    parse_libsvm(text.as_bytes())
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_libsvm(std::io::BufReader::new(file))
}

pub fn parse_libsvm_with<R: BufRead>(reader: R, opts: LibsvmOptions) -> Result<LabeledDataset> {
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = tokens_with_columns(&line);
        let Some((col, label_tok)) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, col, format!("invalid label `{label_tok}`")))?;
        let mut pairs = Vec::new();
        let mut last: Option<usize> = None;
        for (col, tok) in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, col, format!("expected index:value, found `{tok}`")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| parse_err(lineno, col, format!("invalid feature index `{idx_s}`")))?;
            if idx == 0 {
                return Err(parse_err(lineno, col, "feature indices start at 1"));
            }
            let val: f64 = val_s
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    parse_err(lineno, col + idx_s.len() + 1, format!("invalid feature value `{val_s}`"))
                })?;
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(parse_err(
                        lineno,
                        col,
                        format!("feature index {idx} does not increase (previous {prev})"),
                    ));
                }
            }
            if let Some(p) = opts.n_features {
                if idx > p {
                    return Err(parse_err(
                        lineno,
                        col,
                        format!("feature index {idx} exceeds declared feature count {p}"),
                    ));
                }
            }
            last = Some(idx);
            max_index = max_index.max(idx);
            pairs.push((idx - 1, val));
        }
        rows.push(SparseVector::new(pairs)?);
        raw.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut distinct = raw.clone();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    let labels = raw
        .iter()
        .map(|v| distinct.partition_point(|d| d < v) + 1)
        .collect();
    let n = rows.len();
    Ok(LabeledDataset {
        rows,
        labels,
        n_features: opts.n_features.unwrap_or(max_index),
        n_classes: distinct.len(),
        raw_labels: distinct,
        row_ids: (0..n).collect(),
    })
}

/// Whitespace-separated tokens with their one-based character columns.
fn tokens_with_columns(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            return None;
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        let tok = &trimmed[..end];
        let col = line[..offset].chars().count() + 1;
        offset += end;
        rest = &trimmed[end..];
        Some((col, tok))
    })
}

/// Writes the dataset back out, using the raw labels. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_libsvm<W: Write>(data: &LabeledDataset, mut out: W) -> Result<()> {
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        write!(out, "{}", data.raw_labels[label - 1])?;
        for (i, v) in row.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn to_libsvm_string(data: &LabeledDataset) -> String {
    let mut buf = Vec::new();
    write_libsvm(data, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("libsvm output is ASCII")
}

/// Seeded split: the first `⌊N · train_frac⌋` rows of a random permutation
/// train, the rest test.
pub fn split(data: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let n = data.len();
    let n_train = (n as f64 * train_frac).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "train fraction {train_frac} of {n} rows leaves one side empty"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.subset(&perm[..n_train])?, data.subset(&perm[n_train..])?))
}

/// Corruption probability and seed for symmetric label noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    eta: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("noise rate {eta} outside [0, 1]")));
        }
        Ok(Self { eta, seed })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn row_rng(seed: u64, row_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row_id as u64);
    rng
}

/// Keeps each label with probability `1 − η`, otherwise replaces it by one
/// of the other `C − 1` classes uniformly. Row `i` draws from its own stream
/// derived from `(seed, i)`.
pub fn inject_symmetric_noise(labels: &[usize], n_classes: usize, spec: &NoiseSpec) -> Result<Vec<usize>> {
    let ids: Vec<usize> = (0..labels.len()).collect();
    inject_symmetric_noise_by_id(labels, &ids, n_classes, spec)
}

/// As [`inject_symmetric_noise`] with explicit row ids, so a subset is
/// corrupted exactly as the same rows of the full dataset would be.
pub fn inject_symmetric_noise_by_id(
    labels: &[usize],
    row_ids: &[usize],
    n_classes: usize,
    spec: &NoiseSpec,
) -> Result<Vec<usize>> {
    if labels.len() != row_ids.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            found: row_ids.len(),
        });
    }
    if n_classes < 2 && spec.eta > 0.0 {
        return Err(Error::TooFewClasses {
            min: 2,
            found: n_classes,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l == 0 || l > n_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: n_classes,
        });
    }
    if spec.eta == 0.0 {
        return Ok(labels.to_vec());
    }
    Ok(labels
        .iter()
        .zip(row_ids)
        .map(|(&y, &id)| {
            let mut rng = row_rng(spec.seed, id);
            if rng.random::<f64>() < spec.eta {
                let r = rng.random_range(1..n_classes);
                if r >= y {
                    r + 1
                } else {
                    r
                }
            } else {
                y
            }
        })
        .collect())
}

/// Draws `n` samples from the projected categorical distribution: a vector
/// in `{0,1}^{C-1}` with at most one entry set, entry `i` with probability
/// `p̃_i` and all zeros with probability `1 − Σ p̃_i`.
pub fn sample_projected_categorical(p: &ProjectedSimplexPoint, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = p.as_slice();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut sample = vec![0u8; probs.len()];
            let mut cum = 0.0;
            for (i, &pi) in probs.iter().enumerate() {
                cum += pi;
                if u < cum {
                    sample[i] = 1;
                    break;
                }
            }
            sample
        })
        .collect()
}

/// Per-feature centring and scaling fitted on one dataset and applied to
/// others. Output rows are dense in the fitted features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledDataset) -> Self {
        let p = data.n_features();
        let n = data.len() as f64;
        let mut mean = vec![0.0; p];
        for row in data.rows() {
            for (i, v) in row.iter() {
                mean[i] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in data.rows() {
            let x = row.to_dense(p);
            for j in 0..p {
                var[j] += (x[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.n_features() > self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                found: data.n_features(),
            });
        }
        let p = self.mean.len();
        let rows = data
            .rows()
            .iter()
            .map(|r| {
                let x: Vec<f64> = r
                    .to_dense(p)
                    .iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect();
                SparseVector::from_dense(&x)
            })
            .collect();
        Ok(LabeledDataset {
            rows,
            n_features: p,
            ..data.clone()
        })
    }
}
