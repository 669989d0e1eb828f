//! Desk-scale datasets: synthetic generators, CSV and IDX ingestion, splits
//! and train-side normalization.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::Matrix;
use crate::nn::Batch;
use crate::seed;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("dataset must contain at least one example"));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::input(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::input(format!("label {bad} outside 0..{class_count}")));
        }
        if inputs.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::input("dataset inputs must be finite"));
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false for a constructed dataset; kept for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Dataset::new(
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<T> {
        Batch::new(
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
        .expect("rows of a valid dataset form a valid batch")
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            inputs: self.inputs.map(|v| U::lit(v.as_f64())),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

fn from_points<T: Scalar>(points: Vec<[f64; 2]>, labels: Vec<usize>, k: usize) -> Result<Dataset<T>> {
    let data = points.iter().flatten().map(|&v| T::lit(v)).collect();
    Dataset::new(Matrix::from_vec(points.len(), 2, data)?, labels, k)
}

fn noise(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::input(format!("noise scale {sigma} must be non-negative")));
    }
    Normal::new(0.0, sigma).map_err(|e| Error::input(e.to_string()))
}

/// Two interleaved half circles, `n / 2` points each.
///
/// Class 0 lies on `(cos φ, sin φ)`, class 1 on `(1 - cos φ, 0.5 - sin φ)`,
/// with `φ ~ U[0, π]`, plus isotropic Gaussian noise.
pub fn gen_two_moons<T: Scalar>(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::input(format!("two moons needs an even n >= 2, got {n}")));
    }
    let normal = noise(noise_sigma)?;
    let mut rng = seed::rng(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for _ in 0..n / 2 {
            let phi = rng.random_range(0.0..=std::f64::consts::PI);
            let (x, y) = if class == 0 {
                (phi.cos(), phi.sin())
            } else {
                (1.0 - phi.cos(), 0.5 - phi.sin())
            };
            let (dx, dy) = if noise_sigma > 0.0 {
                (normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push([x + dx, y + dy]);
            labels.push(class);
        }
    }
    from_points(points, labels, 2)
}

/// Start of the spiral arms as a fraction of the full radius; keeps the two
/// arms apart at the centre.
const SPIRAL_START: f64 = 0.05;

/// Two-arm spiral, `n / 2` points per arm.
///
/// A point at position `u ~ U[SPIRAL_START, 1]` along an arm sits at radius
/// `u` and angle `2π · turns · u`; the second arm is rotated by `π`.
pub fn gen_spirals<T: Scalar>(n: usize, turns: f64, noise_sigma: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::input(format!("spirals needs an even n >= 2, got {n}")));
    }
    if !(turns > 0.0 && turns.is_finite()) {
        return Err(Error::input(format!("turns must be positive, got {turns}")));
    }
    let normal = noise(noise_sigma)?;
    let mut rng = seed::rng(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let offset = class as f64 * std::f64::consts::PI;
        for _ in 0..n / 2 {
            let u = rng.random_range(SPIRAL_START..=1.0);
            let angle = 2.0 * std::f64::consts::PI * turns * u + offset;
            let (dx, dy) = if noise_sigma > 0.0 {
                (normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push([u * angle.cos() + dx, u * angle.sin() + dy]);
            labels.push(class);
        }
    }
    from_points(points, labels, 2)
}

/// `k` isotropic Gaussian clusters with centres drawn uniformly in `[-5, 5]²`.
/// Points are assigned round-robin, so class sizes differ by at most one.
pub fn gen_blobs<T: Scalar>(n: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset<T>> {
    if k == 0 || n < k {
        return Err(Error::input(format!("blobs needs 1 <= k <= n, got n={n}, k={k}")));
    }
    let normal = noise(spread)?;
    let mut rng = seed::rng(seed);
    let centers: Vec<[f64; 2]> = (0..k)
        .map(|_| [rng.random_range(-5.0..=5.0), rng.random_range(-5.0..=5.0)])
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let (dx, dy) = if spread > 0.0 {
            (normal.sample(&mut rng), normal.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        points.push([centers[c][0] + dx, centers[c][1] + dy]);
        labels.push(c);
    }
    from_points(points, labels, k)
}

/// Writes `f0,...,f{d-1},label` with shortest round-trip float formatting.
pub fn save_csv<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_storage(path, e))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer.write_record(&header).map_err(|e| csv_storage(path, e))?;
    for (row, y) in dataset.inputs.iter_rows().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(ToString::to_string).collect();
        record.push(y.to_string());
        writer.write_record(&record).map_err(|e| csv_storage(path, e))?;
    }
    writer.flush().map_err(|e| Error::storage(path, e))
}

fn csv_storage(path: &Path, err: csv::Error) -> Error {
    Error::storage(path, std::io::Error::other(err))
}

/// Reads a numeric CSV with a header row. `label_column` names the class column;
/// every other column is a feature. The class count is `max label + 1`.
pub fn load_csv<T: Scalar>(path: &Path, label_column: &str) -> Result<Dataset<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    parse_csv(&text, label_column)
}

pub fn parse_csv<T: Scalar>(text: &str, label_column: &str) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format("header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::format("header", "CSV is empty"));
    }
    let label_idx = names
        .iter()
        .position(|n| n == label_column)
        .ok_or_else(|| Error::format(format!("column {label_column}"), "missing label column"))?;
    let width = names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format("rows", e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::format(
                format!("row {row}"),
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let y = cell.parse::<usize>().map_err(|_| {
                    Error::format(format!("row {row}, column {}", names[col]), format!("bad label `{cell}`"))
                })?;
                labels.push(y);
            } else {
                let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::format(format!("row {row}, column {}", names[col]), format!("non-numeric cell `{cell}`"))
                })?;
                values.push(T::lit(v));
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::format("rows", "CSV has no data rows"));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let inputs = Matrix::from_vec(labels.len(), width - 1, values)?;
    Dataset::new(inputs, labels, k)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, field: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(field, "file too short for header"))
}

/// Reads an IDX image/label pair. Pixels become `value / 255`, one flattened
/// row-major image per example.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = fs::read(images_path).map_err(|e| Error::storage(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::storage(labels_path, e))?;
    parse_idx(&images, &labels)
}

pub fn parse_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let magic = be_u32(images, 0, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format("images magic", format!("expected 0x00000803, found {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "labels magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format("labels magic", format!("expected 0x00000801, found {magic:#010x}")));
    }
    let count = be_u32(images, 4, "image count")? as usize;
    let rows = be_u32(images, 8, "image rows")? as usize;
    let cols = be_u32(images, 12, "image cols")? as usize;
    let label_count = be_u32(labels, 4, "label count")? as usize;
    if count != label_count {
        return Err(Error::format(
            "label count",
            format!("{count} images but {label_count} labels"),
        ));
    }
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() != count * pixels {
        return Err(Error::format(
            "image payload",
            format!("expected {} bytes, found {}", count * pixels, body.len()),
        ));
    }
    let label_body = &labels[8..];
    if label_body.len() != count {
        return Err(Error::format(
            "label payload",
            format!("expected {count} bytes, found {}", label_body.len()),
        ));
    }
    let scale = T::lit(255.0);
    let values = body.iter().map(|&b| T::from_u8(b).expect("u8 fits") / scale).collect();
    let labels: Vec<usize> = label_body.iter().map(|&b| b as usize).collect();
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(Matrix::from_vec(count, pixels, values)?, labels, k)
}

/// Seeded permutation split. The train side gets `round(train_fraction * n)` examples.
pub fn split<T: Scalar>(dataset: &Dataset<T>, train_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::input(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::input(format!(
            "split of {n} examples at {train_fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (a, b) = order.split_at(n_train);
    Ok((dataset.subset(a)?, dataset.subset(b)?))
}

/// Per-feature statistics of the training side.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    /// Population standard deviation.
    pub std: Vec<T>,
}

impl<T: Scalar> NormStats<T> {
    pub fn compute(dataset: &Dataset<T>) -> Self {
        let d = dataset.dim();
        let n = T::from_usize_lossy(dataset.len());
        let mut mean = vec![T::zero(); d];
        for row in dataset.inputs.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![T::zero(); d];
        for row in dataset.inputs.iter_rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        NormStats { mean, std }
    }

    /// `(x - mean) / std`; zero-variance features map to 0.
    pub fn apply(&self, dataset: &Dataset<T>) -> Result<Dataset<T>> {
        if dataset.dim() != self.mean.len() {
            return Err(Error::input("feature count differs from normalization stats"));
        }
        let mut inputs = dataset.inputs.clone();
        for i in 0..inputs.rows() {
            for ((v, &m), &s) in inputs.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if s > T::zero() { (*v - m) / s } else { T::zero() };
            }
        }
        Dataset::new(inputs, dataset.labels.clone(), dataset.class_count)
    }
}

pub fn normalize<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Dataset<T>, Dataset<T>, NormStats<T>)> {
    let stats = NormStats::compute(train);
    Ok((stats.apply(train)?, stats.apply(test)?, stats))
}
