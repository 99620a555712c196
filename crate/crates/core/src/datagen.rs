//! Synthetic long-tailed datasets, CSV ingestion, stratified splitting and
//! stratified k-fold cross-validation.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`. Gaussian draws
//! use `rand_distr::StandardNormal` and shuffles use `SliceRandom::shuffle`,
//! so a seed fixes every output bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ClassCounts;

/// Feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.ncols()
    }

    /// Samples per class; classes without samples report 0.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Counts as [`ClassCounts`]; fails if a class is empty.
    pub fn checked_class_counts(&self) -> Result<ClassCounts> {
        ClassCounts::new(self.class_counts())
    }

    /// Rows at `indices`, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Row indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Writes the `f0,...,f{d-1},label` CSV schema.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dims()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer.write_record(&header).map_err(csv_io)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(label.to_string());
            writer.write_record(&record).map_err(csv_io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidDataset(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// `count_k = round(n_max · ρ^(-k/(K-1)))`.
    Exponential,
    /// First `ceil(K/2)` classes at `n_max`, the rest at `round(n_max/ρ)`.
    Step,
}

/// Parameters of the synthetic long-tailed generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongTailProfile {
    pub num_classes: usize,
    pub n_max: usize,
    pub imbalance_ratio: f64,
    pub decay: Decay,
    pub dims: usize,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl LongTailProfile {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.n_max < self.num_classes {
            return fail(format!(
                "n_max ({}) must be at least the number of classes ({})",
                self.n_max, self.num_classes
            ));
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return fail(format!(
                "imbalance ratio must be >= 1, got {}",
                self.imbalance_ratio
            ));
        }
        if self.dims < 1 {
            return fail("dims must be >= 1".into());
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return fail(format!(
                "cluster separation must be > 0, got {}",
                self.cluster_separation
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma must be > 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    /// Per-class sample counts implied by the decay profile.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let k_last = (self.num_classes - 1) as f64;
        let n_max = self.n_max as f64;
        let counts: Vec<usize> = match self.decay {
            Decay::Exponential => (0..self.num_classes)
                .map(|k| (n_max * self.imbalance_ratio.powf(-(k as f64) / k_last)).round() as usize)
                .collect(),
            Decay::Step => {
                let head = self.num_classes.div_ceil(2);
                let tail = (n_max / self.imbalance_ratio).round() as usize;
                (0..self.num_classes)
                    .map(|k| if k < head { self.n_max } else { tail })
                    .collect()
            }
        };
        let min = counts.iter().copied().min().unwrap_or(0);
        if min < 1 {
            return Err(Error::RatioTooLarge { count: min });
        }
        Ok(counts)
    }
}

/// Draws class centers uniformly in a cube, rejecting any center closer than
/// `separation` to an earlier one. The cube grows by 10% after every 1000
/// consecutive rejections.
fn place_centers(rng: &mut ChaCha8Rng, k: usize, dims: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut half_width = separation * (k as f64).powf(1.0 / dims as f64);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut rejections = 0;
    while centers.len() < k {
        let candidate: Vec<f64> = (0..dims)
            .map(|_| rng.random_range(-half_width..half_width))
            .collect();
        let far_enough = centers.iter().all(|c| {
            let d2: f64 = c
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= separation
        });
        if far_enough {
            centers.push(candidate);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections == 1000 {
                half_width *= 1.1;
                rejections = 0;
            }
        }
    }
    centers
}

/// Generates an isotropic Gaussian cluster per class with long-tailed sizes.
/// Rows are ordered by class.
pub fn generate(profile: &LongTailProfile) -> Result<LabeledDataset> {
    let counts = profile.class_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let centers = place_centers(
        &mut rng,
        profile.num_classes,
        profile.dims,
        profile.cluster_separation,
    );
    let total: usize = counts.iter().sum();
    let mut features = Array2::zeros((total, profile.dims));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (class, (&count, center)) in counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            for (j, &c) in center.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                features[(row, j)] = c + profile.noise_sigma * noise;
            }
            labels.push(class);
            row += 1;
        }
    }
    LabeledDataset::new(features, labels, profile.num_classes)
}

/// Reads the `f0,...,f{d-1},label` schema. The number of classes is
/// `max label + 1`; classes without rows are allowed here.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    let width = header.len();
    if width == 0 || header.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Csv {
            line: 1,
            message: "empty file".into(),
        });
    }
    if header.get(width - 1).map(str::trim) != Some("label") {
        return Err(Error::Csv {
            line: 1,
            message: "last column must be `label`".into(),
        });
    }
    let dims = width - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Csv {
                line,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        for field in record.iter().take(dims) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line,
                message: format!("invalid feature value `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    message: format!("non-finite feature value `{field}`"),
                });
            }
            values.push(v);
        }
        let raw = record[dims].trim();
        let label: usize = raw.parse().map_err(|_| Error::Csv {
            line,
            message: format!("label `{raw}` is not a non-negative integer"),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Csv {
            line: 1,
            message: "empty file: no data rows".into(),
        });
    }
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let features = Array2::from_shape_vec((labels.len(), dims), values)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    LabeledDataset::new(features, labels, num_classes)
}

/// Row indices of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, shuffles the class's rows and sends
/// `round(train_fraction · n_k)`, clamped to `[1, n_k - 1]`, of them to train.
pub fn stratified_split_indices(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let groups = ds.indices_by_class();
    if let Some((class, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::ClassTooSmall {
            class,
            count: g.len(),
            needed: 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = SplitIndices {
        train: Vec::new(),
        test: Vec::new(),
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let n = group.len();
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        split.train.extend_from_slice(&group[..n_train]);
        split.test.extend_from_slice(&group[n_train..]);
    }
    Ok(split)
}

/// Stratified train/test split.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = stratified_split_indices(ds, train_fraction, seed)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.test)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold: each class's shuffled rows are cut into `k` chunks
/// whose sizes differ by at most one; fold `i` validates on chunk `i` of
/// every class.
pub fn kfold_indices(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<FoldIndices>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let groups = ds.indices_by_class();
    if let Some((class, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < k) {
        return Err(Error::ClassTooSmall {
            class,
            count: g.len(),
            needed: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chunks: Vec<Vec<Vec<usize>>> = Vec::with_capacity(groups.len());
    for mut group in groups {
        group.shuffle(&mut rng);
        let (base, extra) = (group.len() / k, group.len() % k);
        let mut start = 0;
        let mut class_chunks = Vec::with_capacity(k);
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            class_chunks.push(group[start..start + size].to_vec());
            start += size;
        }
        chunks.push(class_chunks);
    }
    Ok((0..k)
        .map(|fold| {
            let mut train = Vec::new();
            let mut validation = Vec::new();
            for class_chunks in &chunks {
                for (i, chunk) in class_chunks.iter().enumerate() {
                    if i == fold {
                        validation.extend_from_slice(chunk);
                    } else {
                        train.extend_from_slice(chunk);
                    }
                }
            }
            FoldIndices { train, validation }
        })
        .collect())
}

/// Stratified k-fold as `(train, validation)` dataset pairs.
pub fn kfold(
    ds: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(LabeledDataset, LabeledDataset)>> {
    Ok(kfold_indices(ds, k, seed)?
        .into_iter()
        .map(|f| (ds.subset(&f.train), ds.subset(&f.validation)))
        .collect())
}
