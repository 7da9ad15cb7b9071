//! Labeled datasets with box bounds, loaders and seeded splitting.

mod cifar;
mod idx;
mod synthetic;

use std::io::Write;

use rand::seq::index;

pub use cifar::{load_cifar10_binary, parse_cifar10_batch, CIFAR_CLASSES, CIFAR_RECORD_LEN};
pub use idx::{load_mnist_idx, parse_mnist_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::make_gaussian_2d;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Feature matrix, internal labels `0..C-1` and per-feature box bounds.
///
/// `class_map[l]` is the source class identifier (e.g. the MNIST digit) of
/// internal label `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    lower_bound: Vec<T>,
    upper_bound: Vec<T>,
    class_map: Vec<u32>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<usize>,
        lower_bound: Vec<T>,
        upper_bound: Vec<T>,
        class_map: Vec<u32>,
    ) -> Result<Self> {
        let (n, d) = (features.rows(), features.cols());
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if d == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        for b in [&lower_bound, &upper_bound] {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.len(),
                });
            }
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("features"));
        }
        if let Some(j) = (0..d).find(|&j| !(lower_bound[j] <= upper_bound[j])) {
            return Err(Error::InvalidConfig(format!(
                "lower bound exceeds upper bound at feature {j}"
            )));
        }
        for row in features.iter_rows() {
            if let Some(j) = (0..d).find(|&j| row[j] < lower_bound[j] || row[j] > upper_bound[j]) {
                return Err(Error::OutOfBounds { feature: j });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_map.len()) {
            return Err(Error::InvalidLabel {
                label: bad,
                limit: class_map.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            lower_bound,
            upper_bound,
            class_map,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn lower_bound(&self) -> &[T] {
        &self.lower_bound
    }

    pub fn upper_bound(&self) -> &[T] {
        &self.upper_bound
    }

    pub fn class_map(&self) -> &[u32] {
        &self.class_map
    }

    /// Number of label values the dataset knows about (not all need be present).
    pub fn num_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Number of label values that actually occur.
    pub fn distinct_labels(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn indices_of_class(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    /// Rows of one class as a matrix (the KDE bank for that class).
    pub fn class_rows(&self, label: usize) -> Matrix<T> {
        self.features.select_rows(&self.indices_of_class(label))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.lower_bound.clone(),
            self.upper_bound.clone(),
            self.class_map.clone(),
        )
    }

    /// Binary `{-1, +1}` view: internal label 1 is `+1`, label 0 is `-1`.
    pub fn signed_labels(&self) -> Result<Vec<T>> {
        if self.num_classes() != 2 {
            return Err(Error::Unsupported(format!(
                "signed labels need a binary dataset, found {} classes",
                self.num_classes()
            )));
        }
        Ok(self
            .labels
            .iter()
            .map(|&l| if l == 1 { T::one() } else { -T::one() })
            .collect())
    }

    /// Returns `self ∪ {(points[i], labels[i])}`; the original rows keep their order.
    pub fn append(&self, points: &Matrix<T>, labels: &[usize]) -> Result<Self> {
        if points.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.rows(),
                found: labels.len(),
            });
        }
        if points.rows() == 0 {
            return Ok(self.clone());
        }
        let mut all = self.labels.clone();
        all.extend_from_slice(labels);
        Self::new(
            self.features.vstack(points)?,
            all,
            self.lower_bound.clone(),
            self.upper_bound.clone(),
            self.class_map.clone(),
        )
    }

    /// Writes `label,f0,...,f{d-1}` CSV; labels are the source class identifiers.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((0..self.d()).map(|j| format!("f{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, &l) in self.features.iter_rows().zip(&self.labels) {
            write!(out, "{}", self.class_map[l])?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |v: T| U::lit(v.as_f64());
        Dataset {
            features: self.features.map(conv),
            labels: self.labels.clone(),
            lower_bound: self.lower_bound.iter().map(|&v| conv(v)).collect(),
            upper_bound: self.upper_bound.iter().map(|&v| conv(v)).collect(),
            class_map: self.class_map.clone(),
        }
    }
}

/// Sizes, classes and seed for carving train/validation/test sets out of a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Source class identifiers; their position becomes the internal label.
    pub classes: Vec<u32>,
    pub seed: u64,
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("split counts must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("split needs at least one class".into()));
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::InvalidConfig("split classes must be distinct".into()));
        }
        Ok(())
    }
}

/// Three disjoint subsets plus the source row of every member.
#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Keeps the requested classes, relabels them `0..C-1` in the order given by
/// `spec.classes`, and draws the three sets uniformly without replacement
/// from the union (not stratified per class).
pub fn filter_and_split<T: Scalar>(source: &Dataset<T>, spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    let remap: Vec<Option<usize>> = source
        .class_map()
        .iter()
        .map(|id| spec.classes.iter().position(|c| c == id))
        .collect();
    let pool: Vec<usize> = (0..source.n())
        .filter(|&i| remap[source.labels[i]].is_some())
        .collect();
    let needed = spec.n_train + spec.n_val + spec.n_test;
    if pool.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            available: pool.len(),
        });
    }
    let mut rng = rng::seeded(spec.seed);
    let picked: Vec<usize> = index::sample(&mut rng, pool.len(), needed)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    let (train_idx, rest) = picked.split_at(spec.n_train);
    let (val_idx, test_idx) = rest.split_at(spec.n_val);

    let build = |idx: &[usize]| -> Result<Dataset<T>> {
        Dataset::new(
            source.features.select_rows(idx),
            idx.iter()
                .map(|&i| remap[source.labels[i]].expect("filtered to requested classes"))
                .collect(),
            source.lower_bound.clone(),
            source.upper_bound.clone(),
            spec.classes.clone(),
        )
    };
    Ok(Split {
        train: build(train_idx)?,
        val: build(val_idx)?,
        test: build(test_idx)?,
        train_indices: train_idx.to_vec(),
        val_indices: val_idx.to_vec(),
        test_indices: test_idx.to_vec(),
    })
}
