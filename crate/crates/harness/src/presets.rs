use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use poison_core::data::{load_cifar10_binary, load_mnist_idx, make_gaussian_2d};
use poison_core::{filter_and_split, Dataset, Split, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DATA_DIR_ENV: &str = "POISON_DATA_DIR";

pub const MNIST_FILES: [&str; 2] = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"];
pub const CIFAR_FILES: [&str; 6] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
    "test_batch.bin",
];

/// The two-Gaussian toy: class 0 around the origin, class 1 around (2.5, 2.5).
pub const GAUSS_MEANS: [[f64; 2]; 2] = [[0.0, 0.0], [2.5, 2.5]];
pub const GAUSS_SIGMA: f64 = 0.6;
pub const GAUSS_PER_CLASS: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "mnist-4v0")]
    Mnist4v0,
    #[serde(rename = "mnist-9v8")]
    Mnist9v8,
    #[serde(rename = "cifar-frogship")]
    CifarFrogShip,
    #[serde(rename = "cifar-horseship")]
    CifarHorseShip,
    #[serde(rename = "mnist-triplet-375")]
    MnistTriplet375,
    #[serde(rename = "mnist-triplet-940")]
    MnistTriplet940,
    #[serde(rename = "gauss2d")]
    Gauss2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Mnist,
    Cifar,
    Gauss,
}

impl Preset {
    pub fn source(self) -> Source {
        match self {
            Preset::CifarFrogShip | Preset::CifarHorseShip => Source::Cifar,
            Preset::Gauss2d => Source::Gauss,
            _ => Source::Mnist,
        }
    }

    /// Source class identifiers; position `i` becomes internal label `i`.
    /// In binary presets the second class is label 1, the positive side of the decision function.
    pub fn classes(self) -> &'static [u32] {
        match self {
            Preset::Mnist4v0 => &[4, 0],
            Preset::Mnist9v8 => &[9, 8],
            Preset::CifarFrogShip => &[6, 8],
            Preset::CifarHorseShip => &[7, 8],
            Preset::MnistTriplet375 => &[3, 7, 5],
            Preset::MnistTriplet940 => &[9, 4, 0],
            Preset::Gauss2d => &[0, 1],
        }
    }

    /// `(n_train, n_val, n_test)`.
    pub fn sizes(self) -> (usize, usize, usize) {
        match self.source() {
            Source::Mnist => (400, 1000, 1000),
            Source::Cifar => (300, 500, 1000),
            Source::Gauss => (60, 60, 200),
        }
    }
}

/// Dataset root plus a cache of decoded sources shared by every run in the process.
#[derive(Debug)]
pub struct DataContext {
    root: PathBuf,
    cache: Mutex<HashMap<Source, Arc<Dataset<f32>>>>,
}

impl DataContext {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// `POISON_DATA_DIR`, falling back to `./data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| "data".into()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mnist_paths(&self) -> Vec<PathBuf> {
        MNIST_FILES.iter().map(|f| self.root.join("mnist").join(f)).collect()
    }

    pub fn cifar_paths(&self) -> Vec<PathBuf> {
        CIFAR_FILES.iter().map(|f| self.root.join("cifar-10-batches-bin").join(f)).collect()
    }

    fn require(paths: &[PathBuf]) -> Result<()> {
        let missing: Vec<String> = paths.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Data(format!("missing data files: {}", missing.join(", "))))
        }
    }

    fn load(&self, source: Source) -> Result<Arc<Dataset<f32>>> {
        let mut cache = self.cache.lock().expect("data cache poisoned");
        if let Some(ds) = cache.get(&source) {
            return Ok(ds.clone());
        }
        let ds = match source {
            Source::Mnist => {
                let p = self.mnist_paths();
                Self::require(&p)?;
                load_mnist_idx(&p[0], &p[1])
            }
            Source::Cifar => {
                let p = self.cifar_paths();
                Self::require(&p)?;
                load_cifar10_binary(&p)
            }
            Source::Gauss => unreachable!("synthetic data is generated per spec"),
        }
        .map_err(|e| HarnessError::Data(e.to_string()))?;
        let ds = Arc::new(ds);
        cache.insert(source, ds.clone());
        Ok(ds)
    }

    /// Train/validation/test split for one repetition. Real images are
    /// filtered in single precision and widened afterwards.
    pub fn split(&self, preset: Preset, data_seed: u64, split_seed: u64) -> Result<Split<f64>> {
        let (n_train, n_val, n_test) = preset.sizes();
        let spec = SplitSpec {
            n_train,
            n_val,
            n_test,
            classes: preset.classes().to_vec(),
            seed: split_seed,
        };
        let split = match preset.source() {
            Source::Gauss => {
                let src: Dataset<f64> =
                    make_gaussian_2d(GAUSS_PER_CLASS, GAUSS_MEANS[0], GAUSS_MEANS[1], GAUSS_SIGMA, data_seed)
                        .map_err(HarnessError::core("generating toy data"))?;
                filter_and_split(&src, &spec)
            }
            source => {
                let src = self.load(source)?;
                filter_and_split(&src, &spec).map(|s| Split {
                    train: s.train.cast(),
                    val: s.val.cast(),
                    test: s.test.cast(),
                    train_indices: s.train_indices,
                    val_indices: s.val_indices,
                    test_indices: s.test_indices,
                })
            }
        };
        split.map_err(|e| HarnessError::Data(format!("{preset:?}: {e}")))
    }
}
