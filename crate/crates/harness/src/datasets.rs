use std::path::{Path, PathBuf};

use poison_core::data::{load_cifar10_binary, load_mnist_idx};
use poison_core::Dataset;

use crate::presets::DataContext;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceStatus {
    pub name: &'static str,
    pub files: Vec<PathBuf>,
    /// `Ok(rows)` when every file decoded, otherwise what went wrong.
    pub outcome: Result<usize, String>,
}

fn check(name: &'static str, files: Vec<PathBuf>, load: impl FnOnce(&[PathBuf]) -> poison_core::Result<Dataset<f32>>) -> SourceStatus {
    let missing: Vec<String> = files.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    let outcome = if missing.is_empty() {
        load(&files).map(|d| d.n()).map_err(|e| e.to_string())
    } else {
        Err(format!("missing {}", missing.join(", ")))
    };
    SourceStatus { name, files, outcome }
}

/// Verifies that the requested sources exist under `dir` and decode.
pub fn fetch_check(dir: &Path, mnist: bool, cifar: bool) -> Vec<SourceStatus> {
    let ctx = DataContext::new(dir);
    let mut out = Vec::new();
    if mnist {
        out.push(check("mnist", ctx.mnist_paths(), |p| load_mnist_idx(&p[0], &p[1])));
    }
    if cifar {
        out.push(check("cifar-10", ctx.cifar_paths(), load_cifar10_binary));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = fetch_check(dir.path(), true, true);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|s| s.outcome.as_ref().unwrap_err().starts_with("missing")));
    }

    #[test]
    fn reports_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("mnist")).unwrap();
        for f in crate::presets::MNIST_FILES {
            std::fs::write(dir.path().join("mnist").join(f), b"junk").unwrap();
        }
        let s = fetch_check(dir.path(), true, false);
        assert!(s[0].outcome.is_err());
        assert!(!s[0].outcome.as_ref().unwrap_err().starts_with("missing"));
    }
}
