//! MNIST IDX container: big-endian header, row-major `u8` payload.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const MNIST_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedPayload {
            what,
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Decodes an image/label IDX pair. Pixels are divided by 255 and the box is `[0,1]^d`.
pub fn parse_mnist_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let magic = be_u32(images, 0, "images header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::WrongMagic {
            what: "images",
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let magic = be_u32(labels, 0, "labels header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::WrongMagic {
            what: "labels",
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_images = be_u32(images, 4, "images header")? as usize;
    let rows = be_u32(images, 8, "images header")? as usize;
    let cols = be_u32(images, 12, "images header")? as usize;
    let n_labels = be_u32(labels, 4, "labels header")? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let d = rows * cols;
    let pixels = &images[16..];
    if pixels.len() != n_images * d {
        return Err(Error::TruncatedPayload {
            what: "images",
            expected: 16 + n_images * d,
            found: images.len(),
        });
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n_labels {
        return Err(Error::TruncatedPayload {
            what: "labels",
            expected: 8 + n_labels,
            found: labels.len(),
        });
    }
    let scale = T::lit(255.0);
    let data: Vec<T> = pixels.iter().map(|&p| T::from_u8(p).unwrap() / scale).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= MNIST_CLASSES) {
        return Err(Error::InvalidLabel {
            label: bad,
            limit: MNIST_CLASSES,
        });
    }
    Dataset::new(
        Matrix::new(n_images, d, data)?,
        labels,
        vec![T::zero(); d],
        vec![T::one(); d],
        (0..MNIST_CLASSES as u32).collect(),
    )
}

pub fn load_mnist_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_mnist_idx(&images, &labels)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_pair(pixels: &[Vec<u8>], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(pixels.len() as u32).to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        for p in pixels {
            assert_eq!(p.len(), 784);
            img.extend_from_slice(p);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn parses_two_images() {
        let mut a = vec![0u8; 784];
        a[0] = 255;
        a[1] = 51;
        let b = vec![128u8; 784];
        let (img, lab) = idx_pair(&[a, b], &[4, 0]);
        let ds: Dataset<f64> = parse_mnist_idx(&img, &lab).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 784));
        assert_eq!(ds.features().get(0, 0), 1.0);
        assert_eq!(ds.features().get(0, 1), 0.2);
        assert_eq!(ds.labels(), &[4, 0]);
        assert!(ds.features().as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(ds.lower_bound(), &[0.0; 784][..]);
    }

    #[test]
    fn swapped_files_report_wrong_magic() {
        let (img, lab) = idx_pair(&[vec![0; 784]], &[1]);
        let err = parse_mnist_idx::<f32>(&img, &img).unwrap_err();
        assert!(matches!(err, Error::WrongMagic { what: "labels", found: 0x803, .. }));
        assert!(err.to_string().contains("wrong magic"));
        let err = parse_mnist_idx::<f32>(&lab, &lab).unwrap_err();
        assert!(matches!(err, Error::WrongMagic { what: "images", .. }));
    }

    #[test]
    fn truncated_and_mismatched_are_distinct() {
        let (mut img, lab) = idx_pair(&[vec![0; 784], vec![0; 784]], &[1, 2]);
        img.pop();
        assert!(matches!(
            parse_mnist_idx::<f64>(&img, &lab),
            Err(Error::TruncatedPayload { what: "images", .. })
        ));
        let (img, _) = idx_pair(&[vec![0; 784], vec![0; 784]], &[1, 2]);
        let (_, lab1) = idx_pair(&[vec![0; 784]], &[1]);
        assert!(matches!(
            parse_mnist_idx::<f64>(&img, &lab1),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
        assert!(matches!(
            parse_mnist_idx::<f64>(&img[..10], &lab1),
            Err(Error::TruncatedPayload { .. })
        ));
    }
}
