//! CIFAR-10 binary batches: repeated `[label u8][3072 bytes of R, G, B planes]`.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const CIFAR_RECORD_LEN: usize = 3073;
const CIFAR_PIXELS: usize = 3072;

/// Class names indexed by label byte.
pub const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

fn decode_records<T: Scalar>(bytes: &[u8], data: &mut Vec<T>, labels: &mut Vec<usize>) -> Result<()> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::TruncatedRecord {
            len: bytes.len(),
            record_len: CIFAR_RECORD_LEN,
        });
    }
    let scale = T::lit(255.0);
    for rec in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES.len() {
            return Err(Error::InvalidLabel {
                label,
                limit: CIFAR_CLASSES.len(),
            });
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&p| T::from_u8(p).unwrap() / scale));
    }
    Ok(())
}

/// Decodes one in-memory batch.
pub fn parse_cifar10_batch<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    decode_records(bytes, &mut data, &mut labels)?;
    finish(data, labels)
}

/// Loads and concatenates batch files in the given order.
pub fn load_cifar10_binary<T: Scalar, P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset<T>> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in batch_paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        decode_records(&bytes, &mut data, &mut labels)?;
    }
    finish(data, labels)
}

fn finish<T: Scalar>(data: Vec<T>, labels: Vec<usize>) -> Result<Dataset<T>> {
    let n = labels.len();
    Dataset::new(
        Matrix::new(n, CIFAR_PIXELS, data)?,
        labels,
        vec![T::zero(); CIFAR_PIXELS],
        vec![T::one(); CIFAR_PIXELS],
        (0..CIFAR_CLASSES.len() as u32).collect(),
    )
}
