use rand::seq::index;
use rand::Rng;

use crate::batch::{PoisonBatch, PointTelemetry};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// `m` validation samples drawn without replacement, each relabelled with a
/// uniformly random different class. Features are copied untouched.
pub fn label_flip_attack<T: Scalar>(d_val: &Dataset<T>, m: usize, seed: u64) -> Result<PoisonBatch<T>> {
    if m > d_val.n() {
        return Err(Error::InsufficientSamples {
            needed: m,
            available: d_val.n(),
        });
    }
    let classes = d_val.num_classes();
    if classes < 2 {
        return Err(Error::SingleClass(classes));
    }
    let mut r = rng::seeded(seed);
    let picked = index::sample(&mut r, d_val.n(), m).into_vec();
    let mut batch = PoisonBatch::empty(d_val.d());
    for i in picked {
        let truth = d_val.labels()[i];
        let mut flipped = r.gen_range(0..classes - 1);
        if flipped >= truth {
            flipped += 1;
        }
        batch.push(d_val.features().row(i), flipped, truth, PointTelemetry::untouched())?;
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_gaussian_2d;

    #[test]
    fn zero_is_empty_and_too_many_fails() {
        let ds: Dataset<f64> = make_gaussian_2d(5, [0.0, 0.0], [2.0, 2.0], 1.0, 3).unwrap();
        assert!(label_flip_attack(&ds, 0, 1).unwrap().is_empty());
        assert!(label_flip_attack(&ds, 11, 1).is_err());
    }

    #[test]
    fn binary_flip_is_complement_and_bytes_preserved() {
        let ds: Dataset<f64> = make_gaussian_2d(20, [0.0, 0.0], [2.0, 2.0], 1.0, 3).unwrap();
        let batch = label_flip_attack(&ds, 15, 8).unwrap();
        for i in 0..batch.len() {
            assert_eq!(batch.labels[i], 1 - batch.target_classes[i]);
            let row = batch.points.row(i);
            let src = ds
                .features()
                .iter_rows()
                .position(|r| r.iter().zip(row).all(|(a, b)| a.to_bits() == b.to_bits()))
                .expect("point copied from validation set");
            assert_eq!(ds.labels()[src], batch.target_classes[i]);
        }
    }
}
