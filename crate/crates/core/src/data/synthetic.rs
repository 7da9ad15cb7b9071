use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Two isotropic Gaussian classes in the plane: label 0 around `mean_a`,
/// label 1 around `mean_b`. The box is the empirical range padded by `3 * sigma`.
pub fn make_gaussian_2d<T: Scalar>(
    n_per_class: usize,
    mean_a: [f64; 2],
    mean_b: [f64; 2],
    sigma: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be positive".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = rng::seeded(seed);
    let mut data = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (label, mean) in [mean_a, mean_b].into_iter().enumerate() {
        for _ in 0..n_per_class {
            for m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(T::lit(m + sigma * z));
            }
            labels.push(label);
        }
    }
    let pad = T::lit(3.0 * sigma);
    let mut lower = vec![T::infinity(); 2];
    let mut upper = vec![T::neg_infinity(); 2];
    for row in data.chunks_exact(2) {
        for j in 0..2 {
            lower[j] = lower[j].min(row[j]);
            upper[j] = upper[j].max(row[j]);
        }
    }
    for j in 0..2 {
        lower[j] -= pad;
        upper[j] += pad;
    }
    Dataset::new(Matrix::new(2 * n_per_class, 2, data)?, labels, lower, upper, vec![0, 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let a: Dataset<f64> = make_gaussian_2d(20, [0.0, 0.0], [5.0, 5.0], 0.5, 11).unwrap();
        let b: Dataset<f64> = make_gaussian_2d(20, [0.0, 0.0], [5.0, 5.0], 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c: Dataset<f64> = make_gaussian_2d(20, [0.0, 0.0], [5.0, 5.0], 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn one_per_class_gives_two_points() {
        let ds: Dataset<f32> = make_gaussian_2d(1, [0.0, 0.0], [1.0, 1.0], 1.0, 0).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn bounds_are_padded_range() {
        let ds: Dataset<f64> = make_gaussian_2d(50, [0.0, 0.0], [5.0, 5.0], 0.5, 1).unwrap();
        let min0 = ds.features().iter_rows().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        assert!((ds.lower_bound()[0] - (min0 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_gaussian_2d::<f64>(0, [0.0; 2], [1.0; 2], 1.0, 0).is_err());
        assert!(make_gaussian_2d::<f64>(3, [0.0; 2], [1.0; 2], 0.0, 0).is_err());
    }
}
