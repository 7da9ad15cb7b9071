//! Gaussian kernel density estimate of one class:
//!
//! `P(x) = (1/N) sum_i exp(-|x - x_i|^2 / h)`
//!
//! with `h` a plain divisor of the squared distance (not `2 sigma^2`) and,
//! by default, the mean Euclidean distance over all distinct unordered pairs
//! of bank rows.

use rand::seq::index;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::rng;
use crate::scalar::Scalar;

/// Above this many pairs the bandwidth is estimated on a seeded row subsample.
pub const MAX_EXACT_PAIRS: usize = 2_000_000;
/// Rows kept when subsampling.
pub const SUBSAMPLE_ROWS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BandwidthRule {
    /// Average squared distances instead of distances (sensitivity option).
    pub squared: bool,
    /// Seed for the subsample drawn on very large banks.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth<T> {
    pub value: T,
    /// True when the value came from a row subsample.
    pub subsampled: bool,
}

fn mean_pairwise<T: Scalar>(bank: &Matrix<T>, rows: &[usize], squared: bool) -> T {
    let mut total = T::zero();
    let mut pairs = 0usize;
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let sq = sq_dist(bank.row(i), bank.row(j));
            total += if squared { sq } else { sq.sqrt() };
            pairs += 1;
        }
    }
    total / T::from_count(pairs)
}

/// Mean distance over the `N(N-1)/2` distinct pairs of bank rows.
pub fn compute_bandwidth<T: Scalar>(bank: &Matrix<T>, rule: BandwidthRule) -> Result<Bandwidth<T>> {
    let n = bank.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            available: n,
        });
    }
    if !bank.all_finite() {
        return Err(Error::NonFinite("bandwidth bank"));
    }
    let pairs = n * (n - 1) / 2;
    let (rows, subsampled) = if pairs > MAX_EXACT_PAIRS {
        let mut r = rng::seeded(rule.seed);
        let mut picked = index::sample(&mut r, n, SUBSAMPLE_ROWS).into_vec();
        picked.sort_unstable();
        (picked, true)
    } else {
        ((0..n).collect(), false)
    };
    let value = mean_pairwise(bank, &rows, rule.squared);
    if !(value > T::zero()) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(Bandwidth { value, subsampled })
}

/// Density estimate over a fixed sample bank. Rows are kept in sorted order,
/// so results do not depend on the order the bank was supplied in.
#[derive(Debug, Clone)]
pub struct KdeEstimate<T> {
    bank: Matrix<T>,
    bandwidth: T,
    target_class: usize,
    subsampled: bool,
}

impl<T: Scalar> KdeEstimate<T> {
    pub fn new(bank: Matrix<T>, bandwidth: T, target_class: usize) -> Result<Self> {
        if bank.rows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                available: bank.rows(),
            });
        }
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(Error::DegenerateBandwidth);
        }
        let mut order: Vec<usize> = (0..bank.rows()).collect();
        order.sort_by(|&i, &j| {
            bank.row(i)
                .iter()
                .zip(bank.row(j))
                .map(|(a, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(Self {
            bank: bank.select_rows(&order),
            bandwidth,
            target_class,
            subsampled: false,
        })
    }

    /// Bank = rows of `target_class` in `data`, bandwidth from `rule`.
    pub fn fit(data: &Dataset<T>, target_class: usize, rule: BandwidthRule) -> Result<Self> {
        let bank = data.class_rows(target_class);
        let bw = compute_bandwidth(&bank, rule)?;
        let mut est = Self::new(bank, bw.value, target_class)?;
        est.subsampled = bw.subsampled;
        Ok(est)
    }

    pub fn bank(&self) -> &Matrix<T> {
        &self.bank
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn target_class(&self) -> usize {
        self.target_class
    }

    pub fn bandwidth_subsampled(&self) -> bool {
        self.subsampled
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.bank.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.bank.cols(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density query"));
        }
        Ok(())
    }

    pub fn likelihood(&self, x: &[T]) -> Result<T> {
        self.check(x)?;
        let total: T = self
            .bank
            .iter_rows()
            .map(|r| (-sq_dist(x, r) / self.bandwidth).exp())
            .sum();
        Ok(total / T::from_count(self.bank.rows()))
    }

    /// `grad_x P = (1/N) sum_i exp(-|x - x_i|^2/h) (-2/h) (x - x_i)`
    pub fn likelihood_grad(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.likelihood_and_grad(x)?.1)
    }

    pub fn likelihood_and_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        self.check(x)?;
        let mut value = T::zero();
        let mut grad = vec![T::zero(); x.len()];
        let scale = -T::lit(2.0) / self.bandwidth;
        for r in self.bank.iter_rows() {
            let k = (-sq_dist(x, r) / self.bandwidth).exp();
            value += k;
            let coef = k * scale;
            for ((g, &xi), &ri) in grad.iter_mut().zip(x).zip(r) {
                *g += coef * (xi - ri);
            }
        }
        let inv_n = T::one() / T::from_count(self.bank.rows());
        for g in &mut grad {
            *g *= inv_n;
        }
        Ok((value * inv_n, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank1(values: &[f64]) -> Matrix<f64> {
        let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn bandwidth_single_pair() {
        let bw = compute_bandwidth(&bank1(&[0.0, 2.0]), BandwidthRule::default()).unwrap();
        assert_eq!(bw.value, 2.0);
        assert!(!bw.subsampled);
    }

    #[test]
    fn bandwidth_three_points() {
        // pairs: |0-1| = 1, |0-2| = 2, |1-2| = 1
        let bw = compute_bandwidth(&bank1(&[0.0, 1.0, 2.0]), BandwidthRule::default()).unwrap();
        assert!((bw.value - 4.0 / 3.0).abs() < 1e-15);
        let sq = compute_bandwidth(
            &bank1(&[0.0, 1.0, 2.0]),
            BandwidthRule {
                squared: true,
                seed: 0,
            },
        )
        .unwrap();
        assert!((sq.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_errors() {
        assert!(matches!(
            compute_bandwidth(&bank1(&[1.0]), BandwidthRule::default()),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            compute_bandwidth(&bank1(&[3.0, 3.0, 3.0]), BandwidthRule::default()),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn likelihood_symmetric_pair() {
        let est = KdeEstimate::new(bank1(&[-1.0, 1.0]), 1.0, 0).unwrap();
        let p = est.likelihood(&[0.0]).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_at_bank_point() {
        // bank {v, v'} at distance D = 3, h = 2: (1/2)(1 + exp(-9/2))
        let est = KdeEstimate::new(bank1(&[0.0, 3.0]), 2.0, 0).unwrap();
        let p = est.likelihood(&[0.0]).unwrap();
        assert!((p - 0.5 * (1.0 + (-4.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn gradient_hand_value() {
        // (1/2)(-2)[e^{-2.25}(1.5) + e^{-0.25}(-0.5)]
        let est = KdeEstimate::new(bank1(&[-1.0, 1.0]), 1.0, 0).unwrap();
        let g = est.likelihood_grad(&[0.5]).unwrap();
        let expected = -(1.5 * (-2.25f64).exp() - 0.5 * (-0.25f64).exp());
        assert!((g[0] - expected).abs() < 1e-15);
        assert!((g[0] - 0.2311).abs() < 1e-3);
    }

    #[test]
    fn gradient_zero_at_symmetric_centroid() {
        let bank = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]]).unwrap();
        let est = KdeEstimate::new(bank, 1.5, 0).unwrap();
        assert_eq!(est.likelihood_grad(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn decays_far_away() {
        let est = KdeEstimate::new(bank1(&[-1.0, 1.0]), 1.0, 0).unwrap();
        let mut prev = est.likelihood(&[1.0]).unwrap();
        for t in 1..40 {
            let p = est.likelihood(&[1.0 + t as f64 * 0.25]).unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 1e-40);
    }

    #[test]
    fn query_errors() {
        let est = KdeEstimate::new(bank1(&[-1.0, 1.0]), 1.0, 0).unwrap();
        assert!(matches!(est.likelihood(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(est.likelihood(&[f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn large_bank_is_subsampled_deterministically() {
        let rows: Vec<[f32; 1]> = (0..2100).map(|i| [i as f32 / 2100.0]).collect();
        let bank = Matrix::from_rows(&rows).unwrap();
        let rule = BandwidthRule {
            squared: false,
            seed: 5,
        };
        let a = compute_bandwidth(&bank, rule).unwrap();
        let b = compute_bandwidth(&bank, rule).unwrap();
        assert!(a.subsampled);
        assert_eq!(a, b);
        // uniform on [0,1]: mean |u - v| = 1/3
        assert!((a.value - 1.0 / 3.0).abs() < 0.02);
    }
}
