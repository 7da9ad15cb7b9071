use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{train, LossKind, TrainConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GridOracleSpec<T> {
    /// Points per axis.
    pub resolution: usize,
    pub lower_bound: [T; 2],
    pub upper_bound: [T; 2],
    pub retrain_tol: T,
}

impl<T: Scalar> GridOracleSpec<T> {
    pub fn over(data: &Dataset<T>, resolution: usize) -> Result<Self> {
        if data.d() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: data.d(),
            });
        }
        Ok(Self {
            resolution,
            lower_bound: [data.lower_bound()[0], data.lower_bound()[1]],
            upper_bound: [data.upper_bound()[0], data.upper_bound()[1]],
            retrain_tol: T::lit(1e-8),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
        }
        if (0..2).any(|j| !(self.lower_bound[j] <= self.upper_bound[j])) {
            return Err(Error::InvalidConfig("grid bounds out of order".into()));
        }
        if !(self.retrain_tol > T::zero()) {
            return Err(Error::InvalidConfig("retrain tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Evenly spaced coordinates along axis `j`, endpoints included.
    pub fn axis(&self, j: usize) -> Vec<T> {
        let (l, u) = (self.lower_bound[j], self.upper_bound[j]);
        let last = T::from_count(self.resolution - 1);
        (0..self.resolution)
            .map(|i| (l + (u - l) * T::from_count(i) / last).min(u))
            .collect()
    }
}

/// Scalar field on a 2-D grid; `values.get(i, j)` is the value at
/// `(x0[i], x1[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSurface<T> {
    pub x0: Vec<T>,
    pub x1: Vec<T>,
    pub values: Matrix<T>,
}

impl<T: Scalar> GridSurface<T> {
    /// Fills a surface by evaluating `f` at every cell, in parallel.
    pub fn evaluate<F>(x0: Vec<T>, x1: Vec<T>, f: F) -> Result<Self>
    where
        F: Fn(T, T) -> Result<T> + Sync,
    {
        let cols = x1.len();
        let cells: Vec<T> = (0..x0.len() * cols)
            .into_par_iter()
            .map(|c| f(x0[c / cols], x1[c % cols]))
            .collect::<Result<_>>()?;
        let values = Matrix::new(x0.len(), cols, cells)?;
        Ok(Self { x0, x1, values })
    }

    /// Cell with the largest value; ties to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for i in 0..self.values.rows() {
            for j in 0..self.values.cols() {
                if self.values.get(i, j) > self.values.get(best.0, best.1) {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn max(&self) -> T {
        let (i, j) = self.argmax();
        self.values.get(i, j)
    }

    /// `x0,x1,loss`, one row per cell in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x0,x1,loss")?;
        for (i, &a) in self.x0.iter().enumerate() {
            for (j, &b) in self.x1.iter().enumerate() {
                writeln!(out, "{a},{b},{}", self.values.get(i, j))?;
            }
        }
        Ok(())
    }
}

fn compare_rows<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Rows sorted by (features, label) so retraining does not depend on input order.
fn canonical<T: Scalar>(data: &Dataset<T>) -> Result<Dataset<T>> {
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&i, &j| {
        compare_rows(data.features().row(i), data.features().row(j))
            .then(data.labels()[i].cmp(&data.labels()[j]))
    });
    data.subset(&order)
}

/// Validation loss of the classifier retrained on `D_tr ∪ (g, y_p)` for
/// every grid point `g`.
pub fn bilevel_grid_oracle<T: Scalar>(
    d_tr: &Dataset<T>,
    d_val: &Dataset<T>,
    y_p: usize,
    spec: &GridOracleSpec<T>,
    loss: LossKind,
    reg_c: T,
) -> Result<GridSurface<T>> {
    spec.validate()?;
    for ds in [d_tr, d_val] {
        if ds.d() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: ds.d(),
            });
        }
    }
    if y_p >= d_tr.num_classes() {
        return Err(Error::InvalidLabel {
            label: y_p,
            limit: d_tr.num_classes(),
        });
    }
    let base = canonical(d_tr)?;
    let mut cfg = TrainConfig::new(loss, reg_c);
    cfg.tol = spec.retrain_tol;
    GridSurface::evaluate(spec.axis(0), spec.axis(1), |a, b| {
        let point = Matrix::new(1, 2, vec![a, b])?;
        let poisoned = base.append(&point, &[y_p])?;
        let (model, _) = train(&poisoned, &cfg)?;
        model.mean_loss(d_val)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_gaussian_2d;

    #[test]
    fn resolution_two_gives_four_cells() {
        let ds: Dataset<f64> = make_gaussian_2d(10, [-1.0, -1.0], [1.0, 1.0], 0.6, 1).unwrap();
        let spec = GridOracleSpec::over(&ds, 2).unwrap();
        let s = bilevel_grid_oracle(&ds, &ds, 0, &spec, LossKind::Logistic, 1.0).unwrap();
        assert_eq!((s.values.rows(), s.values.cols()), (2, 2));
        assert_eq!(s.x0, vec![ds.lower_bound()[0], ds.upper_bound()[0]]);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 5);
    }

    #[test]
    fn rejects_bad_specs() {
        let ds: Dataset<f64> = make_gaussian_2d(10, [-1.0, -1.0], [1.0, 1.0], 0.6, 1).unwrap();
        let mut spec = GridOracleSpec::over(&ds, 1).unwrap();
        assert!(bilevel_grid_oracle(&ds, &ds, 0, &spec, LossKind::Hinge, 1.0).is_err());
        spec.resolution = 3;
        assert!(bilevel_grid_oracle(&ds, &ds, 2, &spec, LossKind::Hinge, 1.0).is_err());
    }
}
