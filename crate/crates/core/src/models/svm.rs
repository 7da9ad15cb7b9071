//! Linear soft-margin SVM trained in the dual by SMO with second-order
//! working-set selection, on a precomputed linear Gram matrix.
//!
//! Objective: `(1/2)|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))`, bias
//! unregularized (hence the equality constraint `sum_i y_i alpha_i = 0`).

use std::time::Instant;

use crate::linalg::{axpy, dot, Matrix};
use crate::models::TrainReport;
use crate::scalar::Scalar;

/// Dual solution together with the primal weights it induces.
#[derive(Debug, Clone)]
pub struct HingeSolution<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub alpha: Vec<T>,
    pub report: TrainReport<T>,
}

impl<T: Scalar> HingeSolution<T> {
    /// Indices with `0 < alpha < C`, i.e. points sitting on the margin.
    pub fn margin_support(&self, c: T) -> Vec<usize> {
        let eps = c * T::lit(1e-8);
        self.alpha
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a > eps && a < c - eps).then_some(i))
            .collect()
    }
}

/// Linear kernel matrix `K_ij = x_i . x_j`.
pub fn gram<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot(x.row(i), x.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Extends a Gram matrix of `x[..n-1]` by the last row of `x`.
pub fn gram_extend<T: Scalar>(base: &Matrix<T>, x: &Matrix<T>) -> Matrix<T> {
    let n = x.rows();
    debug_assert_eq!(base.rows() + 1, n);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        k.row_mut(i)[..n - 1].copy_from_slice(base.row(i));
    }
    let last = x.row(n - 1);
    for j in 0..n {
        let v = dot(last, x.row(j));
        k.set(n - 1, j, v);
        k.set(j, n - 1, v);
    }
    k
}

const TAU: f64 = 1e-12;
const CHECK_EVERY: usize = 10;

struct Smo<'a, T> {
    k: &'a Matrix<T>,
    y: &'a [T],
    c: T,
    alpha: Vec<T>,
    grad: Vec<T>,
}

impl<'a, T: Scalar> Smo<'a, T> {
    #[inline]
    fn is_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    #[inline]
    fn is_lower(&self, t: usize) -> bool {
        self.alpha[t] <= T::zero()
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> T {
        self.y[i] * self.y[j] * self.k.get(i, j)
    }

    /// Returns the maximal violating pair, or `None` when the KKT violation is below `eps`.
    fn select(&self, eps: T) -> Option<(usize, usize)> {
        let n = self.y.len();
        let one = T::one();
        let mut gmax = T::neg_infinity();
        let mut i_sel = None;
        for t in 0..n {
            if self.y[t] == one {
                if !self.is_upper(t) && -self.grad[t] >= gmax {
                    gmax = -self.grad[t];
                    i_sel = Some(t);
                }
            } else if !self.is_lower(t) && self.grad[t] >= gmax {
                gmax = self.grad[t];
                i_sel = Some(t);
            }
        }
        let i = i_sel?;
        let tau = T::lit(TAU);
        let mut gmax2 = T::neg_infinity();
        let mut best = T::infinity();
        let mut j_sel = None;
        for j in 0..n {
            let (diff, quad) = if self.y[j] == one {
                if self.is_lower(j) {
                    continue;
                }
                gmax2 = gmax2.max(self.grad[j]);
                (
                    gmax + self.grad[j],
                    self.k.get(i, i) + self.k.get(j, j) - T::lit(2.0) * self.y[i] * self.q(i, j),
                )
            } else {
                if self.is_upper(j) {
                    continue;
                }
                gmax2 = gmax2.max(-self.grad[j]);
                (
                    gmax - self.grad[j],
                    self.k.get(i, i) + self.k.get(j, j) + T::lit(2.0) * self.y[i] * self.q(i, j),
                )
            };
            if diff > T::zero() {
                let obj = -(diff * diff) / if quad > T::zero() { quad } else { tau };
                if obj <= best {
                    best = obj;
                    j_sel = Some(j);
                }
            }
        }
        if gmax + gmax2 < eps {
            return None;
        }
        j_sel.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let tau = T::lit(TAU);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let mut quad = self.k.get(i, i) + self.k.get(j, j) + T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > T::zero() {
                if aj < T::zero() {
                    aj = T::zero();
                    ai = diff;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = -diff;
            }
            if diff > T::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = self.k.get(i, i) + self.k.get(j, j) - T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < T::zero() {
                aj = T::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.y.len() {
            let delta = self.q(i, t) * di + self.q(j, t) * dj;
            self.grad[t] += delta;
        }
    }

    /// Bias from the KKT conditions: average over free vectors, else the
    /// midpoint of the feasible interval.
    fn bias(&self) -> T {
        let one = T::one();
        let mut ub = T::infinity();
        let mut lb = T::neg_infinity();
        let mut free = 0usize;
        let mut sum = T::zero();
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.is_upper(t) {
                if self.y[t] == -one {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.is_lower(t) {
                if self.y[t] == one {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 {
            sum / T::from_count(free)
        } else {
            (ub + lb) / T::lit(2.0)
        };
        -rho
    }

    /// `(1/2) a'Qa - sum(a)`, the minimised dual.
    fn dual_objective(&self) -> T {
        self.alpha
            .iter()
            .zip(&self.grad)
            .map(|(&a, &g)| a * (g - T::one()))
            .sum::<T>()
            / T::lit(2.0)
    }

    /// Primal objective at `(w(alpha), b)`.
    fn primal_objective(&self, b: T) -> T {
        let mut wsq = T::zero();
        let mut hinge = T::zero();
        for t in 0..self.y.len() {
            wsq += self.alpha[t] * (self.grad[t] + T::one());
            let margin = self.grad[t] + T::one() + self.y[t] * b;
            hinge += (T::one() - margin).max(T::zero());
        }
        wsq / T::lit(2.0) + self.c * hinge
    }

    fn relative_gap(&self) -> (T, T) {
        let b = self.bias();
        let primal = self.primal_objective(b);
        let dual = -self.dual_objective();
        let gap = (primal - dual).max(T::zero()) / primal.abs().max(T::epsilon());
        (gap, primal)
    }
}

/// Trains on features `x` with `y` in `{-1, +1}`; `k` must be `gram(x)`.
///
/// Stops once the relative duality gap falls to `tol`, when no KKT-violating
/// pair remains, or after `max_iter` pair updates. `warm_alpha` must be dual
/// feasible if given.
pub fn solve_hinge<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    c: T,
    tol: T,
    max_iter: usize,
    k: &Matrix<T>,
    warm_alpha: Option<&[T]>,
) -> HingeSolution<T> {
    let start = Instant::now();
    let n = y.len();
    let alpha = warm_alpha.map_or_else(|| vec![T::zero(); n], |a| a.to_vec());
    let mut grad = vec![-T::one(); n];
    for (i, g) in grad.iter_mut().enumerate() {
        for (j, &a) in alpha.iter().enumerate() {
            if a != T::zero() {
                *g += y[i] * y[j] * k.get(i, j) * a;
            }
        }
    }
    let mut smo = Smo { k, y, c, alpha, grad };
    let kkt_eps = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    let mut trace = vec![smo.dual_objective()];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = T::infinity();
    loop {
        if iterations % CHECK_EVERY == 0 {
            let (g, _) = smo.relative_gap();
            gap = g;
            if gap <= tol {
                converged = true;
                break;
            }
        }
        if iterations >= max_iter {
            break;
        }
        match smo.select(kkt_eps) {
            Some((i, j)) => smo.update(i, j),
            None => {
                gap = smo.relative_gap().0;
                converged = gap <= tol;
                break;
            }
        }
        iterations += 1;
        if iterations % CHECK_EVERY == 0 {
            trace.push(smo.dual_objective());
        }
    }
    trace.push(smo.dual_objective());
    let bias = smo.bias();
    let final_objective = smo.primal_objective(bias);
    let mut weights = vec![T::zero(); x.cols()];
    for (i, &a) in smo.alpha.iter().enumerate() {
        if a != T::zero() {
            axpy(a * y[i], x.row(i), &mut weights);
        }
    }
    HingeSolution {
        weights,
        bias,
        alpha: smo.alpha,
        report: TrainReport {
            final_objective,
            iterations,
            converged,
            certificate: gap,
            wall_time: start.elapsed().as_secs_f64(),
            objective_trace: trace,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(rows: &[[f64; 2]], y: &[f64], c: f64) -> HingeSolution<f64> {
        let x = Matrix::from_rows(rows).unwrap();
        let k = gram(&x);
        solve_hinge(&x, y, c, 1e-10, 100_000, &k, None)
    }

    #[test]
    fn hard_margin_square() {
        // max-margin separator of (0,0),(0,1) vs (2,0),(2,1) is x0 = 1 with |w| = 1
        let s = fit(
            &[[0.0, 0.0], [0.0, 1.0], [2.0, 0.0], [2.0, 1.0]],
            &[-1.0, -1.0, 1.0, 1.0],
            1e3,
        );
        assert!(s.report.converged);
        assert!((s.weights[0] - 1.0).abs() < 1e-6, "{:?}", s.weights);
        assert!(s.weights[1].abs() < 1e-6);
        assert!((s.bias + 1.0).abs() < 1e-6);
        let sum: f64 = s.alpha.iter().zip([-1.0, -1.0, 1.0, 1.0]).map(|(a, y)| a * y).sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn dual_trace_never_increases() {
        let rows: Vec<[f64; 2]> = (0..30)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin() + if i % 2 == 0 { 0.3 } else { -0.3 }, (t * 1.3).cos()]
            })
            .collect();
        let y: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = fit(&rows, &y, 10.0);
        for w in s.report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn gram_extend_matches_full() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]).unwrap();
        let base = gram(&x.select_rows(&[0, 1]));
        assert_eq!(gram_extend(&base, &x), gram(&x));
    }
}
