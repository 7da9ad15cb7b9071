//! L2-regularized logistic regression by truncated Newton (CG inner solves,
//! Armijo backtracking). Parameters are packed as `theta = [w, b]`; the bias
//! is not regularized.

use std::time::Instant;

use crate::linalg::{conjugate_gradient, dot, norm, Matrix};
use crate::models::TrainReport;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct LogisticSolution<T> {
    /// `[w_0, ..., w_{d-1}, b]`
    pub theta: Vec<T>,
    pub report: TrainReport<T>,
}

#[inline]
fn decision<T: Scalar>(theta: &[T], x: &[T]) -> T {
    let d = x.len();
    dot(&theta[..d], x) + theta[d]
}

/// `(1/2)|w|^2 + C sum_i log(1 + exp(-y_i f(x_i)))`
pub fn objective<T: Scalar>(x: &Matrix<T>, y: &[T], c: T, theta: &[T]) -> T {
    let d = x.cols();
    let reg = dot(&theta[..d], &theta[..d]) / T::lit(2.0);
    let loss: T = x
        .iter_rows()
        .zip(y)
        .map(|(row, &yi)| (-yi * decision(theta, row)).softplus())
        .sum();
    reg + c * loss
}

/// Gradient of [`objective`]; also returns per-sample curvature weights
/// `C * sigma(m)(1 - sigma(m))` for Hessian products.
pub fn gradient<T: Scalar>(x: &Matrix<T>, y: &[T], c: T, theta: &[T]) -> (Vec<T>, Vec<T>) {
    let d = x.cols();
    let mut g = theta.to_vec();
    g[d] = T::zero();
    let mut curv = Vec::with_capacity(y.len());
    for (row, &yi) in x.iter_rows().zip(y) {
        let m = yi * decision(theta, row);
        // d/dm log(1 + e^{-m}) = -sigma(-m)
        let coef = -c * (-m).sigmoid() * yi;
        for (gj, &xj) in g[..d].iter_mut().zip(row) {
            *gj += coef * xj;
        }
        g[d] += coef;
        let s = m.sigmoid();
        curv.push(c * s * (T::one() - s));
    }
    (g, curv)
}

/// `H v` for the Hessian at the point that produced `curv`.
pub fn hessian_vec<T: Scalar>(x: &Matrix<T>, curv: &[T], v: &[T], out: &mut [T]) {
    let d = x.cols();
    out[..d].copy_from_slice(&v[..d]);
    out[d] = T::zero();
    for (row, &h) in x.iter_rows().zip(curv) {
        let s = h * (dot(row, &v[..d]) + v[d]);
        for (o, &xj) in out[..d].iter_mut().zip(row) {
            *o += s * xj;
        }
        out[d] += s;
    }
}

/// Minimises the logistic objective. Converged when
/// `|grad| <= tol * (1 + |theta|)`.
pub fn solve_logistic<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    c: T,
    tol: T,
    max_iter: usize,
    init: Option<&[T]>,
) -> LogisticSolution<T> {
    let start = Instant::now();
    let d = x.cols();
    let mut theta = init.map_or_else(|| vec![T::zero(); d + 1], |t| t.to_vec());
    let mut f = objective(x, y, c, &theta);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut certificate;
    loop {
        let (g, curv) = gradient(x, y, c, &theta);
        let gnorm = norm(&g);
        certificate = gnorm / (T::one() + norm(&theta));
        if certificate <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let neg_g: Vec<T> = g.iter().map(|&v| -v).collect();
        let forcing = T::lit(0.5).min(gnorm.sqrt()).max(T::lit(1e-12));
        let step = conjugate_gradient(
            |v, out| hessian_vec(x, &curv, v, out),
            &neg_g,
            forcing,
            2 * (d + 1) + 10,
        );
        let mut dir = step.x;
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            dir = neg_g;
            slope = -gnorm * gnorm;
        }
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<T> = theta.iter().zip(&dir).map(|(&a, &p)| a + t * p).collect();
            let fc = objective(x, y, c, &cand);
            if fc <= f + T::lit(1e-4) * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t /= T::lit(2.0);
        }
        iterations += 1;
        if !accepted {
            // no representable descent left
            break;
        }
        trace.push(f);
    }
    LogisticSolution {
        theta,
        report: TrainReport {
            final_objective: f,
            iterations,
            converged,
            certificate,
            wall_time: start.elapsed().as_secs_f64(),
            objective_trace: trace,
        },
    }
}
