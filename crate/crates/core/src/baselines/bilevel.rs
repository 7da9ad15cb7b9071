//! Reference bilevel availability attack.
//!
//! The attacker maximises the mean validation loss of the classifier
//! retrained on `D_tr ∪ (x_p, y_p)`. The derivative of that loss in `x_p` is
//! obtained through the implicit-function theorem on the inner optimality
//! conditions: the stationarity equations for logistic loss, and the
//! margin equations of the fixed active set for the hinge loss.

use std::time::Instant;

use rand::Rng;

use crate::batch::{PoisonBatch, PointTelemetry};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, dot, lu_solve, norm, Matrix};
use crate::models::{logistic, svm, LossKind, TrainConfig};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelConfig<T> {
    /// Euclidean length of each ascent step (the gradient is normalised).
    pub step_size: T,
    pub max_outer_iters: usize,
    /// Inner solver tolerance (relative duality gap or scaled gradient norm).
    pub retrain_tol: T,
    pub lower_bound: Vec<T>,
    pub upper_bound: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> BilevelConfig<T> {
    /// Box of `data`; step of 2% of the box diagonal, 100 outer steps.
    pub fn for_dataset(data: &Dataset<T>, seed: u64) -> Self {
        let diag: T = data
            .lower_bound()
            .iter()
            .zip(data.upper_bound())
            .map(|(&l, &u)| (u - l) * (u - l))
            .sum::<T>()
            .sqrt();
        Self {
            step_size: T::lit(0.02) * diag,
            max_outer_iters: 100,
            retrain_tol: T::lit(1e-6),
            lower_bound: data.lower_bound().to_vec(),
            upper_bound: data.upper_bound().to_vec(),
            seed,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.step_size >= T::zero()) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig("step size must be non-negative".into()));
        }
        if !(self.retrain_tol > T::zero()) {
            return Err(Error::InvalidConfig("retrain tolerance must be positive".into()));
        }
        for b in [&self.lower_bound, &self.upper_bound] {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.len(),
                });
            }
        }
        if self
            .lower_bound
            .iter()
            .zip(&self.upper_bound)
            .any(|(l, u)| !(l <= u))
        {
            return Err(Error::InvalidConfig("box bounds out of order".into()));
        }
        Ok(())
    }
}

/// Validation loss after retraining with one poison point, and its gradient
/// in the poison features.
#[derive(Debug, Clone)]
pub struct OuterEval<T> {
    pub loss: T,
    pub grad: Vec<T>,
    /// `[w, b]` of the retrained classifier.
    pub theta: Vec<T>,
    /// Dual variables (hinge only), reused as a warm start.
    pub alpha: Option<Vec<T>>,
    /// Per-sample state `0` (alpha = 0), `1` (on the margin), `2` (alpha = C).
    pub active_set: Option<Vec<u8>>,
    pub inner_converged: bool,
    /// The KKT system was singular and the support-vector correction dropped.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct BilevelTelemetry<T> {
    pub iterations: usize,
    pub retrains: usize,
    pub halvings: usize,
    pub degenerate_solves: usize,
    pub initial_loss: T,
    pub best_loss: T,
    /// Validation loss at every accepted iterate, starting from the initial point.
    pub loss_trace: Vec<T>,
    /// Running maximum of `loss_trace`.
    pub best_trace: Vec<T>,
    /// Index in `D_val` of the starting point.
    pub init_index: usize,
    pub init_label: usize,
    pub hit_cap: bool,
    pub wall_seconds: f64,
}

fn signed<T: Scalar>(label: usize) -> T {
    if label == 1 {
        T::one()
    } else {
        -T::one()
    }
}

struct Problem<'a, T> {
    x: Matrix<T>,
    y: Vec<T>,
    val: &'a Dataset<T>,
    val_y: Vec<T>,
    loss: LossKind,
    c: T,
    tol: T,
    max_iter: usize,
    base_gram: Option<Matrix<T>>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    fn new(d_tr: &Dataset<T>, d_val: &'a Dataset<T>, y_p: usize, loss: LossKind, c: T, tol: T) -> Result<Self> {
        for ds in [d_tr, d_val] {
            if ds.num_classes() != 2 {
                return Err(Error::Unsupported("bilevel attack is binary only".into()));
            }
        }
        if d_tr.d() != d_val.d() {
            return Err(Error::DimensionMismatch {
                expected: d_tr.d(),
                found: d_val.d(),
            });
        }
        if y_p >= 2 {
            return Err(Error::InvalidLabel { label: y_p, limit: 2 });
        }
        if !(c > T::zero()) {
            return Err(Error::InvalidConfig("regularization C must be positive".into()));
        }
        let mut x = d_tr.features().clone();
        x.push_row(&vec![T::zero(); d_tr.d()])?;
        let mut y = d_tr.signed_labels()?;
        y.push(signed(y_p));
        let base_gram = (loss == LossKind::Hinge).then(|| svm::gram(d_tr.features()));
        Ok(Self {
            x,
            y,
            val: d_val,
            val_y: d_val.signed_labels()?,
            loss,
            c,
            tol,
            max_iter: TrainConfig::<T>::new(loss, c).max_iter,
            base_gram,
        })
    }

    fn d(&self) -> usize {
        self.x.cols()
    }

    /// Mean validation loss at `theta` and its partials `(u, s)` in `(w, b)`.
    fn outer(&self, theta: &[T]) -> (T, Vec<T>, T) {
        let d = self.d();
        let n = T::from_count(self.val.n());
        let mut total = T::zero();
        let mut u = vec![T::zero(); d];
        let mut s = T::zero();
        for (row, &yk) in self.val.features().iter_rows().zip(&self.val_y) {
            let m = yk * (dot(&theta[..d], row) + theta[d]);
            total += self.loss.value(m);
            let a = self.loss.derivative(m) * yk / n;
            for (uj, &xj) in u.iter_mut().zip(row) {
                *uj += a * xj;
            }
            s += a;
        }
        (total / n, u, s)
    }

    fn evaluate(&mut self, x_p: &[T], warm: Option<&[T]>) -> Result<OuterEval<T>> {
        let last = self.x.rows() - 1;
        self.x.row_mut(last).copy_from_slice(x_p);
        match self.loss {
            LossKind::Logistic => self.evaluate_logistic(warm),
            LossKind::Hinge => self.evaluate_hinge(warm),
        }
    }

    fn evaluate_logistic(&self, warm: Option<&[T]>) -> Result<OuterEval<T>> {
        let d = self.d();
        let sol = logistic::solve_logistic(&self.x, &self.y, self.c, self.tol, self.max_iter, warm);
        let theta = sol.theta;
        let (loss, u, s) = self.outer(&theta);
        let (_, curv) = logistic::gradient(&self.x, &self.y, self.c, &theta);
        let mut rhs = u;
        rhs.push(s);
        let rhs_norm = norm(&rhs);
        let v = if rhs_norm > T::zero() {
            let cg = conjugate_gradient(
                |v, out| logistic::hessian_vec(&self.x, &curv, v, out),
                &rhs,
                T::lit(1e-12).max(T::epsilon() * T::lit(64.0)),
                20 * (d + 1) + 100,
            );
            let mut check = vec![T::zero(); d + 1];
            logistic::hessian_vec(&self.x, &curv, &cg.x, &mut check);
            let resid: T = check
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (*a - *b) * (*a - *b))
                .sum::<T>()
                .sqrt();
            if !(resid <= T::lit(1e-5).max(T::epsilon().sqrt()) * rhs_norm) {
                return Err(Error::Singular(format!(
                    "inner Hessian solve left residual {:e}",
                    resid.as_f64()
                )));
            }
            cg.x
        } else {
            vec![T::zero(); d + 1]
        };
        let x_p = self.x.row(self.x.rows() - 1);
        let y_p = self.y[self.y.len() - 1];
        let m_p = y_p * (dot(&theta[..d], x_p) + theta[d]);
        let l1 = self.loss.derivative(m_p);
        let l2 = m_p.sigmoid() * (-m_p).sigmoid();
        let xv = dot(x_p, &v[..d]) + v[d];
        let grad = (0..d)
            .map(|j| -self.c * (l2 * theta[j] * xv + l1 * y_p * v[j]))
            .collect();
        Ok(OuterEval {
            loss,
            grad,
            theta,
            alpha: None,
            active_set: None,
            inner_converged: sol.report.converged,
            degenerate: false,
        })
    }

    fn evaluate_hinge(&self, warm: Option<&[T]>) -> Result<OuterEval<T>> {
        let d = self.d();
        let n = self.x.rows();
        let p = n - 1;
        let base = self.base_gram.as_ref().expect("hinge problems carry a Gram matrix");
        let k = svm::gram_extend(base, &self.x);
        let sol = svm::solve_hinge(&self.x, &self.y, self.c, self.tol, self.max_iter, &k, warm);
        let mut theta = sol.weights.clone();
        theta.push(sol.bias);
        let (loss, u, s) = self.outer(&theta);
        let eps = self.c * T::lit(1e-8);
        let active: Vec<u8> = sol
            .alpha
            .iter()
            .map(|&a| {
                if a <= eps {
                    0
                } else if a >= self.c - eps {
                    2
                } else {
                    1
                }
            })
            .collect();
        let support: Vec<usize> = (0..n).filter(|&i| active[i] == 1).collect();
        let y = &self.y;
        let a_p = sol.alpha[p];
        let ay = a_p * y[p];
        let mut grad: Vec<T> = u.iter().map(|&v| ay * v).collect();
        let mut degenerate = false;
        if !support.is_empty() {
            let q = support.len();
            let mut kkt = Matrix::zeros(q + 1, q + 1);
            for (a, &i) in support.iter().enumerate() {
                for (b, &j) in support.iter().enumerate() {
                    kkt.set(a, b, y[i] * y[j] * k.get(i, j));
                }
                kkt.set(a, q, y[i]);
                kkt.set(q, a, y[i]);
            }
            let mut rhs: Vec<T> = support.iter().map(|&i| y[i] * dot(self.x.row(i), &u)).collect();
            rhs.push(s);
            match lu_solve(&kkt, &rhs) {
                Ok(z) => {
                    for (a, &i) in support.iter().enumerate() {
                        let coef = ay * z[a] * y[i];
                        for (g, &xj) in grad.iter_mut().zip(self.x.row(i)) {
                            *g -= coef * xj;
                        }
                        if i == p {
                            for (g, &wj) in grad.iter_mut().zip(&theta[..d]) {
                                *g -= z[a] * y[p] * wj;
                            }
                        }
                    }
                }
                Err(Error::Singular(_)) => degenerate = true,
                Err(e) => return Err(e),
            }
        }
        Ok(OuterEval {
            loss,
            grad,
            theta,
            alpha: Some(sol.alpha),
            active_set: Some(active),
            inner_converged: sol.report.converged,
            degenerate,
        })
    }
}

fn warm_start<T: Clone>(e: &OuterEval<T>) -> &[T] {
    e.alpha.as_deref().unwrap_or(&e.theta)
}

/// Validation loss and its implicit gradient at a fixed poison point.
pub fn implicit_gradient<T: Scalar>(
    d_tr: &Dataset<T>,
    d_val: &Dataset<T>,
    x_p: &[T],
    y_p: usize,
    loss: LossKind,
    reg_c: T,
    retrain_tol: T,
) -> Result<OuterEval<T>> {
    if x_p.len() != d_tr.d() {
        return Err(Error::DimensionMismatch {
            expected: d_tr.d(),
            found: x_p.len(),
        });
    }
    Problem::new(d_tr, d_val, y_p, loss, reg_c, retrain_tol)?.evaluate(x_p, None)
}

fn clip_step<T: Scalar>(x: &[T], g: &[T], eta: T, lb: &[T], ub: &[T]) -> Vec<T> {
    x.iter()
        .zip(g)
        .zip(lb.iter().zip(ub))
        .map(|((&xi, &gi), (&l, &u))| (xi + eta * gi).max(l).min(u))
        .collect()
}

/// Optimises one poison point labelled `y_p` by projected ascent on the
/// validation loss and returns the best iterate seen.
///
/// Starts from a random validation sample of class `!= y_p`. Each step
/// moves `step_size` along the normalised projected implicit gradient. For the hinge
/// loss a step that changes the active set is halved, at most ten times.
pub fn bilevel_attack_implicit<T: Scalar>(
    d_tr: &Dataset<T>,
    d_val: &Dataset<T>,
    y_p: usize,
    cfg: &BilevelConfig<T>,
    loss: LossKind,
    reg_c: T,
) -> Result<(Vec<T>, BilevelTelemetry<T>)> {
    let start = Instant::now();
    cfg.validate(d_tr.d())?;
    let mut problem = Problem::new(d_tr, d_val, y_p, loss, reg_c, cfg.retrain_tol)?;
    let (lb, ub) = (&cfg.lower_bound, &cfg.upper_bound);
    let pool: Vec<usize> = (0..d_val.n()).filter(|&i| d_val.labels()[i] != y_p).collect();
    if pool.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, available: 0 });
    }
    let mut r = rng::seeded(cfg.seed);
    let init_index = pool[r.gen_range(0..pool.len())];
    let mut x: Vec<T> = d_val
        .features()
        .row(init_index)
        .iter()
        .zip(lb.iter().zip(ub))
        .map(|(&v, (&l, &u))| v.max(l).min(u))
        .collect();
    let mut eval = problem.evaluate(&x, None)?;
    let mut retrains = 1;
    let mut halvings = 0;
    let mut degenerate_solves = usize::from(eval.degenerate);
    let initial_loss = eval.loss;
    let mut best = (x.clone(), eval.loss);
    let mut loss_trace = vec![eval.loss];
    let mut best_trace = vec![eval.loss];
    let mut iterations = 0;
    let mut hit_cap = true;
    while iterations < cfg.max_outer_iters {
        // Components pushing through an active bound are dropped before
        // normalising, so a point resting on a face keeps its full step along it.
        let proj: Vec<T> = eval
            .grad
            .iter()
            .zip(&x)
            .zip(lb.iter().zip(ub))
            .map(|((&g, &xi), (&l, &u))| {
                if (xi <= l && g < T::zero()) || (xi >= u && g > T::zero()) {
                    T::zero()
                } else {
                    g
                }
            })
            .collect();
        let gn = norm(&proj);
        if !(gn > T::zero()) || cfg.step_size == T::zero() {
            hit_cap = false;
            break;
        }
        let dir: Vec<T> = proj.iter().map(|&g| g / gn).collect();
        let mut eta = cfg.step_size;
        let mut tries = 0;
        let (cand, next) = loop {
            let cand = clip_step(&x, &dir, eta, lb, ub);
            let next = problem.evaluate(&cand, Some(warm_start(&eval)))?;
            retrains += 1;
            let changed = match (&eval.active_set, &next.active_set) {
                (Some(a), Some(b)) => a != b,
                _ => false,
            };
            if changed && tries < 10 {
                eta /= T::lit(2.0);
                tries += 1;
                halvings += 1;
                continue;
            }
            break (cand, next);
        };
        iterations += 1;
        if cand == x {
            hit_cap = false;
            break;
        }
        x = cand;
        eval = next;
        degenerate_solves += usize::from(eval.degenerate);
        loss_trace.push(eval.loss);
        if eval.loss > best.1 {
            best = (x.clone(), eval.loss);
        }
        best_trace.push(best.1);
    }
    Ok((
        best.0,
        BilevelTelemetry {
            iterations,
            retrains,
            halvings,
            degenerate_solves,
            initial_loss,
            best_loss: best.1,
            loss_trace,
            best_trace,
            init_index,
            init_label: d_val.labels()[init_index],
            hit_cap,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// `m` points crafted one after another; each is appended to the training
/// set before the next is optimised. Point `i` draws `y_p` uniformly and
/// runs with a seed derived from `(cfg.seed, i)`.
pub fn bilevel_poison_batch<T: Scalar>(
    d_tr: &Dataset<T>,
    d_val: &Dataset<T>,
    m: usize,
    cfg: &BilevelConfig<T>,
    loss: LossKind,
    reg_c: T,
) -> Result<PoisonBatch<T>> {
    let mut batch = PoisonBatch::empty(d_tr.d());
    let mut current = d_tr.clone();
    for i in 0..m {
        let mut labels = rng::seeded(rng::derive_seed(cfg.seed, &[i as u64, 0]));
        let y_p = labels.gen_range(0..2);
        let point_cfg = BilevelConfig {
            seed: rng::derive_seed(cfg.seed, &[i as u64, 1]),
            ..cfg.clone()
        };
        let (x, tel) = bilevel_attack_implicit(&current, d_val, y_p, &point_cfg, loss, reg_c)?;
        let row = Matrix::from_rows(&[x.as_slice()])?;
        current = current.append(&row, &[y_p])?;
        batch.push(
            &x,
            y_p,
            tel.init_label,
            PointTelemetry {
                iterations: tel.iterations,
                final_likelihood: None,
                objective: Some(tel.best_loss),
                bandwidth: None,
                hit_cap: tel.hit_cap,
                wall_seconds: tel.wall_seconds,
            },
        )?;
    }
    Ok(batch)
}
