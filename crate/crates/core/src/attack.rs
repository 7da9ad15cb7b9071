//! Density-driven availability poisoning.
//!
//! A poison point is parameterised as a linear combination of `k` prototypes
//! drawn from the attacker's surrogate data of a target class `y_t`:
//! `x_p = clip(sum_i beta_i s_i, x_lb, x_ub)`. The coefficients are pushed
//! uphill on the class density estimate `P(x_p | y_t)` with a fixed step
//! until two consecutive density values differ by at most the stop
//! threshold. The point is then injected with a label `y_p != y_t`.
//! [`Combination::Normalized`] divides the combination by `sum_i beta_i`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::{PoisonBatch, PointTelemetry};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kde::{BandwidthRule, KdeEstimate};
use crate::linalg::{dot, Matrix};
use crate::rng::{self, Prng};
use crate::scalar::Scalar;

/// Prototype count used when none is given: 15 up to 1000 features, 30 above.
pub fn default_prototypes(d: usize) -> usize {
    if d <= 1000 {
        15
    } else {
        30
    }
}

/// How coefficients combine prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// `sum_i beta_i s_i`
    #[default]
    Linear,
    /// `sum_i beta_i s_i / sum_i beta_i`, a weighted mean of the prototypes.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig<T> {
    pub k: usize,
    pub alpha: T,
    pub stop_threshold: T,
    /// Safety cap; the ascent otherwise runs until the stop condition.
    pub max_iters: usize,
    pub lower_bound: Vec<T>,
    pub upper_bound: Vec<T>,
    pub seed: u64,
    pub bandwidth_squared: bool,
    pub combination: Combination,
}

impl<T: Scalar> AttackConfig<T> {
    /// Defaults (`alpha = 0.01`, threshold `1e-5`, cap 5000) with the box of `data`.
    pub fn for_dataset(data: &Dataset<T>, seed: u64) -> Self {
        Self {
            k: default_prototypes(data.d()),
            alpha: T::lit(0.01),
            stop_threshold: T::lit(1e-5),
            max_iters: 5000,
            lower_bound: data.lower_bound().to_vec(),
            upper_bound: data.upper_bound().to_vec(),
            seed,
            bandwidth_squared: false,
            combination: Combination::Linear,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.alpha > T::zero()) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        if !(self.stop_threshold > T::zero()) {
            return Err(Error::InvalidConfig("stop threshold must be positive".into()));
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

    fn bandwidth_rule(&self) -> BandwidthRule {
        BandwidthRule {
            squared: self.bandwidth_squared,
            seed: rng::derive_seed(self.seed, &[u64::MAX]),
        }
    }
}

/// The `k` prototypes `S` and their row indices in the surrogate set.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub prototypes: Matrix<T>,
    pub source_indices: Vec<usize>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn k(&self) -> usize {
        self.prototypes.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector<T>(pub Vec<T>);

/// Draws `k` distinct rows of class `y_t` uniformly at random.
pub fn sample_prototypes<T: Scalar>(
    d_val: &Dataset<T>,
    y_t: usize,
    k: usize,
    rng: &mut Prng,
) -> Result<PrototypeSet<T>> {
    let pool = d_val.indices_of_class(y_t);
    let needed = k.max(2);
    if pool.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            available: pool.len(),
        });
    }
    let source_indices: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    Ok(PrototypeSet {
        prototypes: d_val.features().select_rows(&source_indices),
        source_indices,
    })
}

/// i.i.d. uniform coefficients on `[0, 1]`.
pub fn init_beta<T: Scalar>(k: usize, rng: &mut Prng) -> BetaVector<T> {
    BetaVector((0..k).map(|_| T::lit(rng.gen::<f64>())).collect())
}

/// `sum_i beta_i s_i`
pub fn psi<T: Scalar>(beta: &BetaVector<T>, protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    if beta.0.len() != protos.k() {
        return Err(Error::DimensionMismatch {
            expected: protos.k(),
            found: beta.0.len(),
        });
    }
    let mut x = vec![T::zero(); protos.prototypes.cols()];
    for (&b, row) in beta.0.iter().zip(protos.prototypes.iter_rows()) {
        for (xi, &si) in x.iter_mut().zip(row) {
            *xi += b * si;
        }
    }
    Ok(x)
}

/// `psi` divided by the coefficient sum.
pub fn psi_normalized<T: Scalar>(beta: &BetaVector<T>, protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    let total: T = beta.0.iter().copied().sum();
    if !(total.abs() > T::epsilon()) {
        return Err(Error::NonFinite("coefficients summing to zero"));
    }
    Ok(psi(beta, protos)?.into_iter().map(|v| v / total).collect())
}

/// The unclipped poison point for `beta` under `combination`.
pub fn combine<T: Scalar>(beta: &BetaVector<T>, protos: &PrototypeSet<T>, combination: Combination) -> Result<Vec<T>> {
    match combination {
        Combination::Linear => psi(beta, protos),
        Combination::Normalized => psi_normalized(beta, protos),
    }
}

/// Elementwise `min(max(x, lb), ub)`.
pub fn clip<T: Scalar>(x: &[T], lb: &[T], ub: &[T]) -> Vec<T> {
    x.iter()
        .zip(lb.iter().zip(ub))
        .map(|(&v, (&l, &u))| v.max(l).min(u))
        .collect()
}

/// Evaluation of the reparameterised objective at one `beta`.
#[derive(Debug, Clone)]
pub struct BetaStep<T> {
    /// `clip(psi(beta, S))`
    pub point: Vec<T>,
    pub likelihood: T,
    /// Gradient of the density with respect to `beta`.
    pub grad_beta: Vec<T>,
}

/// Density at `clip(combine(beta, S))` and its gradient in `beta`.
///
/// Coordinates where `psi` lies strictly outside the box are held by the
/// clip, so their density partials are masked out of the chain rule.
pub fn beta_step<T: Scalar>(
    kde: &KdeEstimate<T>,
    beta: &BetaVector<T>,
    protos: &PrototypeSet<T>,
    lb: &[T],
    ub: &[T],
    combination: Combination,
) -> Result<BetaStep<T>> {
    let raw = combine(beta, protos, combination)?;
    let point = clip(&raw, lb, ub);
    let (likelihood, mut grad_x) = kde.likelihood_and_grad(&point)?;
    for (j, g) in grad_x.iter_mut().enumerate() {
        if raw[j] < lb[j] || raw[j] > ub[j] {
            *g = T::zero();
        }
    }
    let grad_beta = match combination {
        Combination::Linear => protos.prototypes.iter_rows().map(|s| dot(&grad_x, s)).collect(),
        Combination::Normalized => {
            let total: T = beta.0.iter().copied().sum();
            let shift = dot(&grad_x, &raw);
            protos
                .prototypes
                .iter_rows()
                .map(|s| (dot(&grad_x, s) - shift) / total)
                .collect()
        }
    };
    Ok(BetaStep {
        point,
        likelihood,
        grad_beta,
    })
}

#[derive(Debug, Clone)]
pub struct BetaTelemetry<T> {
    /// Loop iterations performed (density evaluations inside the loop).
    pub iterations: usize,
    /// Density at every iterate evaluated inside the loop.
    pub likelihood_trace: Vec<T>,
    /// Density at the returned point.
    pub final_likelihood: T,
    pub hit_cap: bool,
    pub bandwidth: T,
    pub prototypes: PrototypeSet<T>,
    pub beta: BetaVector<T>,
    pub wall_seconds: f64,
}

fn check_target<T: Scalar>(d_val: &Dataset<T>, y_t: usize) -> Result<()> {
    if y_t >= d_val.num_classes() {
        return Err(Error::InvalidLabel {
            label: y_t,
            limit: d_val.num_classes(),
        });
    }
    Ok(())
}

/// One poison point for target class `y_t`, with prototypes and initial
/// coefficients drawn from a stream seeded by `cfg.seed`.
pub fn run_beta_poisoning<T: Scalar>(
    d_val: &Dataset<T>,
    y_t: usize,
    cfg: &AttackConfig<T>,
) -> Result<(Vec<T>, BetaTelemetry<T>)> {
    cfg.validate(d_val.d())?;
    check_target(d_val, y_t)?;
    let available = d_val.indices_of_class(y_t).len();
    if available < cfg.k.max(2) {
        return Err(Error::InsufficientSamples {
            needed: cfg.k.max(2),
            available,
        });
    }
    let kde = KdeEstimate::fit(d_val, y_t, cfg.bandwidth_rule())?;
    let mut rng = rng::seeded(cfg.seed);
    run_with_estimate(&kde, d_val, cfg, &mut rng)
}

/// The ascent loop on a prebuilt density estimate of `kde.target_class()`.
pub fn run_with_estimate<T: Scalar>(
    kde: &KdeEstimate<T>,
    d_val: &Dataset<T>,
    cfg: &AttackConfig<T>,
    rng: &mut Prng,
) -> Result<(Vec<T>, BetaTelemetry<T>)> {
    let start = Instant::now();
    let (lb, ub) = (&cfg.lower_bound, &cfg.upper_bound);
    let protos = sample_prototypes(d_val, kde.target_class(), cfg.k, rng)?;
    let mut beta = init_beta::<T>(cfg.k, rng);
    let mut trace: Vec<T> = Vec::new();
    let mut hit_cap = true;
    for _ in 0..cfg.max_iters {
        let step = beta_step(kde, &beta, &protos, lb, ub, cfg.combination)?;
        for (b, g) in beta.0.iter_mut().zip(&step.grad_beta) {
            *b += cfg.alpha * *g;
        }
        let stop = trace
            .last()
            .is_some_and(|&prev| (step.likelihood - prev).abs() <= cfg.stop_threshold);
        trace.push(step.likelihood);
        if stop {
            hit_cap = false;
            break;
        }
    }
    let point = clip(&combine(&beta, &protos, cfg.combination)?, lb, ub);
    let final_likelihood = kde.likelihood(&point)?;
    Ok((
        point,
        BetaTelemetry {
            iterations: trace.len(),
            likelihood_trace: trace,
            final_likelihood,
            hit_cap,
            bandwidth: kde.bandwidth(),
            prototypes: protos,
            beta,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// How `(y_t, y_p)` are chosen for each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    /// `y_t` uniform over classes present in the surrogate set, `y_p`
    /// uniform over the other classes.
    RandomDistinct,
    Fixed { target: usize, poison: usize },
}

/// `m` independent poison points. Point `i` draws everything from its own
/// stream derived from `(cfg.seed, i)`, so the batch does not depend on
/// scheduling.
pub fn generate_poison_batch<T: Scalar>(
    d_val: &Dataset<T>,
    m: usize,
    cfg: &AttackConfig<T>,
    policy: LabelPolicy,
) -> Result<PoisonBatch<T>> {
    if m == 0 {
        return Err(Error::InvalidConfig("poison batch size must be at least 1".into()));
    }
    cfg.validate(d_val.d())?;
    let present: Vec<usize> = d_val
        .class_counts()
        .iter()
        .enumerate()
        .filter_map(|(c, &n)| (n > 0).then_some(c))
        .collect();
    if d_val.num_classes() < 2 {
        return Err(Error::SingleClass(d_val.num_classes()));
    }
    if let LabelPolicy::Fixed { target, poison } = policy {
        check_target(d_val, target)?;
        check_target(d_val, poison)?;
        if target == poison {
            return Err(Error::InvalidConfig("poison label must differ from target class".into()));
        }
    }
    let choose = |rng: &mut Prng| -> (usize, usize) {
        match policy {
            LabelPolicy::Fixed { target, poison } => (target, poison),
            LabelPolicy::RandomDistinct => {
                let y_t = present[rng.gen_range(0..present.len())];
                let mut y_p = rng.gen_range(0..d_val.num_classes() - 1);
                if y_p >= y_t {
                    y_p += 1;
                }
                (y_t, y_p)
            }
        }
    };
    // label draws first so the estimates needed are known up front
    let plans: Vec<(usize, usize, Prng)> = (0..m)
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(cfg.seed, &[i as u64]));
            let (t, p) = choose(&mut r);
            (t, p, r)
        })
        .collect();
    let mut estimates = BTreeMap::new();
    for &(t, _, _) in &plans {
        if let std::collections::btree_map::Entry::Vacant(e) = estimates.entry(t) {
            let available = d_val.indices_of_class(t).len();
            if available < cfg.k.max(2) {
                return Err(Error::InsufficientSamples {
                    needed: cfg.k.max(2),
                    available,
                });
            }
            e.insert(KdeEstimate::fit(d_val, t, cfg.bandwidth_rule())?);
        }
    }
    let crafted: Vec<Result<(Vec<T>, BetaTelemetry<T>)>> = plans
        .into_par_iter()
        .map(|(t, _, mut r)| run_with_estimate(&estimates[&t], d_val, cfg, &mut r))
        .collect();
    let mut batch = PoisonBatch::empty(d_val.d());
    let mut r = 0usize;
    for (i, res) in crafted.into_iter().enumerate() {
        let (point, tel) = res?;
        // recover labels from the same derivation used above
        let mut stream = rng::seeded(rng::derive_seed(cfg.seed, &[i as u64]));
        let (t, p) = choose(&mut stream);
        batch.push(
            &point,
            p,
            t,
            PointTelemetry {
                iterations: tel.iterations,
                final_likelihood: Some(tel.final_likelihood),
                objective: None,
                bandwidth: Some(tel.bandwidth),
                hit_cap: tel.hit_cap,
                wall_seconds: tel.wall_seconds,
            },
        )?;
        r += 1;
    }
    debug_assert_eq!(r, m);
    Ok(batch)
}
