use std::time::Instant;

use poison_core::attack::{generate_poison_batch, AttackConfig, LabelPolicy};
use poison_core::baselines::{bilevel_poison_batch, label_flip_attack, BilevelConfig};
use poison_core::rng::derive_seed;
use poison_core::{accuracy, train_auto, PoisonBatch, Split, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::presets::DataContext;
use crate::spec::{AttackKind, BandwidthKind, ExperimentSpec, TimingMode};

/// Poison share used by the prototype-count sweep.
pub const ABLATION_FRACTION: f64 = 0.15;

pub const PRNG_NAME: &str = "ChaCha20 (rand_chacha), child seeds by splitmix64 mixing";

/// One trained-and-evaluated cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub reg_c: f64,
    pub fraction: f64,
    pub count: usize,
    pub repetition: usize,
    /// Prototype count for density attacks.
    pub k: Option<usize>,
    /// Held-out test accuracy.
    pub accuracy: f64,
    /// Accuracy on the attacker's surrogate (validation) set.
    pub surrogate_accuracy: f64,
    pub attack_seconds: f64,
    pub train_seconds: f64,
    /// Mean KDE bandwidth over the batch.
    pub h: Option<f64>,
    pub mean_iterations: f64,
    pub cap_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub version: String,
    pub prng: String,
    pub spec: ExperimentSpec,
    pub n_train: usize,
    /// Conditions worth a reader's attention (count/fraction mismatch, k = 1, cap hits).
    pub flags: Vec<String>,
    pub rows: Vec<RunRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary { mean, std: var.sqrt() }
}

impl RunRecord {
    /// Rows for one regularisation value, in job order.
    pub fn rows_for(&self, reg_c: f64) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(move |r| r.reg_c == reg_c)
    }

    /// Test accuracy summary at `(reg_c, fraction)`.
    pub fn accuracy_at(&self, reg_c: f64, fraction: f64) -> Summary {
        let v: Vec<f64> = self.rows_for(reg_c).filter(|r| r.fraction == fraction).map(|r| r.accuracy).collect();
        summarize(&v)
    }

    pub fn attack_time_at(&self, reg_c: f64, fraction: f64) -> Summary {
        let v: Vec<f64> = self.rows_for(reg_c).filter(|r| r.fraction == fraction).map(|r| r.attack_seconds).collect();
        summarize(&v)
    }

    /// Surrogate accuracy summary at `(reg_c, k)` of an ablation record.
    pub fn surrogate_at_k(&self, reg_c: f64, k: usize) -> Summary {
        let v: Vec<f64> = self.rows_for(reg_c).filter(|r| r.k == Some(k)).map(|r| r.surrogate_accuracy).collect();
        summarize(&v)
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    reg_c: f64,
    fraction_index: usize,
    fraction: f64,
    count: usize,
    repetition: usize,
    k: Option<usize>,
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(HarnessError::Spec("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Spec(format!("cannot build worker pool: {e}")))
}

fn splits(spec: &ExperimentSpec, ctx: &DataContext) -> Result<Vec<Split<f64>>> {
    (0..spec.repetitions)
        .into_par_iter()
        .map(|r| ctx.split(spec.dataset, spec.seed, derive_seed(spec.seed, &[r as u64])))
        .collect()
}

fn craft(spec: &ExperimentSpec, split: &Split<f64>, job: &Job, seed: u64) -> Result<PoisonBatch<f64>> {
    let s = &spec.attack_config;
    let context = || format!("{:?} attack, C={}, fraction {}, repetition {}", spec.attack, job.reg_c, job.fraction, job.repetition);
    match spec.attack {
        AttackKind::Beta => {
            let mut cfg = AttackConfig::for_dataset(&split.val, seed);
            if let Some(k) = job.k.or(s.k) {
                cfg.k = k;
            }
            cfg.alpha = s.alpha;
            cfg.stop_threshold = s.stop_threshold;
            cfg.max_iters = s.max_iters;
            cfg.bandwidth_squared = s.bandwidth == BandwidthKind::Squared;
            cfg.combination = s.combination;
            generate_poison_batch(&split.val, job.count, &cfg, LabelPolicy::RandomDistinct)
        }
        AttackKind::Labelflip => label_flip_attack(&split.val, job.count, seed),
        AttackKind::Bilevel => {
            let mut cfg = BilevelConfig::for_dataset(&split.train, seed);
            if let Some(step) = s.step_size {
                cfg.step_size = step;
            }
            cfg.max_outer_iters = s.max_outer_iters;
            cfg.retrain_tol = s.retrain_tol;
            bilevel_poison_batch(&split.train, &split.val, job.count, &cfg, spec.model.loss(), job.reg_c)
        }
    }
    .map_err(HarnessError::core(context()))
}

fn execute(spec: &ExperimentSpec, split: &Split<f64>, job: &Job) -> Result<RunRow> {
    let keep = |t: f64| if spec.timings == TimingMode::Record { t } else { 0.0 };
    let (batch, attack_seconds) = if job.count == 0 {
        (None, 0.0)
    } else {
        let seed = derive_seed(spec.seed, &[job.repetition as u64, job.fraction_index as u64, 1]);
        let start = Instant::now();
        let batch = craft(spec, split, job, seed)?;
        (Some(batch), start.elapsed().as_secs_f64())
    };
    let poisoned = match &batch {
        Some(b) => split.train.append(&b.points, &b.labels).map_err(HarnessError::core("appending poison"))?,
        None => split.train.clone(),
    };
    let start = Instant::now();
    let model = train_auto(&poisoned, &TrainConfig::new(spec.model.loss(), job.reg_c))
        .map_err(HarnessError::core(format!("training C={} repetition {}", job.reg_c, job.repetition)))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let acc = accuracy(&model, &split.test).map_err(HarnessError::core("evaluating"))?;
    let surrogate = accuracy(&model, &split.val).map_err(HarnessError::core("evaluating"))?;
    let (h, mean_iterations, cap_hits) = match &batch {
        Some(b) => (
            b.mean_bandwidth(),
            b.telemetry.iter().map(|t| t.iterations as f64).sum::<f64>() / b.len() as f64,
            b.telemetry.iter().filter(|t| t.hit_cap).count(),
        ),
        None => (None, 0.0, 0),
    };
    let k = (spec.attack == AttackKind::Beta && job.count > 0)
        .then(|| job.k.or(spec.attack_config.k).unwrap_or_else(|| poison_core::attack::default_prototypes(split.val.d())));
    Ok(RunRow {
        reg_c: job.reg_c,
        fraction: job.fraction,
        count: job.count,
        repetition: job.repetition,
        k,
        accuracy: acc,
        surrogate_accuracy: surrogate,
        attack_seconds: keep(attack_seconds),
        train_seconds: keep(train_seconds),
        h,
        mean_iterations,
        cap_hits,
    })
}

fn run_jobs(spec: &ExperimentSpec, ctx: &DataContext, jobs: Vec<Job>, threads: Option<usize>) -> Result<(usize, Vec<RunRow>)> {
    pool(threads)?.install(|| {
        let splits = splits(spec, ctx)?;
        let rows = jobs
            .par_iter()
            .map(|j| execute(spec, &splits[j.repetition], j))
            .collect::<Result<Vec<_>>>()?;
        Ok((splits[0].train.n(), rows))
    })
}

fn base_flags(spec: &ExperimentSpec, n_train: usize, rows: &[RunRow]) -> Vec<String> {
    let mut flags = Vec::new();
    if let Some(m) = spec.count {
        for &f in spec.fractions.iter().filter(|f| **f > 0.0) {
            let nominal = (f * n_train as f64).round() as usize;
            if nominal != m {
                flags.push(format!(
                    "count {m} replaces round({f} * {n_train}) = {nominal}; effective share {:.4} of clean training set, {:.4} of poisoned set",
                    m as f64 / n_train as f64,
                    m as f64 / (n_train + m) as f64
                ));
            }
        }
    }
    if rows.iter().any(|r| r.k == Some(1)) {
        flags.push("k = 1: each poison point is a scaled copy of a single prototype".into());
    }
    let caps: usize = rows.iter().map(|r| r.cap_hits).sum();
    if caps > 0 {
        flags.push(format!("{caps} poison point(s) stopped at the iteration cap"));
    }
    if spec.timings == TimingMode::Omit {
        flags.push("timings omitted: time columns are zero".into());
    }
    flags
}

fn record(spec: &ExperimentSpec, n_train: usize, rows: Vec<RunRow>) -> RunRecord {
    RunRecord {
        version: env!("CARGO_PKG_VERSION").into(),
        prng: PRNG_NAME.into(),
        spec: spec.clone(),
        n_train,
        flags: base_flags(spec, n_train, &rows),
        rows,
    }
}

/// Accuracy under poisoning for every `(C, fraction, repetition)` of `spec`.
/// `threads` bounds the worker pool (all cores when `None`).
pub fn run_poisoning_curve(spec: &ExperimentSpec, ctx: &DataContext, threads: Option<usize>) -> Result<RunRecord> {
    spec.validate()?;
    let (n_train, _, _) = spec.dataset.sizes();
    let mut jobs = Vec::new();
    for &reg_c in &spec.reg_c {
        for (fi, &fraction) in spec.fractions.iter().enumerate() {
            for repetition in 0..spec.repetitions {
                jobs.push(Job {
                    reg_c,
                    fraction_index: fi,
                    fraction,
                    count: spec.poison_count(fraction, n_train),
                    repetition,
                    k: None,
                });
            }
        }
    }
    let (n_train, rows) = run_jobs(spec, ctx, jobs, threads)?;
    Ok(record(spec, n_train, rows))
}

/// Sweeps the prototype count at a fixed poison share of about 15%.
/// The spec's fractions are ignored; its attack must be `beta`.
pub fn run_ablation_prototypes(
    spec: &ExperimentSpec,
    k_values: &[usize],
    ctx: &DataContext,
    threads: Option<usize>,
) -> Result<RunRecord> {
    spec.validate()?;
    if spec.attack != AttackKind::Beta {
        return Err(HarnessError::Spec("the prototype ablation needs attack \"beta\"".into()));
    }
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(HarnessError::Spec("k values must be a non-empty list of positive counts".into()));
    }
    let mut spec = spec.clone();
    spec.fractions = vec![ABLATION_FRACTION];
    let (n_train, _, _) = spec.dataset.sizes();
    let count = spec.poison_count(ABLATION_FRACTION, n_train);
    let mut jobs = Vec::new();
    for &reg_c in &spec.reg_c {
        for (ki, &k) in k_values.iter().enumerate() {
            for repetition in 0..spec.repetitions {
                jobs.push(Job {
                    reg_c,
                    // Distinct streams per k so runs at different k are independent draws.
                    fraction_index: ki,
                    fraction: ABLATION_FRACTION,
                    count,
                    repetition,
                    k: Some(k),
                });
            }
        }
    }
    let (n_train, rows) = run_jobs(&spec, ctx, jobs, threads)?;
    Ok(record(&spec, n_train, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub reg_c: f64,
    pub fraction: f64,
    pub count: usize,
    pub a: Summary,
    pub b: Summary,
    /// `b.mean / a.mean`.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingTable {
    pub name_a: String,
    pub name_b: String,
    pub record_a: RunRecord,
    pub record_b: RunRecord,
    pub rows: Vec<TimingRow>,
}

/// Attack-generation wall time of two specs over the same budget, one job
/// at a time so neither method competes for cores.
pub fn run_timing_comparison(spec_a: &ExperimentSpec, spec_b: &ExperimentSpec, ctx: &DataContext) -> Result<TimingTable> {
    let same = spec_a.dataset == spec_b.dataset
        && spec_a.model == spec_b.model
        && spec_a.reg_c == spec_b.reg_c
        && spec_a.fractions == spec_b.fractions
        && spec_a.count == spec_b.count
        && spec_a.repetitions == spec_b.repetitions;
    if !same {
        return Err(HarnessError::Spec(
            "timing specs must share dataset, model, reg_c, fractions, count and repetitions".into(),
        ));
    }
    let timed = |s: &ExperimentSpec| {
        let mut s = s.clone();
        s.timings = TimingMode::Record;
        run_poisoning_curve(&s, ctx, Some(1))
    };
    let record_a = timed(spec_a)?;
    let record_b = timed(spec_b)?;
    let mut rows = Vec::new();
    for &reg_c in &spec_a.reg_c {
        for &fraction in spec_a.fractions.iter().filter(|f| **f > 0.0) {
            let a = record_a.attack_time_at(reg_c, fraction);
            let b = record_b.attack_time_at(reg_c, fraction);
            rows.push(TimingRow {
                reg_c,
                fraction,
                count: spec_a.poison_count(fraction, record_a.n_train),
                a,
                b,
                speedup: b.mean / a.mean,
            });
        }
    }
    Ok(TimingTable {
        name_a: spec_a.name.clone(),
        name_b: spec_b.name.clone(),
        record_a,
        record_b,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Preset;
    use crate::spec::{AttackSettings, ModelKind};

    fn toy(attack: AttackKind) -> ExperimentSpec {
        ExperimentSpec {
            name: "toy".into(),
            dataset: Preset::Gauss2d,
            model: ModelKind::Logreg,
            reg_c: vec![1.0, 10.0],
            attack,
            fractions: vec![0.0, 0.1],
            count: None,
            repetitions: 2,
            attack_config: AttackSettings::default(),
            seed: 5,
            timings: TimingMode::Omit,
        }
    }

    #[test]
    fn population_std() {
        let s = summarize(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn curve_shape_and_clean_identity() {
        let ctx = DataContext::new("/nonexistent");
        let rec = run_poisoning_curve(&toy(AttackKind::Beta), &ctx, Some(2)).unwrap();
        assert_eq!(rec.rows.len(), 2 * 2 * 2);
        assert_eq!(rec.n_train, 60);
        for r in &rec.rows {
            assert!((0.0..=1.0).contains(&r.accuracy));
            assert_eq!(r.count, if r.fraction == 0.0 { 0 } else { 6 });
            assert_eq!(r.attack_seconds, 0.0);
        }
        // Fraction 0 trains on the clean split, whatever the attack.
        let flip = run_poisoning_curve(&toy(AttackKind::Labelflip), &ctx, Some(1)).unwrap();
        let clean = |rec: &RunRecord| -> Vec<f64> { rec.rows.iter().filter(|r| r.count == 0).map(|r| r.accuracy).collect() };
        assert_eq!(clean(&rec), clean(&flip));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let ctx = DataContext::new("/nonexistent");
        let spec = toy(AttackKind::Bilevel);
        let a = run_poisoning_curve(&spec, &ctx, Some(1)).unwrap();
        let b = run_poisoning_curve(&spec, &ctx, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ablation_rows_and_k1_flag() {
        let ctx = DataContext::new("/nonexistent");
        let mut spec = toy(AttackKind::Beta);
        spec.reg_c = vec![1.0];
        let rec = run_ablation_prototypes(&spec, &[1, 3], &ctx, None).unwrap();
        assert_eq!(rec.rows.len(), 4);
        assert!(rec.rows.iter().all(|r| r.count == 9 && r.fraction == ABLATION_FRACTION));
        assert!(rec.flags.iter().any(|f| f.starts_with("k = 1")));
        assert!(run_ablation_prototypes(&toy(AttackKind::Labelflip), &[2], &ctx, None).is_err());
        assert!(run_ablation_prototypes(&spec, &[], &ctx, None).is_err());
    }

    #[test]
    fn timing_rejects_mismatched_budgets() {
        let ctx = DataContext::new("/nonexistent");
        let a = toy(AttackKind::Beta);
        let mut b = toy(AttackKind::Bilevel);
        b.count = Some(3);
        assert!(matches!(run_timing_comparison(&a, &b, &ctx), Err(HarnessError::Spec(_))));
    }
}
