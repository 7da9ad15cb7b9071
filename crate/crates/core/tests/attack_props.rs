use poison_core::attack::{beta_step, combine, Combination};
use poison_core::data::make_gaussian_2d;
use poison_core::kde::{BandwidthRule, KdeEstimate};
use poison_core::*;
use proptest::prelude::*;
use rand::Rng;

fn origin_class(seed: u64) -> Dataset64 {
    make_gaussian_2d(100, [0.0, 0.0], [6.0, -6.0], 1.0, seed).unwrap()
}

#[test]
fn ascent_ends_in_dense_region_for_centred_class() {
    for seed in 0..20 {
        let ds = origin_class(seed);
        let cfg = AttackConfig::for_dataset(&ds, seed + 1000);
        let (x, tel) = run_beta_poisoning(&ds, 0, &cfg).unwrap();
        for j in 0..2 {
            assert!(x[j] >= ds.lower_bound()[j] && x[j] <= ds.upper_bound()[j]);
        }
        let kde = KdeEstimate::fit(&ds, 0, BandwidthRule::default()).unwrap();
        for s in tel.prototypes.prototypes.iter_rows() {
            assert!(tel.final_likelihood >= kde.likelihood(s).unwrap(), "seed {seed}");
        }
        assert!((x[0] * x[0] + x[1] * x[1]).sqrt() <= 2.0, "seed {seed}: {x:?}");
        assert!(tel.final_likelihood >= tel.likelihood_trace[0] - cfg.stop_threshold);
    }
}

#[test]
fn reported_likelihood_is_density_at_returned_point() {
    let ds = origin_class(3);
    let cfg = AttackConfig::for_dataset(&ds, 3);
    let (x, tel) = run_beta_poisoning(&ds, 0, &cfg).unwrap();
    let kde = KdeEstimate::fit(&ds, 0, BandwidthRule::default()).unwrap();
    assert_eq!(kde.likelihood(&x).unwrap(), tel.final_likelihood);
    let again = clip(&psi(&tel.beta, &tel.prototypes).unwrap(), ds.lower_bound(), ds.upper_bound());
    assert_eq!(again, x);
}

#[test]
fn same_seed_same_point_and_batch() {
    let ds = origin_class(5);
    let cfg = AttackConfig::for_dataset(&ds, 77);
    let a = run_beta_poisoning(&ds, 1, &cfg).unwrap().0;
    let b = run_beta_poisoning(&ds, 1, &cfg).unwrap().0;
    assert_eq!(a, b);
    let ba = generate_poison_batch(&ds, 9, &cfg, LabelPolicy::RandomDistinct).unwrap();
    let bb = generate_poison_batch(&ds, 9, &cfg, LabelPolicy::RandomDistinct).unwrap();
    assert_eq!(ba.points, bb.points);
    assert_eq!(ba.labels, bb.labels);
}

#[test]
fn single_prototype_is_accepted() {
    let ds = origin_class(8);
    let mut cfg = AttackConfig::for_dataset(&ds, 1);
    cfg.k = 1;
    let (_, tel) = run_beta_poisoning(&ds, 0, &cfg).unwrap();
    assert_eq!(tel.beta.0.len(), 1);
}

#[test]
fn multiclass_labels_differ_from_target() {
    let a = make_gaussian_2d(20, [0.0, 0.0], [3.0, 0.0], 0.5, 1).unwrap();
    let b = make_gaussian_2d(20, [0.0, 3.0], [3.0, 3.0], 0.5, 2).unwrap();
    let mut rows = a.features().clone();
    let mut labels = a.labels().to_vec();
    for i in 0..b.n() {
        rows.push_row(b.features().row(i)).unwrap();
        labels.push(b.labels()[i] + 2);
    }
    let ds = Dataset::new(rows, labels, vec![-3.0, -3.0], vec![6.0, 6.0], vec![0, 1, 2, 3]).unwrap();
    let mut cfg = AttackConfig::for_dataset(&ds, 4);
    cfg.k = 5;
    let batch = generate_poison_batch(&ds, 40, &cfg, LabelPolicy::RandomDistinct).unwrap();
    let mut seen = [false; 4];
    for (t, p) in batch.target_classes.iter().zip(&batch.labels) {
        assert_ne!(t, p);
        seen[*t] = true;
    }
    assert!(seen.iter().all(|&s| s));
}

fn chain_rule_check(combination: Combination, seed: u64) {
    let mut r = rng::seeded(seed);
    let d = r.gen_range(1..=6);
    let k = r.gen_range(1..=5);
    let n = 12;
    let bank = Matrix::new(n, d, (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let kde = KdeEstimate::new(bank.clone(), r.gen_range(0.5..2.0), 0).unwrap();
    let protos = PrototypeSet {
        prototypes: bank.select_rows(&(0..k).collect::<Vec<_>>()),
        source_indices: (0..k).collect(),
    };
    let beta = init_beta::<f64>(k, &mut r);
    let lb = vec![-1e6; d];
    let ub = vec![1e6; d];
    let step = beta_step(&kde, &beta, &protos, &lb, &ub, combination).unwrap();
    for i in 0..k {
        let mut a = beta.clone();
        let mut b = beta.clone();
        a.0[i] += 1e-6;
        b.0[i] -= 1e-6;
        let pa = kde.likelihood(&combine(&a, &protos, combination).unwrap()).unwrap();
        let pb = kde.likelihood(&combine(&b, &protos, combination).unwrap()).unwrap();
        let fd = (pa - pb) / 2e-6;
        assert!((fd - step.grad_beta[i]).abs() <= 1e-5, "{combination:?} {i}: {fd} vs {}", step.grad_beta[i]);
    }
}

#[test]
fn beta_gradient_matches_finite_differences() {
    for seed in 0..50 {
        chain_rule_check(Combination::Linear, seed);
        chain_rule_check(Combination::Normalized, seed);
    }
}

#[test]
fn clipped_coordinates_do_not_contribute() {
    let bank = Matrix::from_rows(&[[0.5, 0.5], [0.6, 0.4], [0.4, 0.7]]).unwrap();
    let kde = KdeEstimate::new(bank.clone(), 0.5, 0).unwrap();
    let protos = PrototypeSet {
        prototypes: Matrix::from_rows(&[[2.0, 0.3]]).unwrap(),
        source_indices: vec![0],
    };
    // psi = (2, 0.3): first coordinate clipped to 1
    let step = beta_step(&kde, &BetaVector(vec![1.0]), &protos, &[0.0, 0.0], &[1.0, 1.0], Combination::Linear).unwrap();
    let g = kde.likelihood_grad(&[1.0, 0.3]).unwrap();
    assert_eq!(step.point, vec![1.0, 0.3]);
    assert_eq!(step.grad_beta[0], g[1] * 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_point_lies_in_the_box(seed in 0u64..10_000, lo in -1.0f64..0.0, width in 0.1f64..3.0) {
        let ds = make_gaussian_2d(15, [0.0, 0.0], [1.0, 1.0], 0.5, seed).unwrap();
        let mut cfg = AttackConfig::for_dataset(&ds, seed);
        cfg.k = 4;
        cfg.max_iters = 200;
        cfg.lower_bound = vec![lo, lo];
        cfg.upper_bound = vec![lo + width, lo + width];
        let batch = generate_poison_batch(&ds, 4, &cfg, LabelPolicy::RandomDistinct).unwrap();
        for v in batch.points.as_slice() {
            prop_assert!(*v >= lo && *v <= lo + width);
        }
        for t in &batch.telemetry {
            prop_assert!(t.iterations <= 200);
        }
    }
}
