use poison_core::kde::{compute_bandwidth, BandwidthRule, KdeEstimate};
use poison_core::rng;
use poison_core::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn random_bank(r: &mut rng::Prng, n: usize, d: usize) -> Matrix<f64> {
    let data = (0..n * d).map(|_| r.gen_range(-2.0..2.0)).collect();
    Matrix::new(n, d, data).unwrap()
}

fn brute_force_mean_distance(bank: &Matrix<f64>) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..bank.rows() {
        for j in 0..bank.rows() {
            if i < j {
                let sq: f64 = bank.row(i).iter().zip(bank.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                total += sq.sqrt();
                pairs += 1;
            }
        }
    }
    total / pairs as f64
}

#[test]
fn gradient_matches_central_differences_on_random_instances() {
    let mut r = rng::seeded(2024);
    for _ in 0..100 {
        let d = r.gen_range(1..=10);
        let n = r.gen_range(2..=20);
        let bank = random_bank(&mut r, n, d);
        let h = r.gen_range(0.5..4.0);
        let est = KdeEstimate::new(bank, h, 0).unwrap();
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let g = est.likelihood_grad(&x).unwrap();
        for j in 0..d {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += 1e-5;
            b[j] -= 1e-5;
            let fd = (est.likelihood(&a).unwrap() - est.likelihood(&b).unwrap()) / 2e-5;
            assert!((fd - g[j]).abs() <= 1e-5, "component {j}: {fd} vs {}", g[j]);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3));
        }
    }
}

#[test]
fn bandwidth_equals_brute_force_pairwise_mean() {
    let mut r = rng::seeded(7);
    for _ in 0..50 {
        let n = r.gen_range(2..=40);
        let d = r.gen_range(1..=6);
        let bank = random_bank(&mut r, n, d);
        let bw = compute_bandwidth(&bank, BandwidthRule::default()).unwrap();
        assert_eq!(bw.value, brute_force_mean_distance(&bank));
    }
}

#[test]
fn radial_decay_around_duplicated_point() {
    let bank = Matrix::from_rows(&[[0.3, -0.2], [0.3, -0.2]]).unwrap();
    let est = KdeEstimate::new(bank, 1.0, 0).unwrap();
    let u = [0.6, 0.8];
    let mut prev = est.likelihood(&[0.3, -0.2]).unwrap();
    assert_eq!(prev, 1.0);
    for t in 1..30 {
        let s = t as f64 * 0.2;
        let p = est.likelihood(&[0.3 + s * u[0], -0.2 + s * u[1]]).unwrap();
        assert!(p < prev);
        prev = p;
    }
}

proptest! {
    #[test]
    fn permuting_bank_rows_changes_nothing(seed in 0u64..1000, shift in 1usize..7) {
        let mut r = rng::seeded(seed);
        let bank = random_bank(&mut r, 8, 3);
        let order: Vec<usize> = (0..8).map(|i| (i + shift) % 8).rev().collect();
        let x = [0.1, -0.4, 0.9];
        let a = KdeEstimate::new(bank.clone(), 1.3, 0).unwrap();
        let b = KdeEstimate::new(bank.select_rows(&order), 1.3, 0).unwrap();
        let (pa, ga) = a.likelihood_and_grad(&x).unwrap();
        let (pb, gb) = b.likelihood_and_grad(&x).unwrap();
        prop_assert_eq!(pa, pb);
        prop_assert_eq!(ga, gb);
    }

    #[test]
    fn translation_leaves_density_and_gradient_unchanged(
        seed in 0u64..1000,
        t in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let mut r = rng::seeded(seed);
        let bank = random_bank(&mut r, 6, 3);
        let x = [0.2, 0.5, -0.7];
        let mut moved = bank.clone();
        for i in 0..6 {
            for (j, v) in moved.row_mut(i).iter_mut().enumerate() {
                *v += t[j];
            }
        }
        let xt: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + b).collect();
        let a = KdeEstimate::new(bank, 0.9, 0).unwrap();
        let b = KdeEstimate::new(moved, 0.9, 0).unwrap();
        let (pa, ga) = a.likelihood_and_grad(&x).unwrap();
        let (pb, gb) = b.likelihood_and_grad(&xt).unwrap();
        prop_assert!((pa - pb).abs() <= 1e-12);
        for (u, v) in ga.iter().zip(&gb) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}
