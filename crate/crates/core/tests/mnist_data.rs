use std::path::PathBuf;

use poison_core::*;

fn mnist() -> Option<Dataset64> {
    let root = std::env::var_os("POISON_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let dir = root.join("mnist");
    let images = dir.join("train-images-idx3-ubyte");
    if !images.exists() {
        eprintln!("skipping: no MNIST files under {}", dir.display());
        return None;
    }
    Some(data::load_mnist_idx(images, dir.join("train-labels-idx1-ubyte")).unwrap())
}

#[test]
fn loader_and_split_shapes() {
    let Some(src) = mnist() else { return };
    assert_eq!((src.n(), src.d()), (60_000, 784));
    assert!(src.features().as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let spec = SplitSpec {
        n_train: 400,
        n_val: 1000,
        n_test: 1000,
        classes: vec![4, 0],
        seed: 0,
    };
    let s = filter_and_split(&src, &spec).unwrap();
    assert_eq!((s.train.n(), s.val.n(), s.test.n()), (400, 1000, 1000));
    assert_eq!(s.train.class_map(), &[4, 0]);
}

#[test]
fn clean_binary_and_triplet_accuracy() {
    let Some(src) = mnist() else { return };
    let spec = SplitSpec {
        n_train: 400,
        n_val: 1000,
        n_test: 1000,
        classes: vec![4, 0],
        seed: 1,
    };
    let s = filter_and_split(&src, &spec).unwrap();
    let (m, _) = train(&s.train, &TrainConfig::new(LossKind::Hinge, 1.0)).unwrap();
    assert!(accuracy(&m, &s.test).unwrap() >= 0.95);

    let spec = SplitSpec {
        classes: vec![3, 7, 5],
        ..spec
    };
    let s = filter_and_split(&src, &spec).unwrap();
    let m = train_auto(&s.train, &TrainConfig::new(LossKind::Hinge, 1.0)).unwrap();
    assert_eq!(m.weights.len(), 3);
    assert!(accuracy(&m, &s.test).unwrap() >= 0.90);
}
