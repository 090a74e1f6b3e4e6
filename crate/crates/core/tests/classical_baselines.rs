//! AIS-only reference classifiers on constructed data.

use nfship::classical::{AisClassifier, GaussianNb, Knn, LogisticConfig, LogisticRegression};
use nfship::data::AisVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Unit-variance Gaussian blobs centred at `centres`.
fn blobs(centres: &[f64], per_class: usize, seed: u64) -> (Vec<AisVector>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, &m) in centres.iter().enumerate() {
        for _ in 0..per_class {
            x.push(std::array::from_fn(|_| m + n.sample(&mut rng)));
            y.push(c);
        }
    }
    (x, y)
}

fn accuracy(clf: &dyn AisClassifier, x: &[AisVector], y: &[usize]) -> f64 {
    x.iter().zip(y).filter(|(p, &l)| clf.predict(p) == l).count() as f64 / x.len() as f64
}

#[test]
fn knn_planted_clusters_are_perfect() {
    let (x, y) = blobs(&[0.0, 20.0], 50, 1);
    let (tx, ty) = blobs(&[0.0, 20.0], 50, 2);
    let knn = Knn::fit(&x, &y, 2, 5).unwrap();
    assert_eq!(accuracy(&knn, &tx, &ty), 1.0);
    let k1 = Knn::fit(&x, &y, 2, 1).unwrap();
    assert!(x.iter().zip(&y).all(|(p, &l)| k1.predict(p) == l));
}

#[test]
fn naive_bayes_separated_gaussians() {
    let (x, y) = blobs(&[0.0, 4.0, 8.0], 200, 3);
    let (tx, ty) = blobs(&[0.0, 4.0, 8.0], 200, 4);
    let nb = GaussianNb::fit(&x, &y, 3).unwrap();
    assert!(accuracy(&nb, &tx, &ty) >= 0.99);
}

#[test]
fn naive_bayes_survives_constant_fields() {
    let x = vec![[1.0; 7], [1.0; 7], [5.0; 7], [5.0; 7]];
    let nb = GaussianNb::fit(&x, &[0, 0, 1, 1], 2).unwrap();
    let s = nb.scores(&[1.0; 7]);
    assert!(s.iter().all(|v| v.is_finite()));
    assert_eq!(nb.predict(&[1.0; 7]), 0);
}

#[test]
fn logistic_regression_separable_training_set() {
    let (x, y) = blobs(&[0.0, 6.0], 100, 5);
    let lr = LogisticRegression::fit(&x, &y, 2, &LogisticConfig::default()).unwrap();
    assert_eq!(accuracy(&lr, &x, &y), 1.0);
    let again = LogisticRegression::fit(&x, &y, 2, &LogisticConfig::default()).unwrap();
    assert_eq!(lr.scores(&x[0]), again.scores(&x[0]));
}

#[test]
fn scores_sum_to_one() {
    let (x, y) = blobs(&[0.0, 3.0, 6.0], 30, 6);
    let models: Vec<Box<dyn AisClassifier>> = vec![
        Box::new(Knn::fit(&x, &y, 3, 5).unwrap()),
        Box::new(GaussianNb::fit(&x, &y, 3).unwrap()),
        Box::new(LogisticRegression::fit(&x, &y, 3, &LogisticConfig::default()).unwrap()),
    ];
    for m in &models {
        for p in &x {
            assert!((m.scores(p).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
