//! AIS-only reference classifiers: k nearest neighbours, Gaussian naive Bayes and
//! multinomial logistic regression. All read the seven raw AIS fields.

use serde::{Deserialize, Serialize};

use crate::data::{AisVector, N_FIELDS};
use crate::error::{Error, Result};
use crate::fuzzy::argmax;
use crate::rules::CrispRuleClassifier;

/// Variance floor of the naive Bayes class likelihoods.
pub const NB_VAR_FLOOR: f64 = 1e-9;

/// A classifier over one AIS vector emitting a class distribution.
pub trait AisClassifier {
    fn n_classes(&self) -> usize;
    fn scores(&self, x: &AisVector) -> Vec<f64>;

    fn predict(&self, x: &AisVector) -> usize {
        argmax(&self.scores(x))
    }
}

fn check_training(x: &[AisVector], labels: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::EmptyDataset(format!("{} rows, {} labels", x.len(), labels.len())));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        *counts.get_mut(l).ok_or_else(|| Error::InvalidInput(format!("label {l} >= {n_classes} classes")))? += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidInput("training set holds a single class".into()));
    }
    Ok(counts)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    x: Vec<AisVector>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Knn {
    pub fn fit(x: &[AisVector], labels: &[usize], n_classes: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        check_training(x, labels, n_classes)?;
        let k = if k > x.len() {
            log::warn!("k = {k} exceeds {} training rows; using {}", x.len(), x.len());
            x.len()
        } else {
            k
        };
        Ok(Knn { k, x: x.to_vec(), labels: labels.to_vec(), n_classes })
    }

    /// Vote counts and distance sums per class among the k nearest rows.
    fn votes(&self, q: &AisVector) -> (Vec<usize>, Vec<f64>) {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
            .collect();
        d.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        let mut dist = vec![0.0; self.n_classes];
        for &(di, i) in &d[..self.k] {
            votes[self.labels[i]] += 1;
            dist[self.labels[i]] += di;
        }
        (votes, dist)
    }
}

impl AisClassifier for Knn {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Vote fractions.
    fn scores(&self, x: &AisVector) -> Vec<f64> {
        let (v, _) = self.votes(x);
        v.iter().map(|&c| c as f64 / self.k as f64).collect()
    }

    /// Majority vote; among tied classes the smallest distance sum wins.
    fn predict(&self, x: &AisVector) -> usize {
        let (v, d) = self.votes(x);
        let best = *v.iter().max().unwrap();
        (0..self.n_classes)
            .filter(|&c| v[c] == best)
            .min_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)))
            .unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNb {
    log_prior: Vec<f64>,
    mean: Vec<AisVector>,
    var: Vec<AisVector>,
}

impl GaussianNb {
    pub fn fit(x: &[AisVector], labels: &[usize], n_classes: usize) -> Result<Self> {
        let counts = check_training(x, labels, n_classes)?;
        let mut mean = vec![[0.0; N_FIELDS]; n_classes];
        let mut var = vec![[0.0; N_FIELDS]; n_classes];
        for (r, &l) in x.iter().zip(labels) {
            for f in 0..N_FIELDS {
                mean[l][f] += r[f] / counts[l] as f64;
            }
        }
        for (r, &l) in x.iter().zip(labels) {
            for f in 0..N_FIELDS {
                var[l][f] += (r[f] - mean[l][f]).powi(2) / counts[l] as f64;
            }
        }
        var.iter_mut().flatten().for_each(|v| *v = v.max(NB_VAR_FLOOR));
        let n = x.len() as f64;
        // An absent class keeps a zero prior.
        let log_prior = counts.iter().map(|&c| (c as f64 / n).ln()).collect();
        Ok(GaussianNb { log_prior, mean, var })
    }
}

impl AisClassifier for GaussianNb {
    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn scores(&self, x: &AisVector) -> Vec<f64> {
        let ll: Vec<f64> = (0..self.n_classes())
            .map(|c| {
                self.log_prior[c]
                    + (0..N_FIELDS)
                        .map(|f| {
                            let v = self.var[c][f];
                            -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x[f] - self.mean[c][f]).powi(2) / v)
                        })
                        .sum::<f64>()
            })
            .collect();
        softmax(&ll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { learning_rate: 0.5, iterations: 2000, l2: 0.0 }
    }
}

/// Softmax regression on standardised fields, fitted by full-batch gradient
/// descent from zero weights (so it is deterministic without a seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticRegression {
    center: AisVector,
    scale: AisVector,
    /// `[m][N_FIELDS + 1]`, bias last.
    weights: Vec<Vec<f64>>,
}

impl LogisticRegression {
    pub fn fit(x: &[AisVector], labels: &[usize], n_classes: usize, cfg: &LogisticConfig) -> Result<Self> {
        check_training(x, labels, n_classes)?;
        let n = x.len() as f64;
        let mut center = [0.0; N_FIELDS];
        let mut scale = [0.0; N_FIELDS];
        for r in x {
            for f in 0..N_FIELDS {
                center[f] += r[f] / n;
            }
        }
        for r in x {
            for f in 0..N_FIELDS {
                scale[f] += (r[f] - center[f]).powi(2) / n;
            }
        }
        scale.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        let z: Vec<[f64; N_FIELDS]> =
            x.iter().map(|r| std::array::from_fn(|f| (r[f] - center[f]) / scale[f])).collect();
        let mut w = vec![vec![0.0; N_FIELDS + 1]; n_classes];
        for _ in 0..cfg.iterations {
            let mut grad = vec![vec![0.0; N_FIELDS + 1]; n_classes];
            for (zi, &y) in z.iter().zip(labels) {
                let p = softmax(&logits(&w, zi));
                for c in 0..n_classes {
                    let e = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
                    for f in 0..N_FIELDS {
                        grad[c][f] += e * zi[f];
                    }
                    grad[c][N_FIELDS] += e;
                }
            }
            for c in 0..n_classes {
                for f in 0..=N_FIELDS {
                    let reg = if f < N_FIELDS { cfg.l2 * w[c][f] } else { 0.0 };
                    w[c][f] -= cfg.learning_rate * (grad[c][f] + reg);
                }
            }
        }
        Ok(LogisticRegression { center, scale, weights: w })
    }
}

fn logits(w: &[Vec<f64>], z: &[f64; N_FIELDS]) -> Vec<f64> {
    w.iter().map(|wc| wc[N_FIELDS] + z.iter().zip(wc).map(|(a, b)| a * b).sum::<f64>()).collect()
}

impl AisClassifier for LogisticRegression {
    fn n_classes(&self) -> usize {
        self.weights.len()
    }

    fn scores(&self, x: &AisVector) -> Vec<f64> {
        let z = std::array::from_fn(|f| (x[f] - self.center[f]) / self.scale[f]);
        softmax(&logits(&self.weights, &z))
    }
}

/// Leaf purities normalised to sum to one; the fallback class takes all mass
/// when no rule fires.
impl AisClassifier for CrispRuleClassifier {
    fn n_classes(&self) -> usize {
        self.rules.n_classes()
    }

    fn scores(&self, x: &AisVector) -> Vec<f64> {
        let s = CrispRuleClassifier::scores(self, x);
        let total: f64 = s.iter().sum();
        if total > 0.0 {
            s.iter().map(|v| v / total).collect()
        } else {
            (0..s.len()).map(|c| if c == self.fallback { 1.0 } else { 0.0 }).collect()
        }
    }

    fn predict(&self, x: &AisVector) -> usize {
        CrispRuleClassifier::predict(self, x)
    }
}
