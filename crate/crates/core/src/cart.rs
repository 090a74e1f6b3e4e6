//! CART trees with the Gini criterion, grown one-vs-all over the AIS fields.

use serde::{Deserialize, Serialize};

use crate::data::{AisVector, N_FIELDS};
use crate::error::{Error, Result};

/// Gains closer than this are treated as ties.
const GAIN_EPS: f64 = 1e-12;

/// Growth limits. The split criterion is always Gini impurity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { max_depth: 6, min_samples_split: 2, min_samples_leaf: 5 }
    }
}

impl CartParams {
    pub fn with_depth(max_depth: usize) -> Self {
        CartParams { max_depth, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidInput("max_depth and min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary tree node. Internal nodes send `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        positive_fraction: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Leaf reached by `x`: `(positive, positive_fraction)`.
    pub fn predict(&self, x: &AisVector) -> (bool, f64) {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { positive_fraction, .. } => return (*positive_fraction > 0.5, *positive_fraction),
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Sample counts of every leaf, left to right.
    pub fn leaf_samples(&self) -> Vec<usize> {
        let mut out = Vec::new();
        fn walk(n: &TreeNode, out: &mut Vec<usize>) {
            match n {
                TreeNode::Leaf { samples, .. } => out.push(*samples),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

/// One admissible split at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Parent Gini minus the size-weighted child Gini.
    pub gain: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Every midpoint split over the rows `idx` that leaves `min_samples_leaf` on both
/// sides, ordered by feature then threshold.
pub fn split_candidates(x: &[AisVector], y: &[bool], idx: &[usize], min_samples_leaf: usize) -> Vec<SplitCandidate> {
    let n = idx.len();
    let pos_total = idx.iter().filter(|&&i| y[i]).count();
    let parent = gini(pos_total, n);
    let mut out = Vec::new();
    let mut order: Vec<usize> = idx.to_vec();
    for f in 0..N_FIELDS {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut pos_left = 0;
        for k in 1..n {
            pos_left += y[order[k - 1]] as usize;
            let (lo, hi) = (x[order[k - 1]][f], x[order[k]][f]);
            if lo == hi || k < min_samples_leaf || n - k < min_samples_leaf {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let child = (k as f64 * gini(pos_left, k) + (n - k) as f64 * gini(pos_total - pos_left, n - k)) / n as f64;
            out.push(SplitCandidate { feature: f, threshold, gain: parent - child });
        }
    }
    out
}

/// Highest-gain candidate; ties go to the lowest feature, then the lowest threshold.
pub fn best_split(candidates: &[SplitCandidate]) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for c in candidates {
        if best.is_none_or(|b| c.gain > b.gain + GAIN_EPS) {
            best = Some(*c);
        }
    }
    best
}

pub fn fit_tree(x: &[AisVector], y: &[bool], params: &CartParams) -> Result<TreeNode> {
    params.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows with {} labels", x.len(), y.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    Ok(grow(x, y, &mut idx, 0, params))
}

fn grow(x: &[AisVector], y: &[bool], idx: &mut [usize], depth: usize, p: &CartParams) -> TreeNode {
    let n = idx.len();
    let pos = idx.iter().filter(|&&i| y[i]).count();
    let leaf = TreeNode::Leaf { positive_fraction: pos as f64 / n as f64, samples: n };
    if pos == 0 || pos == n || depth >= p.max_depth || n < p.min_samples_split {
        return leaf;
    }
    let Some(best) = best_split(&split_candidates(x, y, idx, p.min_samples_leaf)) else {
        return leaf;
    };
    // stable partition: left rows first
    idx.sort_by_key(|&i| x[i][best.feature] > best.threshold);
    let n_left = idx.iter().filter(|&&i| x[i][best.feature] <= best.threshold).count();
    let (l, r) = idx.split_at_mut(n_left);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        left: Box::new(grow(x, y, l, depth + 1, p)),
        right: Box::new(grow(x, y, r, depth + 1, p)),
    }
}

/// Tree `c` separates class `c` from the rest.
pub fn fit_one_vs_all(x: &[AisVector], labels: &[usize], n_classes: usize, params: &CartParams) -> Result<Vec<TreeNode>> {
    if n_classes < 2 {
        return Err(Error::InvalidInput(format!("one-vs-all needs at least 2 classes, got {n_classes}")));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidInput(format!("label {l} outside {n_classes} classes")));
    }
    (0..n_classes)
        .map(|c| {
            let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            if !y.contains(&true) {
                return Err(Error::EmptyPositiveSet(format!("class {c}")));
            }
            fit_tree(x, &y, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_axis(f: usize, v: f64) -> AisVector {
        let mut x = [0.0; N_FIELDS];
        x[f] = v;
        x
    }

    fn loose() -> CartParams {
        CartParams { max_depth: 8, min_samples_split: 2, min_samples_leaf: 1 }
    }

    #[test]
    fn pure_input_is_single_leaf() {
        let x = vec![on_axis(0, 1.0), on_axis(0, 2.0)];
        let t = fit_tree(&x, &[true, true], &loose()).unwrap();
        assert_eq!(t, TreeNode::Leaf { positive_fraction: 1.0, samples: 2 });
        assert!(t.predict(&on_axis(3, 99.0)).0);
    }

    #[test]
    fn three_points_split_at_midpoint() {
        let x = vec![on_axis(2, 1.0), on_axis(2, 2.0), on_axis(2, 3.0)];
        let t = fit_tree(&x, &[true, true, false], &loose()).unwrap();
        match &t {
            TreeNode::Split { feature, threshold, left, right } => {
                assert_eq!((*feature, *threshold), (2, 2.5));
                assert_eq!(**left, TreeNode::Leaf { positive_fraction: 1.0, samples: 2 });
                assert_eq!(**right, TreeNode::Leaf { positive_fraction: 0.0, samples: 1 });
            }
            _ => panic!("expected a split"),
        }
        // boundary routes left
        assert!(t.predict(&on_axis(2, 2.5)).0);
    }

    #[test]
    fn identical_rows_give_majority_leaf() {
        let x = vec![[3.0; N_FIELDS]; 5];
        let t = fit_tree(&x, &[true, true, true, false, false], &loose()).unwrap();
        assert_eq!(t, TreeNode::Leaf { positive_fraction: 0.6, samples: 5 });
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let x: Vec<_> = (0..6).map(|i| on_axis(0, i as f64)).collect();
        let y = [true, false, false, false, false, false];
        let p = CartParams { max_depth: 4, min_samples_split: 2, min_samples_leaf: 2 };
        let t = fit_tree(&x, &y, &p).unwrap();
        assert!(t.leaf_samples().iter().all(|&s| s >= 2));
    }

    #[test]
    fn one_vs_all_shapes_and_errors() {
        let x: Vec<_> = (0..9).map(|i| on_axis(5, i as f64)).collect();
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let trees = fit_one_vs_all(&x, &labels, 3, &loose()).unwrap();
        assert_eq!(trees.len(), 3);
        for (c, t) in trees.iter().enumerate() {
            for (xi, &l) in x.iter().zip(&labels) {
                assert_eq!(t.predict(xi).0, l == c);
            }
        }
        assert!(matches!(fit_one_vs_all(&x, &labels, 4, &loose()), Err(Error::EmptyPositiveSet(_))));
        assert!(fit_one_vs_all(&x, &[0; 9], 1, &loose()).is_err());
    }

    #[test]
    fn tie_prefers_lowest_feature_then_threshold() {
        // features 1 and 4 separate equally well; feature 1 must win
        let x: Vec<AisVector> = (0..4)
            .map(|i| {
                let mut v = [0.0; N_FIELDS];
                v[1] = i as f64;
                v[4] = i as f64;
                v
            })
            .collect();
        let t = fit_tree(&x, &[true, true, false, false], &loose()).unwrap();
        assert!(matches!(t, TreeNode::Split { feature: 1, threshold, .. } if threshold == 1.5));
    }
}
