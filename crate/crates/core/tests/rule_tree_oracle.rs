//! Crisp DNF evaluation must reproduce the tree's own decision everywhere.

mod common;

use nfship::cart::{fit_one_vs_all, CartParams, TreeNode};
use nfship::data::{AisVector, N_FIELDS};
use nfship::rules::extract_rules;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-field [min, max] of the data, widened by 10% on each side.
fn bounds(x: &[AisVector]) -> [(f64, f64); N_FIELDS] {
    std::array::from_fn(|f| {
        let lo = x.iter().map(|r| r[f]).fold(f64::INFINITY, f64::min);
        let hi = x.iter().map(|r| r[f]).fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1.0);
        (lo - pad, hi + pad)
    })
}

fn grid_point(mut code: usize, axes: &[[f64; 5]; N_FIELDS]) -> AisVector {
    std::array::from_fn(|f| {
        let v = axes[f][code % 5];
        code /= 5;
        v
    })
}

#[test]
fn dnf_matches_tree_on_random_points_and_grid() {
    let ds = common::vessel_dataset(&common::synthetic(1200, 5, 1.0, 3));
    let x = ds.ais();
    let b = bounds(&x);
    let axes: [[f64; 5]; N_FIELDS] =
        std::array::from_fn(|f| std::array::from_fn(|k| b[f].0 + (b[f].1 - b[f].0) * k as f64 / 4.0));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let random: Vec<AisVector> =
        (0..10_000).map(|_| std::array::from_fn(|f| rng.random_range(b[f].0..=b[f].1))).collect();
    for depth in [4, 6, 8, 10] {
        let trees = fit_one_vs_all(&x, &ds.labels(), ds.n_classes(), &CartParams::with_depth(depth)).unwrap();
        assert!(trees.iter().all(|t| matches!(t, TreeNode::Split { .. })), "every tree must split");
        let rules = extract_rules(&trees, ds.label_map.names()).unwrap();
        for (tree, rule) in trees.iter().zip(&rules.rules) {
            let mismatches = random
                .iter()
                .copied()
                .chain((0..5usize.pow(7)).map(|c| grid_point(c, &axes)))
                .chain(x.iter().copied())
                .filter(|p| tree.predict(p).0 != rule.holds(p))
                .count();
            assert_eq!(mismatches, 0, "class {} at depth {depth}", rule.class);
        }
    }
}

#[test]
fn deeper_trees_never_have_fewer_comparisons() {
    let ds = common::vessel_dataset(&common::synthetic(800, 5, 1.0, 9));
    let counts: Vec<usize> = [4, 6, 8, 10]
        .iter()
        .map(|&d| common::rules_for(&ds, d).comparison_count())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}
