//! Finite-difference checks of every primitive over random configurations.

use nf_autograd::verify::{check_primitive, corrupted_backward_check, primitive_names};

const CONFIGS: u64 = 100;

fn check(name: &str) {
    let out = check_primitive(name, CONFIGS).unwrap().expect("known primitive");
    println!("{name:<28} {CONFIGS} configurations, max rel. error {:.2e}", out.max_rel_error);
    assert!(out.passed(), "{name}: {:?}", out.failures.first());
}

#[test]
fn dense() {
    check("dense");
}

#[test]
fn conv2d() {
    check("conv2d");
}

#[test]
fn batch_norm_training_and_eval() {
    check("batch_norm");
}

#[test]
fn dropout_with_fixed_mask() {
    check("dropout");
}

#[test]
fn activations() {
    check("relu/leaky/sigmoid/softplus");
}

#[test]
fn elementwise_exp_log_scale_mul_add() {
    check("exp/log/scale/mul/add");
}

#[test]
fn flatten_and_reshape() {
    check("flatten");
}

#[test]
fn bilinear() {
    check("bilinear");
}

#[test]
fn softmax_and_cross_entropy() {
    check("softmax/cross_entropy");
}

#[test]
fn segment_softmax_and_logsumexp() {
    check("segment softmax/lse");
}

#[test]
fn segment_weighted_sums() {
    check("simplex weighted sum");
}

#[test]
fn broadcast_sum_mean() {
    check("broadcast/sum/mean");
}

#[test]
fn suite_lists_every_group() {
    assert_eq!(primitive_names().len(), 12);
}

#[test]
fn corrupted_backward_is_reported() {
    let report = corrupted_backward_check().unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error > 0.05, "{report}");
}
