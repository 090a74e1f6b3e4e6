//! Whole-network losses against central finite differences at 64-bit.

mod common;

use common::gradients::{random_case, Net};

const CONFIGS: u64 = 100;

fn sweep(net: Net) {
    let mut worst = 0.0f64;
    for seed in 0..CONFIGS {
        let report = random_case(net, seed);
        assert!(report.passed, "{net:?} seed {seed}: {report}");
        worst = worst.max(report.max_rel_error);
    }
    println!("{net:?}: {CONFIGS} configurations, max rel. error {worst:.2e}");
}

#[test]
fn neuro_fuzzy_loss_gradients() {
    sweep(Net::NeuroFuzzy);
}

#[test]
fn baseline_loss_gradients() {
    sweep(Net::Baseline);
}
