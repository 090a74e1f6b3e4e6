//! Train the neuro-fuzzy model on a small synthetic set, explain a prediction
//! and round-trip the checkpoint.
//!
//! cargo run --release --example train_neurofuzzy

use nf_autograd::AdamConfig;
use nfship::cart::CartParams;
use nfship::data::{build_vessel_centred, split, SplitSpec};
use nfship::evaluation::EvalReport;
use nfship::model::{predict_proba, ConvBranchConfig, NeuroFuzzyConfig, NeuroFuzzyModel, TrainConfig};
use nfship::rules::fit_rules;
use nfship::synthetic::{generate, SyntheticConfig};

const DIMS: [usize; 3] = [16, 7, 7];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&SyntheticConfig { vessels: 500, ais_noise: 1.0, feature_dims: DIMS, seed: 1, ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let (train, test) = split(&ds, &SplitSpec::default())?;
    let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(6))?;
    println!("{} comparisons feed the slope head", rules.comparison_count());

    let cfg = NeuroFuzzyConfig {
        branch: ConvBranchConfig { feature_dims: DIMS, conv1_channels: 16, conv2_channels: 8, a1_width: 64, ..Default::default() },
        a2_width: 64,
        train: TrainConfig { epochs: 30, adam: AdamConfig { learning_rate: 1e-3, ..Default::default() }, ..Default::default() },
        ..Default::default()
    };
    let mut model = NeuroFuzzyModel::<f32>::build(rules, cfg)?;
    let report = model.train(&train, |_, _| Ok(()))?;
    let first = report.losses.first().map(|l| l.loss).unwrap_or(f64::NAN);
    let last = report.losses.last().map(|l| l.loss).unwrap_or(f64::NAN);
    println!("{} steps, loss {first:.4} -> {last:.4}", report.steps);

    let probs = predict_proba(&model, &test, 128)?;
    let eval = EvalReport::from_probabilities("neuro-fuzzy", &test, &probs, Some(0))?;
    println!("held-out macro-F1 {:.3}", eval.f1.macro_f1);

    let p = model.predict(test.feature(0), &test.rows[0].ais)?;
    println!("\nvessel {} is {}, predicted {} ({:.3?})", test.rows[0].mmsi, test.label_map.name(test.rows[0].label), p.class, p.probabilities);
    println!("{}", p.explanation);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("nf.json");
    model.save(&path)?;
    let back = NeuroFuzzyModel::<f32>::load(&path)?;
    assert_eq!(back.forward(test.feature(0), &test.rows[0].ais)?, model.forward(test.feature(0), &test.rows[0].ais)?);
    println!("checkpoint reloads to identical outputs");
    Ok(())
}
