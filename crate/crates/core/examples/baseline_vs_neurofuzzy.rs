//! Train the bilinear-fusion baseline and the neuro-fuzzy model with the same
//! split, seed and epochs, then compare them per class.
//!
//! cargo run --release --example baseline_vs_neurofuzzy

use nfship::cart::CartParams;
use nfship::data::{build_vessel_centred, split, SplitSpec};
use nfship::evaluation::{render_score_table, EvalReport};
use nfship::model::{predict_proba, BaselineConfig, BilinearBaseline, ConvBranchConfig, NeuroFuzzyConfig, NeuroFuzzyModel, TrainConfig};
use nfship::rules::fit_rules;
use nfship::synthetic::{generate, SyntheticConfig};

const DIMS: [usize; 3] = [8, 7, 7];

fn main() -> nfship::Result<()> {
    let corpus = generate(&SyntheticConfig { vessels: 400, ais_noise: 1.0, feature_dims: DIMS, seed: 2, ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let (train, test) = split(&ds, &SplitSpec::default())?;
    let branch = ConvBranchConfig { feature_dims: DIMS, conv1_channels: 8, conv2_channels: 8, a1_width: 32, ..Default::default() };
    let train_cfg = TrainConfig { epochs: 20, ..Default::default() };

    let mut base = BilinearBaseline::<f32>::build(
        train.label_map.names().to_vec(),
        BaselineConfig { branch, ais_width: 32, fusion_width: 32, train: train_cfg, ..Default::default() },
    )?;
    base.train(&train, |_, _| Ok(()))?;

    let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(6))?;
    let mut nf = NeuroFuzzyModel::<f32>::build(rules, NeuroFuzzyConfig { branch, a2_width: 32, train: train_cfg, ..Default::default() })?;
    nf.train(&train, |_, _| Ok(()))?;

    let reports = [
        EvalReport::from_probabilities("baseline", &test, &predict_proba(&base, &test, 128)?, Some(0))?,
        EvalReport::from_probabilities("neuro-fuzzy", &test, &predict_proba(&nf, &test, 128)?, Some(0))?,
    ];
    let columns: Vec<_> = reports.iter().map(|r| r.column()).collect();
    println!("{}", render_score_table(test.label_map.names(), &columns, "Macro F1"));
    Ok(())
}
