//! Full-size run on the imbalanced five-class synthetic profile: 256x7x7
//! features, depth-6 rules, default network, crisp rules as the reference.
//! Takes several minutes; pass `epochs` and `ais_noise` to shorten or vary it.
//!
//! cargo run --release --example synthetic_end_to_end -- 100 1.0

use std::time::Instant;

use nfship::cart::CartParams;
use nfship::data::{build_vessel_centred, filter_rare_classes, split, SplitSpec};
use nfship::evaluation::{macro_f1, render_score_table, EvalReport, ScoreColumn};
use nfship::model::{predict_proba, NeuroFuzzyConfig, NeuroFuzzyModel, TrainConfig};
use nfship::rules::{fit_rules, CrispRuleClassifier};
use nfship::synthetic::{generate, ClassProfile, SyntheticConfig, IMBALANCED_TOTAL};

fn main() -> nfship::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let ais_noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let start = Instant::now();

    let cfg = SyntheticConfig { vessels: IMBALANCED_TOTAL, ais_noise, profile: ClassProfile::Imbalanced, ..Default::default() };
    let corpus = generate(&cfg)?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    drop(corpus);
    let (ds, _) = filter_rare_classes(&ds, 20)?;
    let (train, test) = split(&ds, &SplitSpec::default())?;
    println!("{} train / {} test vessels, counts {:?}", train.len(), test.len(), ds.class_counts());

    let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(6))?;
    println!("{} comparisons, {} conditions", rules.comparison_count(), rules.condition_count());
    let crisp = CrispRuleClassifier::new(rules.clone(), &train.labels());
    let preds: Vec<usize> = test.rows.iter().map(|r| crisp.predict(&r.ais)).collect();
    let crisp_f1 = macro_f1(&preds, &test.labels(), test.n_classes())?;

    let cfg = NeuroFuzzyConfig { train: TrainConfig { epochs, ..Default::default() }, ..Default::default() };
    let mut model = NeuroFuzzyModel::<f32>::build(rules, cfg)?;
    let report = model.train(&train, |_, _| Ok(()))?;
    for l in report.losses.iter().step_by(10) {
        println!("epoch {:>3}: loss {:.4}", l.epoch, l.loss);
    }
    let nf = EvalReport::from_probabilities("neuro-fuzzy", &test, &predict_proba(&model, &test, 256)?, Some(0))?;
    let rules_col = ScoreColumn {
        name: "rules".into(),
        per_class: crisp_f1.per_class.iter().map(|c| (!c.absent).then_some(c.f1)).collect(),
        aggregate: Some(crisp_f1.macro_f1),
    };
    println!("{}", render_score_table(test.label_map.names(), &[nf.column(), rules_col], "Macro F1"));
    println!("{:.0} s", start.elapsed().as_secs_f64());
    Ok(())
}
