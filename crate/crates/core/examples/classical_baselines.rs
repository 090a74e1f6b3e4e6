//! AIS-only comparison: kNN, Gaussian naive Bayes, logistic regression and the
//! crisp rules, scored in one per-class F1 table.
//!
//! cargo run --example classical_baselines

use nfship::cart::CartParams;
use nfship::classical::{AisClassifier, GaussianNb, Knn, LogisticConfig, LogisticRegression};
use nfship::data::{build_vessel_centred, split, SplitSpec};
use nfship::evaluation::{macro_f1, render_score_table, ScoreColumn};
use nfship::rules::{fit_rules, CrispRuleClassifier};
use nfship::synthetic::{generate, SyntheticConfig};

fn column(name: &str, clf: &dyn AisClassifier, test: &nfship::data::Dataset) -> nfship::Result<ScoreColumn> {
    let preds: Vec<usize> = test.rows.iter().map(|r| clf.predict(&r.ais)).collect();
    let f1 = macro_f1(&preds, &test.labels(), test.n_classes())?;
    Ok(ScoreColumn {
        name: name.to_string(),
        per_class: f1.per_class.iter().map(|c| (!c.absent).then_some(c.f1)).collect(),
        aggregate: Some(f1.macro_f1),
    })
}

fn main() -> nfship::Result<()> {
    let corpus = generate(&SyntheticConfig { vessels: 800, ais_noise: 1.0, feature_dims: [2, 2, 2], ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let (train, test) = split(&ds, &SplitSpec::default())?;
    let (x, y, m) = (train.ais(), train.labels(), train.n_classes());

    let knn = Knn::fit(&x, &y, m, 5)?;
    let nb = GaussianNb::fit(&x, &y, m)?;
    let lr = LogisticRegression::fit(&x, &y, m, &LogisticConfig::default())?;
    let rules = CrispRuleClassifier::new(fit_rules(&x, &y, train.label_map.names(), &CartParams::with_depth(6))?, &y);
    let columns = vec![
        column("kNN", &knn, &test)?,
        column("NB", &nb, &test)?,
        column("LR", &lr, &test)?,
        column("rules", &rules, &test)?,
    ];
    println!("{}", render_score_table(test.label_map.names(), &columns, "Macro F1"));
    Ok(())
}
