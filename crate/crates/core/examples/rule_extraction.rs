//! Fit one-vs-all CART trees on AIS fields and read them as one DNF rule per class.
//!
//! cargo run --example rule_extraction

use nfship::cart::{fit_one_vs_all, CartParams};
use nfship::data::{build_vessel_centred, split, SplitSpec};
use nfship::rules::{extract_rules, CrispRuleClassifier};
use nfship::synthetic::{generate, SyntheticConfig};

fn main() -> nfship::Result<()> {
    let corpus = generate(&SyntheticConfig { vessels: 600, feature_dims: [2, 2, 2], ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let (train, test) = split(&ds, &SplitSpec::default())?;

    for depth in [2, 4] {
        let trees = fit_one_vs_all(&train.ais(), &train.labels(), train.n_classes(), &CartParams::with_depth(depth))?;
        let rules = extract_rules(&trees, train.label_map.names())?;
        println!("D = {depth}: {} comparisons in {} conditions", rules.comparison_count(), rules.condition_count());
        if depth == 2 {
            println!("{rules}");
        }
        let crisp = CrispRuleClassifier::new(rules, &train.labels());
        let hits = test.rows.iter().filter(|r| crisp.predict(&r.ais) == r.label).count();
        println!("crisp accuracy on {} held-out vessels: {:.3}", test.len(), hits as f64 / test.len() as f64);
    }
    Ok(())
}
