//! Fuzzy evaluation of crisp rules: sigmoid memberships, weighted exponential
//! means and a full trace of one vessel under soft and nearly crisp settings.
//!
//! cargo run --example fuzzy_inference

use nfship::cart::CartParams;
use nfship::data::build_vessel_centred;
use nfship::fuzzy::{membership_gt, membership_le, wem_and, wem_or, FuzzyRuleSet};
use nfship::rules::fit_rules;
use nfship::synthetic::{generate, SyntheticConfig};

fn main() -> nfship::Result<()> {
    println!("length 120 vs threshold 110, slope 0.5: > {:.3}, <= {:.3}", membership_gt(120.0, 0.5, 110.0), membership_le(120.0, 0.5, 110.0));
    for r in [2.14, 5.4, 14.0] {
        println!(
            "r = {r:>5}: and(0.2, 0.9) = {:.4}, or(0.2, 0.9) = {:.4}",
            wem_and(&[0.2, 0.9], -r)?,
            wem_or(&[0.2, 0.9], &[0.5, 0.5], r)?
        );
    }

    let corpus = generate(&SyntheticConfig { vessels: 400, feature_dims: [2, 2, 2], ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let rules = fit_rules(&ds.ais(), &ds.labels(), ds.label_map.names(), &CartParams::with_depth(3))?;
    let x = ds.rows[0].ais;
    println!("\nvessel {} ({}) with fields {x:?}", ds.rows[0].mmsi, ds.label_map.name(ds.rows[0].label));
    for (slope, r) in [(0.2, 2.14), (200.0, 50.0)] {
        let fuzzy = FuzzyRuleSet::uniform(rules.clone(), slope, -r, r);
        let scores = fuzzy.evaluate(&x)?;
        println!("slope {slope}, r = {r}: scores {scores:.3?} -> {}", ds.label_map.name(fuzzy.classify(&x)?));
    }
    let fuzzy = FuzzyRuleSet::uniform(rules, 0.2, -5.4, 5.4);
    let best = fuzzy.classify(&x)?;
    println!("\n{}", fuzzy.trace(&x)?[best]);
    Ok(())
}
