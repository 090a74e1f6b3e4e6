//! Ship-type classification from AIS static records and detector image
//! features, with a neuro-fuzzy model built on decision-tree rules.
//!
//! Pipeline:
//! - [`data`]: AIS CSV and NFF1 feature files, joined into image-centred or
//!   vessel-centred datasets with seeded stratified splits.
//! - [`cart`] and [`rules`]: one-vs-all Gini trees per class, read as one DNF
//!   rule per class, plus the crisp rules-only classifier.
//! - [`fuzzy`]: sigmoid memberships and weighted exponential means that turn
//!   those rules into graded rule scores.
//! - [`model`]: the neuro-fuzzy network, whose convolutional branch predicts a
//!   slope per comparison and whose disjunction weights stay on the simplex,
//!   and the bilinear-fusion baseline.
//! - [`classical`] and [`evaluation`]: AIS-only baselines, macro F1, average
//!   precision, score tables and the depth by exponent ablation.
//! - [`synthetic`]: a seeded generator that stands in for real imagery and AIS.
//!
//! ```no_run
//! use nfship::cart::CartParams;
//! use nfship::data::{build_vessel_centred, split, SplitSpec};
//! use nfship::model::{NeuroFuzzyConfig, NeuroFuzzyModel};
//! use nfship::rules::fit_rules;
//! use nfship::synthetic::{generate, SyntheticConfig};
//!
//! # fn main() -> nfship::Result<()> {
//! let corpus = generate(&SyntheticConfig::default())?;
//! let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
//! let (train, test) = split(&ds, &SplitSpec::default())?;
//! let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(6))?;
//! let mut model = NeuroFuzzyModel::<f32>::build(rules, NeuroFuzzyConfig::default())?;
//! model.train(&train, |_, _| Ok(()))?;
//! let p = model.predict(test.feature(0), &test.rows[0].ais)?;
//! println!("{}\n{}", p.class, p.explanation);
//! # Ok(())
//! # }
//! ```

pub mod cart;
/// Command-line interface behind the `nfship` binary.
pub mod cli;
pub mod classical;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fuzzy;
pub mod model;
pub mod provenance;
pub mod rules;
pub mod synthetic;

pub use error::{Error, Result};
