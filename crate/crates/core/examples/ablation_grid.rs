//! Sweep tree depth against the WEM exponent and print the macro-F1 grid.
//!
//! cargo run --release --example ablation_grid

use nfship::cart::CartParams;
use nfship::data::{build_vessel_centred, split, SplitSpec};
use nfship::evaluation::{ablation_sweep, ABLATION_DEPTHS, ABLATION_R};
use nfship::model::{ConvBranchConfig, NeuroFuzzyConfig, TrainConfig};
use nfship::synthetic::{generate, SyntheticConfig};

const DIMS: [usize; 3] = [4, 3, 3];

fn main() -> nfship::Result<()> {
    let corpus = generate(&SyntheticConfig { vessels: 400, ais_noise: 1.0, feature_dims: DIMS, ..Default::default() })?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    let (train, test) = split(&ds, &SplitSpec::default())?;
    let cfg = NeuroFuzzyConfig {
        branch: ConvBranchConfig { feature_dims: DIMS, conv1_channels: 4, conv2_channels: 4, a1_width: 16, ..Default::default() },
        a2_width: 16,
        train: TrainConfig { epochs: 10, ..Default::default() },
        ..Default::default()
    };
    let report = ablation_sweep(&train, &test, &ABLATION_DEPTHS, &ABLATION_R, &CartParams::default(), &cfg, |c| {
        eprintln!("D = {:>2}, r = {:>5}: {} comparisons", c.depth, c.r, c.comparisons.unwrap_or(0));
    })?;
    println!("{}", report.render());
    Ok(())
}
