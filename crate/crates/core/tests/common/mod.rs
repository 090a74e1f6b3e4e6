//! Shared fixtures: small synthetic datasets with tiny feature maps so the
//! networks train in milliseconds.
#![allow(dead_code)]

use nfship::data::{build_vessel_centred, split, Dataset, SplitSpec};
use nfship::model::{ConvBranchConfig, NeuroFuzzyConfig, TrainConfig};
use nfship::rules::RuleSet;
use nfship::synthetic::{generate, ClassProfile, SyntheticConfig};

pub const SMALL_DIMS: [usize; 3] = [3, 3, 3];

pub fn synthetic(vessels: usize, classes: usize, ais_noise: f64, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        vessels,
        classes,
        ais_noise,
        seed,
        feature_dims: SMALL_DIMS,
        profile: ClassProfile::Uniform,
        ..Default::default()
    }
}

pub fn vessel_dataset(cfg: &SyntheticConfig) -> Dataset {
    let c = generate(cfg).unwrap();
    build_vessel_centred(&c.images, &c.ais).0
}

pub fn train_test(cfg: &SyntheticConfig) -> (Dataset, Dataset) {
    let ds = vessel_dataset(cfg);
    split(&ds, &SplitSpec { seed: cfg.seed, ..Default::default() }).unwrap()
}

pub fn small_branch() -> ConvBranchConfig {
    ConvBranchConfig {
        feature_dims: SMALL_DIMS,
        conv1_channels: 3,
        conv2_channels: 2,
        kernel: 3,
        padding: 1,
        a1_width: 6,
    }
}

pub fn small_nf_config(epochs: usize, seed: u64) -> NeuroFuzzyConfig {
    NeuroFuzzyConfig {
        branch: small_branch(),
        a2_width: 5,
        train: TrainConfig { epochs, batch_size: 16, seed, ..Default::default() },
        ..Default::default()
    }
}

pub fn rules_for(train: &Dataset, depth: usize) -> RuleSet {
    nfship::rules::fit_rules(
        &train.ais(),
        &train.labels(),
        train.label_map.names(),
        &nfship::cart::CartParams::with_depth(depth),
    )
    .unwrap()
}

pub mod gradients {
    //! Finite-difference checks of complete network losses on random tiny configurations.

    use nf_autograd::{grad_check, GradCheckConfig, GradCheckReport};
    use nfship::model::{
        loss_graph, Batch, BaselineConfig, BilinearBaseline, ConvBranchConfig, ForwardCtx, Network,
        NeuroFuzzyConfig, NeuroFuzzyModel, SlopeMode,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Net {
        NeuroFuzzy,
        Baseline,
    }

    fn check<N: Network<f64>>(net: &N, batch: &Batch<f64>, seed: u64) -> GradCheckReport {
        let mut store = net.store().clone();
        // A small step keeps the perturbation from crossing ReLU kinks of the random
        // network; its ~1e-9 roundoff is why near-zero gradients are judged on
        // absolute error below 1e-4.
        let cfg = GradCheckConfig { seed, step: 1e-6, abs_floor: 1e-4, ..Default::default() };
        grad_check(&mut store, cfg, |s| {
            loss_graph(net, s, batch, &mut ForwardCtx::batch_stats_only()).map_err(|e| match e {
                nfship::Error::Engine(inner) => inner,
                other => panic!("{other}"),
            })
        })
        .unwrap()
    }

    /// Batch-norm shifts start at 0, which puts constant channels exactly on the
    /// ReLU kink; move them and the scales to random non-default values.
    fn move_norm_params<R: Rng>(store: &mut nf_autograd::ParamStore<f64>, rng: &mut R) {
        for p in store.params_mut() {
            let (lo, hi) = if p.name.ends_with(".beta") {
                (0.1, 0.6)
            } else if p.name.ends_with(".gamma") {
                (0.5, 1.5)
            } else {
                continue;
            };
            for v in p.value.data_mut() {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mag = rng.random_range(lo..hi);
                *v = if p.name.ends_with(".beta") { sign * mag } else { mag };
            }
        }
    }

    /// One random configuration: data, rules, network widths, r, slope mode and batch.
    pub fn random_case(net: Net, seed: u64) -> GradCheckReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [rng.random_range(1..=2), rng.random_range(2..=3), rng.random_range(2..=3)];
        let cfg = nfship::synthetic::SyntheticConfig {
            vessels: 40,
            classes: rng.random_range(2..=3),
            ais_noise: 1.0,
            seed,
            feature_dims: dims,
            ..Default::default()
        };
        let ds = super::vessel_dataset(&cfg);
        let branch = ConvBranchConfig {
            feature_dims: dims,
            conv1_channels: rng.random_range(1..=3),
            conv2_channels: rng.random_range(1..=2),
            kernel: if rng.random_bool(0.5) { 3 } else { 1 },
            padding: 1,
            a1_width: rng.random_range(2..=4),
        };
        let n = rng.random_range(3..=6);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..ds.len())).collect();
        let batch = Batch::<f64>::from_rows(&ds, &rows).unwrap();
        match net {
            Net::NeuroFuzzy => {
                let rules = super::rules_for(&ds, rng.random_range(1..=3));
                let r = rng.random_range(1.0..14.0);
                let cfg = NeuroFuzzyConfig {
                    branch,
                    a2_width: rng.random_range(2..=4),
                    r_and: -r,
                    r_or: rng.random_range(1.0..14.0),
                    slope_mode: if rng.random_bool(0.75) { SlopeMode::PerSample } else { SlopeMode::Global },
                    softplus_guard: rng.random_bool(0.3),
                    global_slope_init: rng.random_range(0.05..0.5),
                    ..Default::default()
                };
                let mut m = NeuroFuzzyModel::<f64>::build(rules, cfg).unwrap();
                // Move the disjunction logits off their uniform start.
                let store = m.store_mut();
                if let Some(id) = store.id("disjunction.logits") {
                    for v in store.value_mut(id).data_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                }
                move_norm_params(m.store_mut(), &mut rng);
                check(&m, &batch, seed)
            }
            Net::Baseline => {
                let cfg = BaselineConfig {
                    branch,
                    ais_width: rng.random_range(2..=4),
                    fusion_width: rng.random_range(2..=4),
                    ..Default::default()
                };
                let mut m = BilinearBaseline::<f64>::build(ds.label_map.names().to_vec(), cfg).unwrap();
                move_norm_params(m.store_mut(), &mut rng);
                check(&m, &batch, seed)
            }
        }
    }
}
