//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//! Runs without the libtest harness so criteria execute one after another and
//! the end-to-end timing is not disturbed by parallel tests.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use nf_autograd::verify::{corrupted_backward_check, primitive_suite};
use nfship::cart::{fit_one_vs_all, CartParams, TreeNode};
use nfship::data::{build_vessel_centred, filter_rare_classes, split, AisVector, SplitSpec, N_FIELDS};
use nfship::evaluation::{ablation_sweep, macro_f1, ABLATION_DEPTHS, ABLATION_R};
use nfship::fuzzy::{argmax, check_simplex, membership_gt, membership_le, wem_and, wem_or, FuzzyRuleSet};
use nfship::model::{predict_proba, NeuroFuzzyConfig, NeuroFuzzyModel};
use nfship::rules::{extract_rules, fit_rules, CrispRuleClassifier};
use nfship::synthetic::{generate, ClassProfile, SyntheticConfig, IMBALANCED_TOTAL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `(1/r) ln((1 + e^r) / 2)`: both WEM operators on `{0, 1}` with equal weights.
fn pair_mean(r: f64) -> f64 {
    (r.exp().ln_1p() - std::f64::consts::LN_2) / r
}

fn wem_values() -> Outcome {
    let checks = [
        ("and r=-14", wem_and(&[0.0, 1.0], -14.0).unwrap(), pair_mean(-14.0), 0.0495105),
        ("and r=-5.4", wem_and(&[0.0, 1.0], -5.4).unwrap(), pair_mean(-5.4), 0.1275261),
        ("or r=5.4", wem_or(&[0.0, 1.0], &[0.5, 0.5], 5.4).unwrap(), pair_mean(5.4), 0.8724),
    ];
    for (name, got, oracle, reference) in checks {
        ensure((got - oracle).abs() <= 1e-6, || format!("{name}: {got} vs oracle {oracle}"))?;
        let tol = if name.starts_with("or") { 1e-4 } else { 1e-6 };
        ensure((got - reference).abs() <= tol, || format!("{name}: {got} vs reference {reference}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let n = rng.random_range(1..8);
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let r = rng.random_range(0.1..50.0);
        let (lo, hi) = c.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        for v in [wem_and(&c, -r).unwrap(), wem_or(&c, &w, r).unwrap()] {
            ensure(v >= lo - 1e-12 && v <= hi + 1e-12, || format!("case {i}: {v} outside [{lo}, {hi}]"))?;
        }
        let k = c[0];
        let same = vec![k; n];
        ensure(
            (wem_and(&same, -r).unwrap() - k).abs() < 1e-12 && (wem_or(&same, &w, r).unwrap() - k).abs() < 1e-12,
            || format!("case {i}: not idempotent at {k}"),
        )?;
    }
    Ok("3 point values within 1e-6 of the closed form; bounds and idempotence on 10^4 inputs".into())
}

fn membership_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, s, v) = (rng.random_range(-200.0..200.0), rng.random_range(-30.0..30.0), rng.random_range(-200.0..200.0));
        worst = worst.max((membership_le(x, s, v) + membership_gt(x, s, v) - 1.0).abs());
        ensure(membership_gt(v, s, v) == 0.5 && membership_le(v, s, v) == 0.5, || format!("f(v) != 0.5 at s={s}"))?;
    }
    ensure(worst <= 1e-12, || format!("complement error {worst:e}"))?;
    Ok(format!("max |f_le + f_gt - 1| = {worst:.1e} over 10^3 draws; f(v) = 0.5 exactly"))
}

fn noisy_ais(vessels: usize, seed: u64) -> (Vec<AisVector>, Vec<usize>, Vec<String>) {
    let ds = common::vessel_dataset(&common::synthetic(vessels, 5, 1.0, seed));
    (ds.ais(), ds.labels(), ds.label_map.names().to_vec())
}

fn field_bounds(x: &[AisVector]) -> [(f64, f64); N_FIELDS] {
    std::array::from_fn(|f| {
        let lo = x.iter().map(|r| r[f]).fold(f64::INFINITY, f64::min);
        let hi = x.iter().map(|r| r[f]).fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1.0);
        (lo - pad, hi + pad)
    })
}

fn rule_tree_oracle() -> Outcome {
    let (x, y, names) = noisy_ais(1200, 3);
    let b = field_bounds(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random: Vec<AisVector> =
        (0..10_000).map(|_| std::array::from_fn(|f| rng.random_range(b[f].0..=b[f].1))).collect();
    let grid = |mut code: usize| -> AisVector {
        std::array::from_fn(|f| {
            let k = code % 5;
            code /= 5;
            b[f].0 + (b[f].1 - b[f].0) * k as f64 / 4.0
        })
    };
    let mut checked = 0usize;
    for depth in [4, 6, 8, 10] {
        let trees = fit_one_vs_all(&x, &y, names.len(), &CartParams::with_depth(depth)).unwrap();
        ensure(trees.iter().all(|t| matches!(t, TreeNode::Split { .. })), || format!("D={depth}: a tree did not split"))?;
        let rules = extract_rules(&trees, &names).unwrap();
        for (tree, rule) in trees.iter().zip(&rules.rules) {
            for p in random.iter().copied().chain((0..5usize.pow(7)).map(grid)) {
                checked += 1;
                ensure(tree.predict(&p).0 == rule.holds(&p), || {
                    format!("D={depth} class {}: disagreement at {p:?}", rule.class)
                })?;
            }
        }
    }
    Ok(format!("{checked} (point, class, depth) evaluations agree, D in {{4,6,8,10}}"))
}

fn crisp_limit() -> Outcome {
    let (x, y, names) = noisy_ais(1500, 5);
    let rules = fit_rules(&x, &y, &names, &CartParams::with_depth(6)).unwrap();
    let comparisons: Vec<_> = rules.comparisons().copied().collect();
    let cfg = NeuroFuzzyConfig { branch: common::small_branch(), r_and: -50.0, r_or: 50.0, ..Default::default() };
    let mut model = NeuroFuzzyModel::<f64>::build(rules.clone(), cfg).unwrap();
    model.set_slope_override(Some(200.0));
    let b = field_bounds(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let candidates = x.iter().copied().chain((0..20_000).map(|_| std::array::from_fn(|f| rng.random_range(b[f].0..=b[f].1))));
    let feature = vec![0.0f32; 27];
    let (mut eligible, mut agree) = (0usize, 0usize);
    for p in candidates {
        if comparisons.iter().any(|c| c.margin(&p).abs() < 0.1) {
            continue;
        }
        let firing: Vec<usize> = (0..rules.n_classes()).filter(|&c| rules.rules[c].holds(&p)).collect();
        if firing.len() != 1 {
            continue;
        }
        eligible += 1;
        agree += (argmax(&model.forward(&feature, &p).unwrap()) == firing[0]) as usize;
    }
    ensure(eligible >= 1000, || format!("only {eligible} eligible points"))?;
    let rate = agree as f64 / eligible as f64;
    ensure(rate >= 0.99, || format!("agreement {rate:.4} on {eligible} points"))?;
    Ok(format!("agreement {:.2}% on {eligible} points (margin >= 0.1, one rule firing)", 100.0 * rate))
}

fn gradient_fidelity() -> Outcome {
    let mut lines = Vec::new();
    for out in primitive_suite(100).map_err(|e| e.to_string())? {
        ensure(out.passed(), || format!("primitive {}: {:?}", out.name, out.failures.first()))?;
        lines.push(format!("{} {:.1e}", out.name, out.max_rel_error));
    }
    for net in [common::gradients::Net::NeuroFuzzy, common::gradients::Net::Baseline] {
        let mut worst = 0.0f64;
        for seed in 0..100 {
            let r = common::gradients::random_case(net, seed);
            ensure(r.passed, || format!("{net:?} seed {seed}: {r}"))?;
            worst = worst.max(r.max_rel_error);
        }
        lines.push(format!("{net:?} {worst:.1e}"));
    }
    let control = corrupted_backward_check().map_err(|e| e.to_string())?;
    ensure(!control.passed, || "corrupted backward was not detected".into())?;
    Ok(format!(
        "100 configurations each, max rel. error: {}; negative control rejected ({:.1e})",
        lines.join(", "),
        control.max_rel_error
    ))
}

fn simplex_invariant() -> Outcome {
    let (train, _) = common::train_test(&common::synthetic(300, 4, 1.0, 7));
    let mut cfg = common::small_nf_config(20, 3);
    cfg.train.batch_size = 4;
    cfg.train.adam.learning_rate = 1e-2;
    let mut model = NeuroFuzzyModel::<f32>::build(common::rules_for(&train, 6), cfg).unwrap();
    let mut worst = 0.0f64;
    let report = model
        .train(&train, |_, m| {
            for w in m.disjunction_weights() {
                let dev = (w.iter().sum::<f64>() - 1.0).abs();
                worst = worst.max(dev);
                if w.iter().any(|&v| v < 0.0) || dev > 1e-6 {
                    return Err(nfship::Error::InvalidInput(format!("weights left the simplex: {w:?}")));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure(report.steps >= 1000, || format!("only {} steps", report.steps))?;
    // A five-condition rule's learned weights as reported for the smallest class.
    let reference = [0.1799, 0.1035, 0.1089, 0.2242, 0.3835];
    check_simplex(&reference).map_err(|e| e.to_string())?;
    let mut rules = common::rules_for(&train, 6);
    let i = rules.rules.iter().position(|r| r.conditions.len() >= 5).ok_or("no rule with five conditions")?;
    rules.rules[i].conditions.truncate(5);
    let mut table = FuzzyRuleSet::uniform(rules, 1.0, -5.4, 5.4);
    table.weights[i] = reference.to_vec();
    table.validate().map_err(|e| e.to_string())?;
    Ok(format!(
        "{} steps, max |sum - 1| = {worst:.1e}; reference weights (sum {}) accepted on a five-condition rule",
        report.steps,
        reference.iter().sum::<f64>()
    ))
}

/// Jitters length and draught and swaps 20% of vessels' dimensions for another class's.
const E2E_AIS_NOISE: f64 = 1.0;

struct E2eRun {
    nf_f1: f64,
    crisp_f1: f64,
    secs: f64,
    detail: String,
}

/// Imbalanced profile at full feature size: generate, build, split, fit rules, train 100 epochs, score.
fn e2e_run(ais_noise: f64) -> Result<E2eRun, String> {
    let start = Instant::now();
    let cfg = SyntheticConfig {
        vessels: IMBALANCED_TOTAL,
        classes: 5,
        ais_noise,
        profile: ClassProfile::Imbalanced,
        ..Default::default()
    };
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;
    let (ds, _) = build_vessel_centred(&corpus.images, &corpus.ais);
    drop(corpus);
    let (ds, removed) = filter_rare_classes(&ds, 20).map_err(|e| e.to_string())?;
    ensure(removed.is_empty(), || format!("classes removed: {removed:?}"))?;
    let (train, test) = split(&ds, &SplitSpec::default()).map_err(|e| e.to_string())?;
    drop(ds);
    let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(6))
        .map_err(|e| e.to_string())?;
    let crisp = CrispRuleClassifier::new(rules.clone(), &train.labels());
    let truth = test.labels();
    let m = test.n_classes();
    let crisp_pred: Vec<usize> = test.rows.iter().map(|r| crisp.predict(&r.ais)).collect();
    let crisp_f1 = macro_f1(&crisp_pred, &truth, m).unwrap().macro_f1;

    let mut model = NeuroFuzzyModel::<f32>::build(rules, NeuroFuzzyConfig::default()).map_err(|e| e.to_string())?;
    let report = model.train(&train, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let probs = predict_proba(&model, &test, 256).map_err(|e| e.to_string())?;
    let nf_pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let nf_f1 = macro_f1(&nf_pred, &truth, m).unwrap().macro_f1;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "AIS noise {ais_noise}: {} epochs, {} train / {} test vessels, NF macro-F1 {nf_f1:.4}, crisp rules {crisp_f1:.4}, {secs:.0} s",
        report.losses.len(),
        train.len(),
        test.len()
    );
    Ok(E2eRun { nf_f1, crisp_f1, secs, detail })
}

fn end_to_end() -> Outcome {
    let clean = e2e_run(0.0)?;
    let noisy = e2e_run(E2E_AIS_NOISE)?;
    let detail = format!("{}; {}", clean.detail, noisy.detail);
    ensure(clean.nf_f1 >= 0.90, || format!("NF below 0.90; {detail}"))?;
    ensure(noisy.nf_f1 > noisy.crisp_f1, || format!("NF does not beat crisp rules under AIS noise; {detail}"))?;
    ensure(clean.secs <= 600.0 && noisy.secs <= 600.0, || format!("a run exceeded 10 minutes; {detail}"))?;
    Ok(detail)
}

fn ablation_grid() -> Outcome {
    let (train, test) = common::train_test(&common::synthetic(400, 5, 1.0, 13));
    let report = ablation_sweep(
        &train,
        &test,
        &ABLATION_DEPTHS,
        &ABLATION_R,
        &CartParams::default(),
        &common::small_nf_config(2, 0),
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    ensure(report.cells.len() == 12, || format!("{} cells", report.cells.len()))?;
    ensure(report.cells.iter().all(|c| c.macro_f1.is_some()), || "a cell failed".into())?;
    let per_depth = |f: fn(&nfship::evaluation::AblationCell) -> Option<usize>| -> Vec<usize> {
        ABLATION_DEPTHS.iter().map(|&d| f(report.cell(d, ABLATION_R[0]).unwrap()).unwrap()).collect()
    };
    let (cmp, cond) = (per_depth(|c| c.comparisons), per_depth(|c| c.conditions));
    for v in [&cmp, &cond] {
        ensure(v.windows(2).all(|w| w[0] <= w[1]), || format!("counts decrease with depth: {v:?}"))?;
    }
    ensure(report.render().lines().count() == 7, || report.render())?;
    Ok(format!("12 cells; comparisons {cmp:?}, conditions {cond:?} over D = {ABLATION_DEPTHS:?}"))
}

fn cli(args: &[&str]) -> Result<(), String> {
    match nfship::cli::main_with_args(std::iter::once("nfship").chain(args.iter().copied())) {
        0 => Ok(()),
        code => Err(format!("{args:?} exited with {code}")),
    }
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let (x, y) = (fs::read(a).map_err(|e| e.to_string())?, fs::read(b).map_err(|e| e.to_string())?);
    ensure(x == y, || format!("{} and {} differ", a.display(), b.display()))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    // Same arguments both times: manifests record their input paths.
    let d = tmp.path().join("work");
    let s = |p: &str| d.join(p).to_str().unwrap().to_string();
    for run in ["a", "b"] {
        cli(&["gen-synthetic", "--vessels", "160", "--ais-noise", "1", "--seed", "5", "--feature-dims", "3x3x3", "--out", &s("raw")])?;
        cli(&["build-dataset", "--ais", &s("raw/ais.csv"), "--features", &s("raw/images.nff"), "--out", &s("data"), "--min-vessels", "3", "--seed", "5"])?;
        cli(&["train", "--data-dir", &s("data"), "--epochs", "2", "--seed", "5", "--out", &s("nf.json")])?;
        cli(&["evaluate", "--data-dir", &s("data"), "--checkpoint", &s("nf.json"), "--classical", "crisp,knn", "--out", &s("report.json")])?;
        fs::rename(&d, tmp.path().join(run)).map_err(|e| e.to_string())?;
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for f in [
        "raw/ais.csv",
        "raw/images.nff",
        "data/vc/manifest.json",
        "data/ic/manifest.json",
        "data/vc/features.nff",
        "nf.json",
        "nf.bin",
        "nf.losses.csv",
        "report.json",
    ] {
        same_bytes(&a.join(f), &b.join(f))?;
        compared += 1;
    }
    Ok(format!("{compared} artifacts byte-identical across two seeded runs (splits live in the manifests)"))
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("NF_LOG", "warn")).is_test(true).try_init();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("wem point values and bounds", wem_values),
        ("membership identities", membership_identities),
        ("rule-tree oracle", rule_tree_oracle),
        ("crisp limit", crisp_limit),
        ("gradient fidelity", gradient_fidelity),
        ("simplex invariant", simplex_invariant),
        ("synthetic end-to-end", end_to_end),
        ("ablation grid", ablation_grid),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut lines = Vec::new();
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, text) = match outcome {
            Ok(detail) => ("PASS", detail),
            Err(why) => ("FAIL", why),
        };
        let line = format!("{tag}  {name}: {text} [{:.1}s]", t.elapsed().as_secs_f64());
        println!("{line}");
        lines.push(line);
    }
    // The CLI criteria print their own tables; repeat the verdicts in one block.
    println!("\nacceptance summary");
    for line in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| l.starts_with("FAIL")).count();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
