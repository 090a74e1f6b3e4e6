//! Command-line front end. Every command returns a JSON summary; with `--json`
//! it is printed to stdout, otherwise a human-readable rendering is.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::cart::CartParams;
use crate::classical::{AisClassifier, GaussianNb, Knn, LogisticConfig, LogisticRegression, NB_VAR_FLOOR};
use crate::data::{
    build_image_centred, build_vessel_centred, filter_rare_classes, load_ais_csv, load_dataset, read_nff_file,
    save_dataset, split_indices, Dataset, DatasetManifest, SplitRecord, SplitSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    ablation_sweep, render_score_table, EvalReport, ScoreColumn, ABLATION_DEPTHS, ABLATION_R,
};
use crate::model::{
    checkpoint_kind, predict_proba, read_loss_csv, write_loss_csv, BaselineConfig, BilinearBaseline,
    ConvBranchConfig, NeuroFuzzyConfig, NeuroFuzzyModel, SlopeMode, TrainConfig, BASELINE_KIND, NEUROFUZZY_KIND,
};
use crate::provenance::Provenance;
use crate::rules::{fit_rules, CrispRuleClassifier, RuleSet};
use crate::synthetic::{self, ClassProfile, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(name = "nfship", version, about = "Neuro-fuzzy ship type classification from image features and AIS data")]
pub struct Cli {
    /// Print a machine-readable JSON summary instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Join AIS records with image features into image- and vessel-centred datasets.
    BuildDataset(BuildDatasetArgs),
    /// Fit one-vs-all trees on the training split and write the rule set.
    ExtractRules(ExtractRulesArgs),
    /// Train a network and write its checkpoint and loss trace.
    Train(TrainArgs),
    /// Score checkpoints and reference classifiers on the test split.
    Evaluate(EvaluateArgs),
    /// Classify one dataset row, optionally explaining the decision.
    Predict(PredictArgs),
    /// Sweep tree depth and r levels.
    Ablate(AblateArgs),
    /// Write a synthetic AIS table, feature file and ground truth.
    GenSynthetic(GenSyntheticArgs),
    /// Merge loss traces into one plot-ready CSV.
    ExportLosses(ExportLossesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ic,
    Vc,
}

impl KindArg {
    fn dir(self) -> &'static str {
        match self {
            KindArg::Ic => "ic",
            KindArg::Vc => "vc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Neurofuzzy,
    Baseline,
    GlobalSlopes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Uniform,
    Imbalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassicalArg {
    Knn,
    Nb,
    Lr,
    Crisp,
}

/// Location of a built dataset.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory written by build-dataset.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "vc")]
    pub dataset: KindArg,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, DatasetManifest)> {
        load_dataset(&self.data_dir.join(self.dataset.dir()))
    }

    fn load_split(&self) -> Result<(Dataset, Dataset, DatasetManifest)> {
        let (ds, manifest) = self.load()?;
        let split = manifest.split.as_ref().ok_or_else(|| {
            Error::Config(format!("{} has no recorded split; rebuild it with build-dataset", self.data_dir.display()))
        })?;
        Ok((ds.subset(&split.indices.train), ds.subset(&split.indices.test), manifest))
    }
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub ais: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Classes with this many vessels or fewer are removed.
    #[arg(long, default_value_t = 20)]
    pub min_vessels: usize,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExtractRulesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 2)]
    pub min_split: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "neurofuzzy")]
    pub model: ModelArg,
    /// Rule set from extract-rules; fitted on the training split at --depth when absent.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// Andness/orness level: r_and = -r, r_or = r.
    #[arg(long, default_value_t = 5.4)]
    pub r: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep slopes positive with softplus instead of Leaky ReLU.
    #[arg(long)]
    pub softplus_guard: bool,
    /// Checkpoint manifest path; the parameter blob is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV, defaults to `<out>.losses.csv`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// AIS-only reference classifiers fitted on the training split.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub classical: Vec<ClassicalArg>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Rule depth for the crisp classifier.
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// Write the reports as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Row index into the dataset.
    #[arg(long, conflicts_with = "mmsi")]
    pub row: Option<usize>,
    /// First row of this vessel.
    #[arg(long)]
    pub mmsi: Option<u64>,
    /// Print the winning rule's conditions, weights and memberships.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = ABLATION_DEPTHS.to_vec())]
    pub depths: Vec<usize>,
    #[arg(long = "r", value_delimiter = ',', default_values_t = ABLATION_R.to_vec())]
    pub r_levels: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub vessels: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Feature noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// AIS corruption level: dimension jitter and swapped vessel profiles.
    #[arg(long, default_value_t = 0.0)]
    pub ais_noise: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature dimensions as CxHxW.
    #[arg(long, default_value = "256x7x7", value_parser = parse_dims)]
    pub feature_dims: [usize; 3],
}

#[derive(Debug, Args)]
pub struct ExportLossesArgs {
    /// Loss CSVs; each becomes one column named after its file stem.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        &[c, h, w] if c > 0 && h > 0 && w > 0 => Ok([c, h, w]),
        _ => Err(format!("expected three positive sizes like 256x7x7, got {s:?}")),
    }
}

/// Run a parsed command, returning its summary and a text rendering.
pub fn run(cli: &Cli) -> Result<(Value, String)> {
    match &cli.command {
        Command::BuildDataset(a) => build_dataset(a),
        Command::ExtractRules(a) => extract_rules(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Ablate(a) => ablate(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::ExportLosses(a) => export_losses(a),
    }
}

/// Parse `args`, run, print, and return the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("NF_LOG", "info")).try_init();
    match run(&cli) {
        Ok((summary, text)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
            } else {
                print!("{text}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn build_dataset(a: &BuildDatasetArgs) -> Result<(Value, String)> {
    let ais = load_ais_csv(&a.ais)?;
    let images = read_nff_file(&a.features)?;
    let spec = SplitSpec { train_fraction: a.train_fraction, seed: a.seed, by_mmsi: true };
    let mut summary = serde_json::Map::new();
    let mut text = format!(
        "AIS rows {} kept {} (incomplete {}, parse errors {}, duplicates {}); images {}\n",
        ais.report.rows_read,
        ais.report.retained,
        ais.report.incomplete,
        ais.report.parse_errors,
        ais.report.duplicates,
        images.records.len()
    );
    summary.insert("ais".into(), serde_json::to_value(&ais.report)?);
    for kind in [KindArg::Ic, KindArg::Vc] {
        let (ds, join) = match kind {
            KindArg::Ic => build_image_centred(&images, &ais),
            KindArg::Vc => build_vessel_centred(&images, &ais),
        };
        let (ds, removed) = filter_rare_classes(&ds, a.min_vessels)?;
        let indices = split_indices(&ds, &spec)?;
        let config = json!({
            "ais": a.ais, "features": a.features, "kind": kind.dir(),
            "min_vessels": a.min_vessels, "split": spec,
        });
        let dir = a.out.join(kind.dir());
        let split = SplitRecord { spec, indices };
        save_dataset(&dir, &ds, Some(split.clone()), Provenance::new(Some(a.seed), &config))?;
        text += &format!(
            "{}: {} rows ({} train / {} test), classes {:?}, removed {:?} -> {}\n",
            kind.dir(),
            ds.len(),
            split.indices.train.len(),
            split.indices.test.len(),
            ds.label_map.names(),
            removed,
            dir.display()
        );
        summary.insert(
            kind.dir().into(),
            json!({
                "rows": ds.len(), "train": split.indices.train.len(), "test": split.indices.test.len(),
                "classes": ds.label_map.names(), "class_counts": ds.class_counts(),
                "removed": removed, "join": join, "dir": dir,
            }),
        );
    }
    Ok((Value::Object(summary), text))
}

fn cart_params(depth: usize, min_leaf: usize, min_split: usize) -> CartParams {
    CartParams { max_depth: depth, min_samples_leaf: min_leaf, min_samples_split: min_split }
}

fn rules_summary(rules: &RuleSet) -> Value {
    json!({
        "comparisons": rules.comparison_count(),
        "conditions": rules.condition_count(),
        "per_class": rules.rules.iter().map(|r| json!({
            "class": r.class, "conditions": r.conditions.len(), "comparisons": r.comparison_count(),
        })).collect::<Vec<_>>(),
    })
}

fn extract_rules(a: &ExtractRulesArgs) -> Result<(Value, String)> {
    let (train, _, _) = a.data.load_split()?;
    let params = cart_params(a.depth, a.min_leaf, a.min_split);
    let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &params)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&a.out, rules.to_json()?).map_err(|e| Error::io(&a.out, e))?;
    let mut text = String::new();
    for r in &rules.rules {
        text += &format!("{r}\n");
    }
    text += &format!(
        "{} conditions, {} comparisons -> {}\n",
        rules.condition_count(),
        rules.comparison_count(),
        a.out.display()
    );
    let mut summary = rules_summary(&rules);
    summary["out"] = json!(a.out);
    Ok((summary, text))
}

fn load_rules(path: &Path) -> Result<RuleSet> {
    RuleSet::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn train(a: &TrainArgs) -> Result<(Value, String)> {
    let (train, _, manifest) = a.data.load_split()?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        adam: nf_autograd::AdamConfig { learning_rate: a.lr, ..Default::default() },
        seed: a.seed,
    };
    let branch = ConvBranchConfig { feature_dims: manifest.feature_dims, ..Default::default() };
    let log_epoch = |epoch: usize, total: usize, loss: f64| log::info!("epoch {epoch}/{total} loss {loss:.5}");
    let (report, extra) = match a.model {
        ModelArg::Neurofuzzy | ModelArg::GlobalSlopes => {
            let rules = match &a.rules {
                Some(p) => load_rules(p)?,
                None => fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &CartParams::with_depth(a.depth))?,
            };
            let cfg = NeuroFuzzyConfig {
                branch,
                r_and: -a.r,
                r_or: a.r,
                softplus_guard: a.softplus_guard,
                slope_mode: if a.model == ModelArg::GlobalSlopes { SlopeMode::Global } else { SlopeMode::PerSample },
                train: tc,
                ..Default::default()
            };
            let mut model = NeuroFuzzyModel::<f32>::build(rules, cfg)?;
            let batches = train.len().div_ceil(a.batch_size.max(1));
            let report = model.train(&train, |s, _| {
                if s.batch + 1 == batches {
                    log_epoch(s.epoch, a.epochs, s.loss);
                }
                Ok(())
            })?;
            model.save(&a.out)?;
            (report, rules_summary(model.rules()))
        }
        ModelArg::Baseline => {
            let cfg = BaselineConfig { branch, train: tc, ..Default::default() };
            let mut model = BilinearBaseline::<f32>::build(train.label_map.names().to_vec(), cfg)?;
            let report = model.train(&train, |_, _| Ok(()))?;
            model.save(&a.out)?;
            (report, json!({ "parameters": nf_autograd::ParamStore::parameter_count(crate::model::Network::store(&model)) }))
        }
    };
    let losses_path = a.losses.clone().unwrap_or_else(|| a.out.with_extension("losses.csv"));
    let f = fs::File::create(&losses_path).map_err(|e| Error::io(&losses_path, e))?;
    write_loss_csv(std::io::BufWriter::new(f), &report.losses)?;
    let last = report.losses.last().map(|l| l.loss);
    let text = format!(
        "trained {:?} for {} epochs ({} steps), final loss {}\ncheckpoint {}\nlosses {}\n",
        a.model,
        a.epochs,
        report.steps,
        last.map(|l| format!("{l:.5}")).unwrap_or_else(|| "n/a".into()),
        a.out.display(),
        losses_path.display()
    );
    let summary = json!({
        "model": format!("{:?}", a.model).to_lowercase(), "epochs": a.epochs, "steps": report.steps,
        "final_loss": last, "checkpoint": a.out, "losses": losses_path, "details": extra,
    });
    Ok((summary, text))
}

/// A trained network of either kind.
enum Loaded {
    NeuroFuzzy(NeuroFuzzyModel<f32>),
    Baseline(BilinearBaseline<f32>),
}

impl Loaded {
    fn open(path: &Path) -> Result<Self> {
        match checkpoint_kind(path)?.as_str() {
            NEUROFUZZY_KIND => Ok(Loaded::NeuroFuzzy(NeuroFuzzyModel::load(path)?)),
            BASELINE_KIND => Ok(Loaded::Baseline(BilinearBaseline::load(path)?)),
            other => Err(Error::Config(format!("{}: unknown model kind {other:?}", path.display()))),
        }
    }

    fn class_names(&self) -> Vec<String> {
        match self {
            Loaded::NeuroFuzzy(m) => m.class_names(),
            Loaded::Baseline(m) => m.class_names().to_vec(),
        }
    }

    fn proba(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        if ds.label_map.names() != self.class_names().as_slice() {
            return Err(Error::Config(format!(
                "checkpoint classes {:?} differ from dataset classes {:?}",
                self.class_names(),
                ds.label_map.names()
            )));
        }
        match self {
            Loaded::NeuroFuzzy(m) => predict_proba(m, ds, 256),
            Loaded::Baseline(m) => predict_proba(m, ds, 64),
        }
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<(Value, String)> {
    if a.checkpoints.is_empty() && a.classical.is_empty() {
        return Err(Error::Config("nothing to evaluate: pass --checkpoint and/or --classical".into()));
    }
    let (train, test, manifest) = a.data.load_split()?;
    let mut reports = Vec::new();
    for path in &a.checkpoints {
        let model = Loaded::open(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        reports.push(EvalReport::from_probabilities(&name, &test, &model.proba(&test)?, manifest.provenance.seed)?);
    }
    let (x, y, m) = (train.ais(), train.labels(), train.n_classes());
    for c in &a.classical {
        let (name, settings, clf): (&str, String, Box<dyn AisClassifier>) = match c {
            ClassicalArg::Knn => ("kNN", format!("k = {}, Euclidean on raw fields", a.k), Box::new(Knn::fit(&x, &y, m, a.k)?)),
            ClassicalArg::Nb => (
                "NB",
                format!("Gaussian, variance floor {NB_VAR_FLOOR:e}"),
                Box::new(GaussianNb::fit(&x, &y, m)?),
            ),
            ClassicalArg::Lr => {
                let cfg = LogisticConfig::default();
                let settings = format!("standardized fields, learning rate {}, {} iterations, l2 {}", cfg.learning_rate, cfg.iterations, cfg.l2);
                ("LR", settings, Box::new(LogisticRegression::fit(&x, &y, m, &cfg)?))
            }
            ClassicalArg::Crisp => {
                let rules = fit_rules(&x, &y, train.label_map.names(), &CartParams::with_depth(a.depth))?;
                ("rules", format!("depth {}", a.depth), Box::new(CrispRuleClassifier::new(rules, &y)))
            }
        };
        let probs: Vec<Vec<f64>> = test.rows.iter().map(|r| one_hot_or_scores(clf.as_ref(), &r.ais)).collect();
        let mut report = EvalReport::from_probabilities(name, &test, &probs, manifest.provenance.seed)?;
        report.notes.push(format!("settings: {settings}"));
        reports.push(report);
    }
    let columns: Vec<ScoreColumn> = reports.iter().map(|r| r.column()).collect();
    let label = if a.data.dataset == KindArg::Ic { "mAP" } else { "Macro F1" };
    let mut text = render_score_table(test.label_map.names(), &columns, label);
    for r in &reports {
        for n in &r.notes {
            text += &format!("note ({}): {n}\n", r.model);
        }
    }
    if let Some(out) = &a.out {
        write_json(out, &reports)?;
    }
    Ok((serde_json::to_value(&reports)?, text))
}

/// Scores whose argmax is the classifier's own decision.
fn one_hot_or_scores(clf: &dyn AisClassifier, x: &crate::data::AisVector) -> Vec<f64> {
    let s = clf.scores(x);
    let p = clf.predict(x);
    if crate::fuzzy::argmax(&s) == p {
        s
    } else {
        (0..s.len()).map(|c| if c == p { 1.0 } else { 0.0 }).collect()
    }
}

fn predict(a: &PredictArgs) -> Result<(Value, String)> {
    let (ds, _) = a.data.load()?;
    let row = match (a.row, a.mmsi) {
        (Some(r), _) if r < ds.len() => r,
        (Some(r), _) => return Err(Error::InvalidInput(format!("row {r} out of range (dataset has {})", ds.len()))),
        (None, Some(m)) => ds
            .rows
            .iter()
            .position(|r| r.mmsi == m)
            .ok_or_else(|| Error::InvalidInput(format!("no row for mmsi {m}")))?,
        (None, None) => return Err(Error::InvalidInput("pass --row or --mmsi".into())),
    };
    let meta = &ds.rows[row];
    let truth = ds.label_map.name(meta.label).to_string();
    match Loaded::open(&a.checkpoint)? {
        Loaded::NeuroFuzzy(m) => {
            let p = m.predict(ds.feature(row), &meta.ais)?;
            let mut text = format!("mmsi {} predicted {} (truth {truth}), p = {:.4}\n", meta.mmsi, p.class, p.probabilities[p.label]);
            if a.explain {
                text += &p.explanation.to_string();
            }
            let mut v = serde_json::to_value(&p)?;
            v["mmsi"] = json!(meta.mmsi);
            v["truth"] = json!(truth);
            if !a.explain {
                v.as_object_mut().unwrap().remove("explanation");
            }
            Ok((v, text))
        }
        Loaded::Baseline(m) => {
            if a.explain {
                log::warn!("the baseline has no rule explanation");
            }
            let one = ds.subset(&[row]);
            let probs = Loaded::Baseline(m.clone()).proba(&one)?.remove(0);
            let label = crate::fuzzy::argmax(&probs);
            let class = ds.label_map.name(label).to_string();
            let text = format!("mmsi {} predicted {class} (truth {truth}), p = {:.4}\n", meta.mmsi, probs[label]);
            Ok((json!({ "mmsi": meta.mmsi, "label": label, "class": class, "probabilities": probs, "truth": truth }), text))
        }
    }
}

fn ablate(a: &AblateArgs) -> Result<(Value, String)> {
    let (train, test, manifest) = a.data.load_split()?;
    let base = NeuroFuzzyConfig {
        branch: ConvBranchConfig { feature_dims: manifest.feature_dims, ..Default::default() },
        train: TrainConfig { epochs: a.epochs, seed: a.seed, ..Default::default() },
        ..Default::default()
    };
    let report = ablation_sweep(&train, &test, &a.depths, &a.r_levels, &CartParams::default(), &base, |c| {
        match (c.macro_f1, &c.error) {
            (Some(f1), _) => log::info!("D={} r={}: macro F1 {f1:.4}, {} comparisons", c.depth, c.r, c.comparisons.unwrap_or(0)),
            (None, err) => log::warn!("D={} r={}: failed ({})", c.depth, c.r, err.as_deref().unwrap_or("unknown error")),
        }
    })?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok((serde_json::to_value(&report)?, report.render()))
}

fn gen_synthetic(a: &GenSyntheticArgs) -> Result<(Value, String)> {
    let cfg = SyntheticConfig {
        vessels: a.vessels,
        classes: a.classes,
        noise: a.noise,
        ais_noise: a.ais_noise,
        seed: a.seed,
        profile: match a.profile {
            ProfileArg::Uniform => ClassProfile::Uniform,
            ProfileArg::Imbalanced => ClassProfile::Imbalanced,
        },
        feature_dims: a.feature_dims,
        ..Default::default()
    };
    let corpus = synthetic::generate(&cfg)?;
    synthetic::write_corpus(&a.out, &corpus)?;
    let counts = synthetic::class_counts(&cfg);
    let text = format!(
        "{} vessels, {} images, classes {:?} with counts {:?} -> {}\n",
        corpus.ais.records.len(),
        corpus.images.records.len(),
        corpus.truth.class_names,
        counts,
        a.out.display()
    );
    let summary = json!({
        "vessels": corpus.ais.records.len(), "images": corpus.images.records.len(),
        "classes": corpus.truth.class_names, "class_counts": counts,
        "provenance": corpus.truth.provenance, "out": a.out,
    });
    Ok((summary, text))
}

fn export_losses(a: &ExportLossesArgs) -> Result<(Value, String)> {
    let traces = a.inputs.iter().map(|p| read_loss_csv(p)).collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = a
        .inputs
        .iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            stem.strip_suffix(".losses").unwrap_or(&stem).to_string()
        })
        .collect();
    let epochs = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(std::iter::once("epoch".to_string()).chain(names.iter().cloned()))?;
    for e in 0..epochs {
        let row = std::iter::once((e + 1).to_string())
            .chain(traces.iter().map(|t| t.get(e).map(|l| l.loss.to_string()).unwrap_or_default()));
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    let text = format!("{} traces, {epochs} epochs -> {}\n", traces.len(), a.out.display());
    Ok((json!({ "columns": names, "epochs": epochs, "out": a.out }), text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("256x7x7").unwrap(), [256, 7, 7]);
        assert!(parse_dims("0x7x7").is_err());
        assert!(parse_dims("7x7").is_err());
    }
}
