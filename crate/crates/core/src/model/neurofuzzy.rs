//! The neuro-fuzzy classifier: an image branch predicts one slope per rule
//! comparison, the AIS vector is fuzzified against the frozen rule thresholds,
//! conditions combine by soft conjunction and each class rule by a weighted soft
//! disjunction with simplex weights.

use std::path::Path;
use std::sync::Arc;

use nf_autograd::{checkpoint, ParamId, ParamStore, Scalar, Segments, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ConvBranch, ConvBranchConfig, Dense, HiddenBlock};
use super::{fit, restore_store, Batch, ForwardCtx, Network, StepInfo, TrainConfig, TrainReport};
use crate::data::{AisVector, Dataset};
use crate::error::{Error, Result};
use crate::fuzzy::{self, RuleTrace, DEFAULT_R_AND, DEFAULT_R_OR};
use crate::provenance::Provenance;
use crate::rules::{Comparison, RuleSet};

pub const NEUROFUZZY_KIND: &str = "neurofuzzy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeMode {
    /// Slopes come from the image branch, one vector per sample.
    PerSample,
    /// Slopes are free parameters shared by all samples; no image input.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuroFuzzyConfig {
    pub branch: ConvBranchConfig,
    pub a2_width: usize,
    /// Must equal the rule set's comparison count when given.
    pub o1_width: Option<usize>,
    pub r_and: f64,
    pub r_or: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub slope_mode: SlopeMode,
    /// Replace the Leaky ReLU on the slope output by softplus so every slope is positive.
    pub softplus_guard: bool,
    pub global_slope_init: f64,
    pub train: TrainConfig,
}

impl Default for NeuroFuzzyConfig {
    fn default() -> Self {
        NeuroFuzzyConfig {
            branch: ConvBranchConfig::default(),
            a2_width: 256,
            o1_width: None,
            r_and: DEFAULT_R_AND,
            r_or: DEFAULT_R_OR,
            dropout: 0.5,
            leaky_slope: 0.01,
            slope_mode: SlopeMode::PerSample,
            softplus_guard: false,
            global_slope_init: 1.0,
            train: TrainConfig::default(),
        }
    }
}

/// Constant structure of the fuzzy layer.
#[derive(Debug, Clone)]
struct FuzzyLayout {
    comparisons: Vec<Comparison>,
    /// Comparisons per condition, over all rules.
    conditions: Arc<Segments>,
    /// Conditions per class.
    classes: Arc<Segments>,
    /// `1/n` for every comparison of an `n`-comparison condition.
    and_weights: Vec<f64>,
}

impl FuzzyLayout {
    fn new(rules: &RuleSet) -> Self {
        let comparisons: Vec<Comparison> = rules.comparisons().copied().collect();
        let lens: Vec<usize> =
            rules.rules.iter().flat_map(|r| r.conditions.iter().map(|c| c.comparisons.len())).collect();
        let and_weights = lens.iter().flat_map(|&n| std::iter::repeat_n(1.0 / n as f64, n)).collect();
        let per_class: Vec<usize> = rules.rules.iter().map(|r| r.conditions.len()).collect();
        FuzzyLayout {
            comparisons,
            conditions: Arc::new(Segments::from_lengths(&lens)),
            classes: Arc::new(Segments::from_lengths(&per_class)),
            and_weights,
        }
    }

    /// `[N, P]` signed distances to every threshold.
    fn margins<T: Scalar>(&self, ais: &[AisVector]) -> Tensor<T> {
        let data = ais.iter().flat_map(|x| self.comparisons.iter().map(|c| T::of(c.margin(x)))).collect();
        Tensor::new(vec![ais.len(), self.comparisons.len()], data).expect("rows * comparisons values")
    }
}

#[derive(Debug, Clone)]
enum SlopeHead {
    PerSample { branch: ConvBranch, a2: HiddenBlock, o1: Dense },
    Global { slopes: ParamId },
}

/// Graph nodes of one forward pass.
pub struct FuzzyVars {
    pub slopes: Var,
    pub memberships: Var,
    pub conditions: Var,
    pub rule_scores: Var,
}

#[derive(Debug, Clone)]
pub struct NeuroFuzzyModel<T: Scalar = f32> {
    cfg: NeuroFuzzyConfig,
    rules: RuleSet,
    layout: FuzzyLayout,
    head: SlopeHead,
    disjunction: ParamId,
    store: ParamStore<T>,
    slope_override: Option<f64>,
}

/// Result of [`NeuroFuzzyModel::predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub class: String,
    pub probabilities: Vec<f64>,
    pub rule_scores: Vec<f64>,
    /// Degrees of the winning class's rule under this sample's slopes.
    pub explanation: RuleTrace,
}

impl<T: Scalar> NeuroFuzzyModel<T> {
    pub fn build(rules: RuleSet, cfg: NeuroFuzzyConfig) -> Result<Self> {
        let p = rules.comparison_count();
        if rules.n_classes() < 2 {
            return Err(Error::Config("at least two class rules required".into()));
        }
        if rules.condition_count() == 0 {
            return Err(Error::Config("every rule is empty; nothing to fuzzify".into()));
        }
        if let Some(w) = cfg.o1_width {
            if w != p {
                return Err(Error::Config(format!("o1 width {w} differs from the {p} rule comparisons")));
            }
        }
        if !(cfg.r_and < 0.0 && cfg.r_or > 0.0) {
            return Err(Error::Config(format!("need r_and < 0 < r_or, got {} and {}", cfg.r_and, cfg.r_or)));
        }
        for r in rules.rules.iter().filter(|r| r.conditions.is_empty()) {
            log::warn!("class {:?} has no conditions; its rule score is the constant 0", r.class);
        }
        let layout = FuzzyLayout::new(&rules);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let mut store = ParamStore::new();
        let head = match cfg.slope_mode {
            SlopeMode::PerSample => {
                let branch = ConvBranch::register(&mut store, &cfg.branch, &mut rng)?;
                let a2 = HiddenBlock::register(&mut store, "a2", cfg.branch.a1_width, cfg.a2_width, &mut rng)?;
                let o1 = Dense::register(&mut store, "o1", cfg.a2_width, p, &mut rng)?;
                SlopeHead::PerSample { branch, a2, o1 }
            }
            SlopeMode::Global => {
                let slopes = store.add("slopes", Tensor::full(vec![p], T::of(cfg.global_slope_init)))?;
                SlopeHead::Global { slopes }
            }
        };
        let disjunction = store.add("disjunction.logits", Tensor::zeros(vec![rules.condition_count()]))?;
        Ok(NeuroFuzzyModel { cfg, rules, layout, head, disjunction, store, slope_override: None })
    }

    pub fn config(&self) -> &NeuroFuzzyConfig {
        &self.cfg
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn class_names(&self) -> Vec<String> {
        self.rules.class_names()
    }

    /// Width of the slope output.
    pub fn slope_width(&self) -> usize {
        self.layout.comparisons.len()
    }

    /// Bypass the slope head with one constant slope for every comparison.
    pub fn set_slope_override(&mut self, slope: Option<f64>) {
        self.slope_override = slope;
    }

    /// Change the andness/orness levels (the rules and parameters are untouched).
    pub fn set_r_levels(&mut self, r_and: f64, r_or: f64) -> Result<()> {
        if !(r_and < 0.0 && r_or > 0.0) {
            return Err(Error::Config(format!("need r_and < 0 < r_or, got {r_and} and {r_or}")));
        }
        self.cfg.r_and = r_and;
        self.cfg.r_or = r_or;
        Ok(())
    }

    /// Same model with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> NeuroFuzzyModel<U> {
        NeuroFuzzyModel {
            cfg: self.cfg,
            rules: self.rules.clone(),
            layout: self.layout.clone(),
            head: self.head.clone(),
            disjunction: self.disjunction,
            store: self.store.cast(),
            slope_override: self.slope_override,
        }
    }

    /// Effective disjunction weights per class, read from `store`.
    pub fn disjunction_weights_in(&self, store: &ParamStore<T>) -> Vec<Vec<f64>> {
        let logits = store.value(self.disjunction).to_f64_vec();
        self.layout
            .classes
            .ranges()
            .iter()
            .map(|r| {
                let seg = &logits[r.clone()];
                let m = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = seg.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| v / z).collect()
            })
            .collect()
    }

    pub fn disjunction_weights(&self) -> Vec<Vec<f64>> {
        self.disjunction_weights_in(&self.store)
    }

    /// Full fuzzy graph for a batch.
    pub fn graph(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<FuzzyVars> {
        let n = batch.len();
        let p = self.slope_width();
        let slopes = match (self.slope_override, &self.head) {
            (Some(s), _) => tape.input(Tensor::full(vec![n, p], T::of(s))),
            (None, SlopeHead::PerSample { branch, a2, o1 }) => {
                let x = tape.input(batch.features.clone());
                let h = branch.forward(tape, store, x)?;
                let h = a2.forward(tape, store, h, self.cfg.dropout, ctx)?;
                let pre = o1.forward(tape, store, h)?;
                if self.cfg.softplus_guard {
                    tape.softplus(pre)
                } else {
                    tape.leaky_relu(pre, self.cfg.leaky_slope)
                }
            }
            (None, SlopeHead::Global { slopes }) => {
                let s = tape.param(store, *slopes);
                let s = if self.cfg.softplus_guard { tape.softplus(s) } else { s };
                tape.broadcast_rows(s, n)
            }
        };
        tape.ensure_finite(slopes, "slope head")?;

        let margins = tape.input(self.layout.margins(&batch.ais));
        let z = tape.mul(slopes, margins)?;
        let memberships = tape.sigmoid(z);

        let and_w = tape.input(Tensor::from_f64(vec![p], &self.layout.and_weights)?);
        let scaled = tape.scale(memberships, self.cfg.r_and);
        let lse = tape.segment_logsumexp(scaled, Some(and_w), self.layout.conditions.clone())?;
        let conditions = tape.scale(lse, 1.0 / self.cfg.r_and);
        tape.ensure_finite(conditions, "condition degrees")?;

        let logits = tape.param(store, self.disjunction);
        let or_w = tape.segment_softmax(logits, self.layout.classes.clone())?;
        let scaled = tape.scale(conditions, self.cfg.r_or);
        let lse = tape.segment_logsumexp(scaled, Some(or_w), self.layout.classes.clone())?;
        let rule_scores = tape.scale(lse, 1.0 / self.cfg.r_or);
        tape.ensure_finite(rule_scores, "rule scores")?;
        Ok(FuzzyVars { slopes, memberships, conditions, rule_scores })
    }

    /// Eval-mode outputs for a batch: (probabilities, rule scores, slopes), row-major per sample.
    #[allow(clippy::type_complexity)]
    pub fn evaluate_batch(&self, batch: &Batch<T>) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let v = self.graph(&self.store, &mut tape, batch, &mut ForwardCtx::eval())?;
        let probs = tape.softmax(v.rule_scores)?;
        let rows = |var: Var| -> Vec<Vec<f64>> {
            let t = tape.value(var);
            (0..batch.len()).map(|i| t.row(i).iter().map(|x| x.as_f64()).collect()).collect()
        };
        Ok((rows(probs), rows(v.rule_scores), rows(v.slopes)))
    }

    /// Class distribution for one sample.
    pub fn forward(&self, feature: &[f32], ais: &AisVector) -> Result<Vec<f64>> {
        let batch = self.single_batch(feature, ais)?;
        Ok(self.evaluate_batch(&batch)?.0.remove(0))
    }

    fn single_batch(&self, feature: &[f32], ais: &AisVector) -> Result<Batch<T>> {
        let [c, h, w] = self.cfg.branch.feature_dims;
        if feature.len() != c * h * w {
            return Err(Error::InvalidInput(format!("feature has {} values, expected {}", feature.len(), c * h * w)));
        }
        Ok(Batch {
            features: Tensor::new(vec![1, c, h, w], feature.iter().map(|&v| T::of(v as f64)).collect())?,
            ais: vec![*ais],
            labels: vec![0],
        })
    }

    /// Label, distribution and the winning rule's fuzzy trace.
    pub fn predict(&self, feature: &[f32], ais: &AisVector) -> Result<Prediction> {
        let batch = self.single_batch(feature, ais)?;
        let (mut probs, mut scores, mut slopes) = self.evaluate_batch(&batch)?;
        let (probs, scores, slopes) = (probs.remove(0), scores.remove(0), slopes.remove(0));
        let label = fuzzy::argmax(&probs);
        let start: usize = self.rules.rules[..label].iter().map(|r| r.comparison_count()).sum();
        let rule = &self.rules.rules[label];
        let weights = self.disjunction_weights();
        let explanation = fuzzy::trace_rule(
            rule,
            ais,
            &weights[label],
            &slopes[start..start + rule.comparison_count()],
            self.cfg.r_and,
            self.cfg.r_or,
        )?;
        Ok(Prediction { label, class: rule.class.clone(), probabilities: probs, rule_scores: scores, explanation })
    }

    /// Rules, current weights and the given slopes as a standalone fuzzy rule set.
    pub fn fuzzy_rule_set(&self, slopes: Vec<f64>) -> Result<fuzzy::FuzzyRuleSet> {
        let f = fuzzy::FuzzyRuleSet {
            rules: self.rules.clone(),
            weights: self.disjunction_weights(),
            slopes,
            r_and: self.cfg.r_and,
            r_or: self.cfg.r_or,
        };
        f.validate()?;
        Ok(f)
    }

    /// Learned slopes in global mode, `None` when slopes depend on the sample.
    pub fn global_slopes(&self) -> Option<Vec<f64>> {
        match &self.head {
            SlopeHead::Global { slopes } => {
                let v = self.store.value(*slopes).to_f64_vec();
                Some(if self.cfg.softplus_guard { v.iter().map(|&s| fuzzy_softplus(s)).collect() } else { v })
            }
            SlopeHead::PerSample { .. } => None,
        }
    }

    pub fn train(
        &mut self,
        ds: &Dataset,
        on_step: impl FnMut(&StepInfo, &Self) -> Result<()>,
    ) -> Result<TrainReport> {
        if ds.label_map.names() != self.rules.class_names().as_slice() {
            return Err(Error::Config(format!(
                "dataset classes {:?} differ from rule classes {:?}",
                ds.label_map.names(),
                self.rules.class_names()
            )));
        }
        let cfg = self.cfg.train;
        fit(self, ds, &cfg, on_step)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": NEUROFUZZY_KIND,
            "config": self.cfg,
            "rules": self.rules,
            "provenance": Provenance::new(Some(self.cfg.train.seed), &(&self.cfg, &self.rules)),
        })
    }

    /// Write a checkpoint manifest at `path` and its binary blob beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.store, self.metadata())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, manifest) = checkpoint::load::<T>(path)?;
        let meta = &manifest.model;
        if meta.get("kind").and_then(|k| k.as_str()) != Some(NEUROFUZZY_KIND) {
            return Err(Error::Config(format!("{} is not a neuro-fuzzy checkpoint", path.display())));
        }
        let cfg: NeuroFuzzyConfig = serde_json::from_value(meta["config"].clone())?;
        let rules: RuleSet = serde_json::from_value(meta["rules"].clone())?;
        let mut model = Self::build(rules, cfg)?;
        restore_store(&mut model.store, &store)?;
        Ok(model)
    }
}

fn fuzzy_softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<T: Scalar> Network<T> for NeuroFuzzyModel<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn n_classes(&self) -> usize {
        self.rules.n_classes()
    }

    fn class_scores(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<Var> {
        Ok(self.graph(store, tape, batch, ctx)?.rule_scores)
    }
}
