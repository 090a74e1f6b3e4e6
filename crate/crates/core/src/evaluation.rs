//! Macro F1, all-point average precision, score tables and the depth × r sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cart::CartParams;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fuzzy::{argmax, r_label};
use crate::model::{predict_proba, NeuroFuzzyConfig, NeuroFuzzyModel};
use crate::provenance::Provenance;
use crate::rules::fit_rules;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// Neither present nor predicted; F1 counted as 0.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: Vec<ClassF1>,
}

impl F1Report {
    pub fn has_absent_class(&self) -> bool {
        self.per_class.iter().any(|c| c.absent)
    }
}

fn check_labels(preds: &[usize], truth: &[usize], m: usize) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    if preds.len() != truth.len() {
        return Err(Error::InvalidInput(format!("{} predictions for {} labels", preds.len(), truth.len())));
    }
    if let Some(&l) = preds.iter().chain(truth).find(|&&l| l >= m) {
        return Err(Error::InvalidInput(format!("label {l} >= {m} classes")));
    }
    Ok(())
}

/// `[truth][prediction]` counts.
pub fn confusion_matrix(preds: &[usize], truth: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    check_labels(preds, truth, m)?;
    let mut c = vec![vec![0; m]; m];
    for (&p, &t) in preds.iter().zip(truth) {
        c[t][p] += 1;
    }
    Ok(c)
}

/// Unweighted mean of per-class F1 over all `m` classes.
pub fn macro_f1(preds: &[usize], truth: &[usize], m: usize) -> Result<F1Report> {
    let cm = confusion_matrix(preds, truth, m)?;
    let per_class: Vec<ClassF1> = (0..m)
        .map(|c| {
            let tp = cm[c][c] as f64;
            let support: usize = cm[c].iter().sum();
            let predicted: usize = cm.iter().map(|r| r[c]).sum();
            let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
            let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
            let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (support + predicted) as f64 };
            ClassF1 { precision, recall, f1, support, predicted, absent: support == 0 && predicted == 0 }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / m as f64;
    Ok(F1Report { macro_f1, per_class })
}

/// Area under the precision-recall curve with precision interpolated over all
/// recall levels (each recall level takes the best precision at that recall or
/// beyond). Tied scores form one threshold. `None` when there is no positive.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), truth.len(), "one score per sample");
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // (recall, precision) after each distinct threshold.
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += truth[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / seen as f64));
    }
    let mut ap = 0.0;
    let mut best = 0.0f64;
    let mut upper = 1.0;
    // Sweep from the highest recall down, carrying the running precision maximum.
    for &(r, p) in points.iter().rev() {
        ap += best * (upper - r);
        best = best.max(p);
        upper = r;
    }
    ap += best * upper;
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Mean over classes with at least one positive.
    pub map: Option<f64>,
    pub per_class: Vec<Option<f64>>,
}

/// One-vs-rest AP of each class's probability column.
pub fn mean_average_precision(probs: &[Vec<f64>], truth: &[usize], m: usize) -> Result<ApReport> {
    if probs.len() != truth.len() || probs.iter().any(|p| p.len() != m) {
        return Err(Error::InvalidInput("probability rows do not match labels and classes".into()));
    }
    let per_class: Vec<Option<f64>> = (0..m)
        .map(|c| {
            let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let t: Vec<bool> = truth.iter().map(|&l| l == c).collect();
            average_precision(&s, &t)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ApReport { map, per_class })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub seed: Option<u64>,
    pub class_names: Vec<String>,
    pub f1: F1Report,
    /// Classification AP over predicted probabilities (no localisation).
    pub ap: ApReport,
    pub confusion: Vec<Vec<usize>>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn from_probabilities(
        model: &str,
        ds: &Dataset,
        probs: &[Vec<f64>],
        seed: Option<u64>,
    ) -> Result<Self> {
        let truth = ds.labels();
        let m = ds.n_classes();
        let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let f1 = macro_f1(&preds, &truth, m)?;
        let mut notes = vec!["ap is classification AP over class probabilities".to_string()];
        if f1.has_absent_class() {
            notes.push("some classes have neither support nor predictions; their F1 counts as 0".into());
        }
        Ok(EvalReport {
            model: model.to_string(),
            dataset: format!("{:?}", ds.kind).to_lowercase(),
            seed,
            class_names: ds.label_map.names().to_vec(),
            ap: mean_average_precision(probs, &truth, m)?,
            confusion: confusion_matrix(&preds, &truth, m)?,
            f1,
            notes,
        })
    }

    /// Per-class scores in the metric matching the dataset variant: AP for
    /// image-centred data, F1 for vessel-centred data.
    pub fn column(&self) -> ScoreColumn {
        if self.dataset == "ic" {
            ScoreColumn { name: self.model.clone(), per_class: self.ap.per_class.clone(), aggregate: self.ap.map }
        } else {
            ScoreColumn {
                name: self.model.clone(),
                per_class: self.f1.per_class.iter().map(|c| Some(c.f1)).collect(),
                aggregate: Some(self.f1.macro_f1),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreColumn {
    pub name: String,
    pub per_class: Vec<Option<f64>>,
    pub aggregate: Option<f64>,
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "n/a".into())
}

/// Classes as rows, models as columns, scores in percent, aggregate last.
pub fn render_score_table(class_names: &[String], columns: &[ScoreColumn], aggregate_label: &str) -> String {
    let w0 = class_names.iter().map(|s| s.len()).chain([aggregate_label.len(), 5]).max().unwrap();
    let widths: Vec<usize> = columns.iter().map(|c| c.name.len().max(6)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<w0$}", "Class");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {:>w$}", c.name);
    }
    out.push('\n');
    let rule_len = w0 + widths.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for (i, name) in class_names.iter().enumerate() {
        let _ = write!(out, "{name:<w0$}");
        for (c, w) in columns.iter().zip(&widths) {
            let _ = write!(out, " | {:>w$}", pct(c.per_class.get(i).copied().flatten()));
        }
        out.push('\n');
    }
    let _ = write!(out, "{aggregate_label:<w0$}");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {:>w$}", pct(c.aggregate));
    }
    out.push('\n');
    out
}

pub const ABLATION_DEPTHS: [usize; 4] = [4, 6, 8, 10];
pub const ABLATION_R: [f64; 3] = [2.14, 5.4, 14.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub depth: usize,
    pub r: f64,
    pub r_label: String,
    pub seed: u64,
    pub comparisons: Option<usize>,
    pub conditions: Option<usize>,
    pub macro_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub depths: Vec<usize>,
    pub r_levels: Vec<f64>,
    /// Ordered by depth, then r.
    pub cells: Vec<AblationCell>,
    pub provenance: Provenance,
}

impl AblationReport {
    pub fn cell(&self, depth: usize, r: f64) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.depth == depth && c.r == r)
    }

    /// Table with r levels as rows and depths as columns, plus count rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let row_label = |r: f64| format!("{} ({r})", r_label(r));
        let w0 = self.r_levels.iter().map(|&r| row_label(r).chars().count()).max().unwrap_or(0).max(13);
        let _ = write!(out, "{:<w0$}", "r \\ D");
        for d in &self.depths {
            let _ = write!(out, " | {d:>6}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(w0 + 9 * self.depths.len()));
        out.push('\n');
        for &r in self.r_levels.iter().rev() {
            let _ = write!(out, "{:<w0$}", row_label(r));
            for &d in &self.depths {
                let v = self.cell(d, r).and_then(|c| c.macro_f1);
                let _ = write!(out, " | {:>6}", pct(v));
            }
            out.push('\n');
        }
        for (label, get) in [
            ("# conditions", (|c: &AblationCell| c.conditions) as fn(&AblationCell) -> Option<usize>),
            ("# comparisons", |c: &AblationCell| c.comparisons),
        ] {
            let _ = write!(out, "{label:<w0$}");
            for &d in &self.depths {
                let v = self.cells.iter().find(|c| c.depth == d).and_then(get);
                let _ = write!(out, " | {:>6}", v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into()));
            }
            out.push('\n');
        }
        out
    }
}

/// For every (depth, r): refit the trees on `train`, rebuild the model with
/// `r_and = -r`, `r_or = r`, train it and score macro F1 on `test`. A failing
/// cell records its error and the sweep continues.
pub fn ablation_sweep(
    train: &Dataset,
    test: &Dataset,
    depths: &[usize],
    r_levels: &[f64],
    base_cart: &CartParams,
    base: &NeuroFuzzyConfig,
    mut on_cell: impl FnMut(&AblationCell),
) -> Result<AblationReport> {
    if depths.is_empty() || r_levels.is_empty() {
        return Err(Error::Config("ablation grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(depths.len() * r_levels.len());
    for &depth in depths {
        let params = CartParams { max_depth: depth, ..*base_cart };
        let rules = fit_rules(&train.ais(), &train.labels(), train.label_map.names(), &params);
        for &r in r_levels {
            let mut cell = AblationCell {
                depth,
                r,
                r_label: r_label(r),
                seed: base.train.seed,
                comparisons: None,
                conditions: None,
                macro_f1: None,
                error: None,
            };
            let outcome = rules.as_ref().map_err(|e| e.to_string()).and_then(|rules| {
                cell.comparisons = Some(rules.comparison_count());
                cell.conditions = Some(rules.condition_count());
                let cfg = NeuroFuzzyConfig { r_and: -r, r_or: r, ..*base };
                let run = || -> Result<f64> {
                    let mut model = NeuroFuzzyModel::<f32>::build(rules.clone(), cfg)?;
                    model.train(train, |_, _| Ok(()))?;
                    let probs = predict_proba(&model, test, 256)?;
                    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
                    Ok(macro_f1(&preds, &test.labels(), test.n_classes())?.macro_f1)
                };
                run().map_err(|e| e.to_string())
            });
            match outcome {
                Ok(f) => cell.macro_f1 = Some(f),
                Err(e) => {
                    log::warn!("ablation cell D={depth} r={r} failed: {e}");
                    cell.error = Some(e);
                }
            }
            on_cell(&cell);
            cells.push(cell);
        }
    }
    let provenance = Provenance::new(Some(base.train.seed), &(depths, r_levels, base_cart, base));
    Ok(AblationReport { depths: depths.to_vec(), r_levels: r_levels.to_vec(), cells, provenance })
}
