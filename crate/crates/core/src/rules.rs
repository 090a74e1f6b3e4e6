//! DNF rules read off one-vs-all trees, crisp evaluation and rendering.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cart::{fit_one_vs_all, CartParams, TreeNode};
use crate::data::{AisField, AisVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Le => "≤",
        }
    }
}

/// `field op threshold`, e.g. `length <= 27.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub field: AisField,
    pub op: CmpOp,
    pub threshold: f64,
}

impl Comparison {
    pub fn feature_index(&self) -> usize {
        self.field.index()
    }

    /// Crisp truth: strict `>` and non-strict `<=`.
    pub fn holds(&self, x: &AisVector) -> bool {
        let v = x[self.feature_index()];
        match self.op {
            CmpOp::Gt => v > self.threshold,
            CmpOp::Le => v <= self.threshold,
        }
    }

    /// Signed distance to the threshold, positive on the satisfied side
    /// (`x - v` for `>`, `v - x` for `<=`). The sigmoid membership is `σ(s · margin)`.
    pub fn margin(&self, x: &AisVector) -> f64 {
        let d = x[self.feature_index()] - self.threshold;
        match self.op {
            CmpOp::Gt => d,
            CmpOp::Le => -d,
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field.symbol(), self.op.symbol(), fmt_threshold(self.threshold))
    }
}

/// Shortest decimal rendering with at least one fractional digit (`16.0`, `3.75`).
pub fn fmt_threshold(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// Conjunction of comparisons along one root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub comparisons: Vec<Comparison>,
    /// Positive fraction of the training rows in the originating leaf.
    pub leaf_purity: f64,
    pub leaf_support: usize,
}

impl Condition {
    pub fn holds(&self, x: &AisVector) -> bool {
        self.comparisons.iter().all(|c| c.holds(x))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.comparisons.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(" ∧ "))
    }
}

/// `IF C_1 ∨ ... ∨ C_n THEN class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRule {
    pub class: String,
    pub conditions: Vec<Condition>,
}

impl ClassRule {
    /// Crisp DNF value; a rule without conditions is false.
    pub fn holds(&self, x: &AisVector) -> bool {
        self.conditions.iter().any(|c| c.holds(x))
    }

    pub fn comparison_count(&self) -> usize {
        self.conditions.iter().map(|c| c.comparisons.len()).sum()
    }
}

impl fmt::Display for ClassRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conditions.is_empty() {
            return write!(f, "IF false THEN {}", self.class);
        }
        write!(f, "IF ")?;
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                write!(f, " ∨\n   ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "\nTHEN {}", self.class)
    }
}

/// One rule per class plus the field order the thresholds refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub fields: Vec<AisField>,
    pub cart: Option<CartParams>,
    pub rules: Vec<ClassRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<ClassRule>) -> Self {
        RuleSet { fields: AisField::ALL.to_vec(), cart: None, rules }
    }

    pub fn n_classes(&self) -> usize {
        self.rules.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.rules.iter().map(|r| r.class.clone()).collect()
    }

    pub fn comparison_count(&self) -> usize {
        self.rules.iter().map(|r| r.comparison_count()).sum()
    }

    pub fn condition_count(&self) -> usize {
        self.rules.iter().map(|r| r.conditions.len()).sum()
    }

    /// All comparisons, rule-major then condition-major.
    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.rules.iter().flat_map(|r| r.conditions.iter().flat_map(|c| c.comparisons.iter()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rs: RuleSet = serde_json::from_str(text)?;
        if rs.fields != AisField::ALL {
            return Err(Error::Config("rule set refers to a different AIS field order".into()));
        }
        Ok(rs)
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}\n")?;
        }
        Ok(())
    }
}

/// One-vs-all trees on `x` and their rules, recording the tree parameters.
pub fn fit_rules(x: &[AisVector], labels: &[usize], class_names: &[String], params: &CartParams) -> Result<RuleSet> {
    let trees = fit_one_vs_all(x, labels, class_names.len(), params)?;
    let mut rules = extract_rules(&trees, class_names)?;
    rules.cart = Some(*params);
    Ok(rules)
}

/// Read one rule per tree; tree `i` belongs to `class_names[i]`.
///
/// Every leaf with positive fraction above one half becomes a condition. A tree
/// that is a single leaf yields a rule without conditions, whatever the leaf's
/// polarity, since its path has no comparisons.
pub fn extract_rules(trees: &[TreeNode], class_names: &[String]) -> Result<RuleSet> {
    if trees.len() != class_names.len() {
        return Err(Error::InvalidInput(format!("{} trees for {} class names", trees.len(), class_names.len())));
    }
    let mut rules = Vec::with_capacity(trees.len());
    for (tree, name) in trees.iter().zip(class_names) {
        let mut conditions = Vec::new();
        let mut path = Vec::new();
        collect(tree, &mut path, &mut conditions);
        if conditions.is_empty() {
            log::warn!("class {name:?}: tree has no positive leaf with a path, rule has no conditions");
        }
        rules.push(ClassRule { class: name.clone(), conditions });
    }
    Ok(RuleSet::new(rules))
}

fn collect(node: &TreeNode, path: &mut Vec<Comparison>, out: &mut Vec<Condition>) {
    match node {
        TreeNode::Leaf { positive_fraction, samples } => {
            if *positive_fraction > 0.5 && !path.is_empty() {
                out.push(Condition { comparisons: path.clone(), leaf_purity: *positive_fraction, leaf_support: *samples });
            }
        }
        TreeNode::Split { feature, threshold, left, right } => {
            let field = AisField::from_index(*feature).expect("tree features index the AIS fields");
            path.push(Comparison { field, op: CmpOp::Le, threshold: *threshold });
            collect(left, path, out);
            path.pop();
            path.push(Comparison { field, op: CmpOp::Gt, threshold: *threshold });
            collect(right, path, out);
            path.pop();
        }
    }
}

/// Crisp coverage and precision of one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub covered: usize,
    pub true_positives: usize,
    /// `None` when the condition covers no rows.
    pub precision: Option<f64>,
}

/// Per-condition precision of `rule` over rows whose positivity is `positive`.
pub fn rule_stats(rule: &ClassRule, x: &[AisVector], positive: &[bool]) -> Vec<ConditionStats> {
    rule.conditions
        .iter()
        .map(|c| {
            let mut covered = 0;
            let mut tp = 0;
            for (xi, &p) in x.iter().zip(positive) {
                if c.holds(xi) {
                    covered += 1;
                    tp += p as usize;
                }
            }
            let precision = (covered > 0).then(|| tp as f64 / covered as f64);
            ConditionStats { covered, true_positives: tp, precision }
        })
        .collect()
}

/// Rules-only crisp classifier.
///
/// A class scores the best leaf purity among its satisfied conditions; the
/// highest score wins with ties to the lowest class index. When nothing fires
/// the fallback class (normally the training majority) is returned.
#[derive(Debug, Clone, PartialEq)]
pub struct CrispRuleClassifier {
    pub rules: RuleSet,
    pub fallback: usize,
}

impl CrispRuleClassifier {
    pub fn new(rules: RuleSet, train_labels: &[usize]) -> Self {
        let mut counts = vec![0usize; rules.n_classes()];
        for &l in train_labels {
            if l < counts.len() {
                counts[l] += 1;
            }
        }
        let fallback = (0..counts.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        CrispRuleClassifier { rules, fallback }
    }

    /// Classes whose rule is crisply true at `x`.
    pub fn firing(&self, x: &AisVector) -> Vec<usize> {
        (0..self.rules.n_classes()).filter(|&c| self.rules.rules[c].holds(x)).collect()
    }

    pub fn scores(&self, x: &AisVector) -> Vec<f64> {
        self.rules
            .rules
            .iter()
            .map(|r| r.conditions.iter().filter(|c| c.holds(x)).map(|c| c.leaf_purity).fold(0.0, f64::max))
            .collect()
    }

    pub fn predict(&self, x: &AisVector) -> usize {
        let s = self.scores(x);
        let mut best = None;
        for (c, &v) in s.iter().enumerate() {
            if v > 0.0 && best.is_none_or(|b: usize| v > s[b]) {
                best = Some(c);
            }
        }
        best.unwrap_or(self.fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::fit_tree;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn single_split_gives_one_condition() {
        let tree = TreeNode::Split {
            feature: 0,
            threshold: 2.5,
            left: Box::new(TreeNode::Leaf { positive_fraction: 1.0, samples: 4 }),
            right: Box::new(TreeNode::Leaf { positive_fraction: 0.0, samples: 3 }),
        };
        let rs = extract_rules(&[tree], &names(1)).unwrap();
        let rule = &rs.rules[0];
        assert_eq!(rule.conditions.len(), 1);
        assert_eq!(
            rule.conditions[0].comparisons,
            vec![Comparison { field: AisField::ToBow, op: CmpOp::Le, threshold: 2.5 }]
        );
        assert_eq!(rule.to_string(), "IF (tb ≤ 2.5)\nTHEN c0");
    }

    #[test]
    fn negative_leaf_tree_gives_empty_rule() {
        let leaf = TreeNode::Leaf { positive_fraction: 0.0, samples: 9 };
        let rs = extract_rules(&[leaf], &names(1)).unwrap();
        assert!(rs.rules[0].conditions.is_empty());
        assert!(!rs.rules[0].holds(&[0.0; 7]));
    }

    #[test]
    fn comparisons_follow_root_to_leaf_order() {
        let tree = TreeNode::Split {
            feature: 5,
            threshold: 27.5,
            left: Box::new(TreeNode::Split {
                feature: 1,
                threshold: 16.0,
                left: Box::new(TreeNode::Leaf { positive_fraction: 0.9, samples: 10 }),
                right: Box::new(TreeNode::Leaf { positive_fraction: 0.1, samples: 10 }),
            }),
            right: Box::new(TreeNode::Split {
                feature: 6,
                threshold: 3.75,
                left: Box::new(TreeNode::Leaf { positive_fraction: 0.2, samples: 10 }),
                right: Box::new(TreeNode::Leaf { positive_fraction: 0.6, samples: 10 }),
            }),
        };
        let rs = extract_rules(&[tree], &names(1)).unwrap();
        let text: Vec<String> = rs.rules[0].conditions.iter().map(|c| c.to_string()).collect();
        assert_eq!(text, vec!["(l ≤ 27.5 ∧ te ≤ 16.0)", "(l > 27.5 ∧ d > 3.75)"]);
        assert_eq!(rs.comparison_count(), 4);
    }

    #[test]
    fn stats_precision_and_undefined_marker() {
        let rule = ClassRule {
            class: "t".into(),
            conditions: vec![
                Condition {
                    comparisons: vec![Comparison { field: AisField::Length, op: CmpOp::Le, threshold: 10.0 }],
                    leaf_purity: 1.0,
                    leaf_support: 2,
                },
                Condition {
                    comparisons: vec![Comparison { field: AisField::Length, op: CmpOp::Gt, threshold: 1e9 }],
                    leaf_purity: 1.0,
                    leaf_support: 2,
                },
            ],
        };
        let mut x = vec![[0.0; 7]; 4];
        x[2][5] = 20.0;
        x[3][5] = 5.0;
        let s = rule_stats(&rule, &x, &[true, true, false, false]);
        assert_eq!(s[0].covered, 3);
        assert_eq!(s[0].precision, Some(2.0 / 3.0));
        assert_eq!(s[1].precision, None);
    }

    #[test]
    fn json_round_trip() {
        let x: Vec<AisVector> = (0..20).map(|i| [i as f64, 0.0, 1.0, 2.0, 3.0, (i % 7) as f64, 0.5]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let t = fit_tree(&x, &y, &CartParams { max_depth: 4, min_samples_split: 2, min_samples_leaf: 1 }).unwrap();
        let rs = extract_rules(&[t], &names(1)).unwrap();
        let back = RuleSet::from_json(&rs.to_json().unwrap()).unwrap();
        assert_eq!(back, rs);
        assert!(rs.to_json().unwrap().contains("\"op\": \"<=\""));
    }

    #[test]
    fn crisp_classifier_prefers_purer_condition_and_falls_back() {
        let cond = |thr: f64, purity: f64| Condition {
            comparisons: vec![Comparison { field: AisField::Length, op: CmpOp::Le, threshold: thr }],
            leaf_purity: purity,
            leaf_support: 5,
        };
        let rs = RuleSet::new(vec![
            ClassRule { class: "a".into(), conditions: vec![cond(10.0, 0.8)] },
            ClassRule { class: "b".into(), conditions: vec![cond(20.0, 0.95)] },
        ]);
        let clf = CrispRuleClassifier::new(rs, &[0, 0, 1]);
        let mut x = [0.0; 7];
        x[5] = 5.0;
        assert_eq!(clf.predict(&x), 1);
        x[5] = 50.0;
        assert_eq!(clf.predict(&x), 0);
        assert_eq!(fmt_threshold(16.0), "16.0");
        assert_eq!(fmt_threshold(3.75), "3.75");
    }
}
