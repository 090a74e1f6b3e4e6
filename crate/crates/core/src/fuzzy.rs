//! Sigmoid memberships and weighted-exponential-mean (WEM) rule logic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{AisField, AisVector};
use crate::error::{Error, Result};
use crate::rules::{fmt_threshold, ClassRule, CmpOp, Comparison, Condition, RuleSet};

/// Exponent clamp keeping `exp` finite in every width.
const EXP_CLAMP: f64 = 500.0;

/// Tolerance on the weight simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

pub const DEFAULT_R_AND: f64 = -5.4;
pub const DEFAULT_R_OR: f64 = 5.4;

#[inline]
fn logistic(z: f64) -> f64 {
    let z = z.clamp(-EXP_CLAMP, EXP_CLAMP);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Degree of `x > v` with slope `s`: `1 / (1 + e^{-s(x-v)})`.
pub fn membership_gt(x: f64, s: f64, v: f64) -> f64 {
    logistic(s * (x - v))
}

/// Degree of `x <= v` with slope `s`: `1 / (1 + e^{-s(v-x)})`.
pub fn membership_le(x: f64, s: f64, v: f64) -> f64 {
    logistic(s * (v - x))
}

pub fn membership(c: &Comparison, x: &AisVector, slope: f64) -> f64 {
    let xi = x[c.feature_index()];
    match c.op {
        CmpOp::Gt => membership_gt(xi, slope, c.threshold),
        CmpOp::Le => membership_le(xi, slope, c.threshold),
    }
}

/// `(1/r) ln(Σ w_i e^{r c_i})`, shifted by the largest exponent.
fn wem(c: &[f64], w: impl Iterator<Item = f64>, r: f64) -> f64 {
    let shift = c.iter().map(|&ci| r * ci).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = c.iter().zip(w).map(|(&ci, wi)| wi * (r * ci - shift).exp()).sum();
    (shift + sum.ln()) / r
}

/// Soft conjunction `(1/r) ln((1/n) Σ e^{r c_i})` with `r < 0`.
pub fn wem_and(c: &[f64], r_and: f64) -> Result<f64> {
    if c.is_empty() {
        return Err(Error::InvalidInput("conjunction of zero degrees".into()));
    }
    if !(r_and < 0.0 && r_and.is_finite()) {
        return Err(Error::InvalidInput(format!("andness level must be negative, got {r_and}")));
    }
    let w = 1.0 / c.len() as f64;
    Ok(wem(c, std::iter::repeat(w), r_and))
}

/// Weighted soft disjunction `(1/r) ln(Σ w_i e^{r C_i})` with `r > 0` and `w` on the simplex.
pub fn wem_or(c: &[f64], w: &[f64], r_or: f64) -> Result<f64> {
    if c.is_empty() || c.len() != w.len() {
        return Err(Error::InvalidInput(format!("{} degrees with {} weights", c.len(), w.len())));
    }
    if !(r_or > 0.0 && r_or.is_finite()) {
        return Err(Error::InvalidInput(format!("orness level must be positive, got {r_or}")));
    }
    check_simplex(w)?;
    Ok(wem(c, w.iter().copied(), r_or))
}

pub fn check_simplex(w: &[f64]) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput(format!("weights {w:?} are off the simplex (sum {sum})")));
    }
    Ok(())
}

pub fn eval_rule_crisp(rule: &ClassRule, x: &AisVector) -> bool {
    rule.holds(x)
}

/// Fuzzy truth of a rule. `slopes` holds one slope per comparison in rule order.
pub fn eval_rule_fuzzy(
    rule: &ClassRule,
    x: &AisVector,
    weights: &[f64],
    slopes: &[f64],
    r_and: f64,
    r_or: f64,
) -> Result<f64> {
    Ok(trace_rule(rule, x, weights, slopes, r_and, r_or)?.score)
}

/// L1 normalisation of non-negative scores. All-zero input maps to uniform.
pub fn normalize_scores_l1(scores: &[f64]) -> Vec<f64> {
    let sum: f64 = scores.iter().sum();
    if sum <= 0.0 {
        log::warn!("all rule scores are zero, returning the uniform distribution");
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    scores.iter().map(|s| s / sum).collect()
}

/// Human label of an `|r|` level.
pub fn r_label(r: f64) -> String {
    let a = r.abs();
    let near = |t: f64| (a - t).abs() < 1e-9;
    if near(14.0) {
        "very high".into()
    } else if near(5.4) {
        "high".into()
    } else if near(2.14) {
        "medium high".into()
    } else {
        format!("|r| = {a}")
    }
}

/// Condition tag: `a`..`z`, then `aa`, `ab`, ...
pub fn condition_tag(i: usize) -> String {
    let mut n = i;
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTrace {
    pub comparison: Comparison,
    pub slope: f64,
    pub membership: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTrace {
    pub tag: String,
    pub weight: f64,
    pub degree: f64,
    pub comparisons: Vec<ComparisonTrace>,
}

/// Every intermediate degree of one rule at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub class: String,
    pub score: f64,
    pub conditions: Vec<ConditionTrace>,
}

pub fn trace_rule(
    rule: &ClassRule,
    x: &AisVector,
    weights: &[f64],
    slopes: &[f64],
    r_and: f64,
    r_or: f64,
) -> Result<RuleTrace> {
    if slopes.len() != rule.comparison_count() {
        return Err(Error::InvalidInput(format!(
            "{} slopes for {} comparisons",
            slopes.len(),
            rule.comparison_count()
        )));
    }
    if weights.len() != rule.conditions.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} conditions",
            weights.len(),
            rule.conditions.len()
        )));
    }
    let mut conditions = Vec::with_capacity(rule.conditions.len());
    let mut s = slopes.iter();
    for (i, (cond, &w)) in rule.conditions.iter().zip(weights).enumerate() {
        let comps: Vec<ComparisonTrace> = cond
            .comparisons
            .iter()
            .map(|c| {
                let slope = *s.next().unwrap();
                ComparisonTrace { comparison: *c, slope, membership: membership(c, x, slope) }
            })
            .collect();
        let m: Vec<f64> = comps.iter().map(|t| t.membership).collect();
        conditions.push(ConditionTrace { tag: condition_tag(i), weight: w, degree: wem_and(&m, r_and)?, comparisons: comps });
    }
    let score = if conditions.is_empty() {
        0.0
    } else {
        let c: Vec<f64> = conditions.iter().map(|t| t.degree).collect();
        wem_or(&c, weights, r_or)?
    };
    Ok(RuleTrace { class: rule.class.clone(), score, conditions })
}

impl fmt::Display for RuleTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: R = {:.4}", self.class, self.score)?;
        for c in &self.conditions {
            let parts: Vec<String> = c
                .comparisons
                .iter()
                .map(|t| format!("{} [μ={:.3}, s={:.3}]", t.comparison, t.membership, t.slope))
                .collect();
            writeln!(f, "  ({}) w={:.4} C={:.4}  {}", c.tag, c.weight, c.degree, parts.join(" ∧ "))?;
        }
        Ok(())
    }
}

/// Rules with disjunction weights, one slope per comparison and the r levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FuzzyRuleSetFile", try_from = "FuzzyRuleSetFile")]
pub struct FuzzyRuleSet {
    pub rules: RuleSet,
    pub weights: Vec<Vec<f64>>,
    /// Flat, in [`RuleSet::comparisons`] order.
    pub slopes: Vec<f64>,
    pub r_and: f64,
    pub r_or: f64,
}

impl FuzzyRuleSet {
    /// Uniform weights and a shared slope.
    pub fn uniform(rules: RuleSet, slope: f64, r_and: f64, r_or: f64) -> Self {
        let weights = rules
            .rules
            .iter()
            .map(|r| vec![1.0 / r.conditions.len().max(1) as f64; r.conditions.len()])
            .collect();
        let slopes = vec![slope; rules.comparison_count()];
        FuzzyRuleSet { rules, weights, slopes, r_and, r_or }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.rules.n_classes() {
            return Err(Error::InvalidInput("one weight vector per rule required".into()));
        }
        for (r, w) in self.rules.rules.iter().zip(&self.weights) {
            if w.len() != r.conditions.len() {
                return Err(Error::InvalidInput(format!("rule {:?}: {} weights for {} conditions", r.class, w.len(), r.conditions.len())));
            }
            if !w.is_empty() {
                check_simplex(w)?;
            }
        }
        if self.slopes.len() != self.rules.comparison_count() {
            return Err(Error::InvalidInput(format!(
                "{} slopes for {} comparisons",
                self.slopes.len(),
                self.rules.comparison_count()
            )));
        }
        if !(self.r_and < 0.0 && self.r_or > 0.0) {
            return Err(Error::InvalidInput("r_and must be negative and r_or positive".into()));
        }
        Ok(())
    }

    /// Slopes belonging to rule `i`.
    pub fn rule_slopes(&self, i: usize) -> &[f64] {
        let start: usize = self.rules.rules[..i].iter().map(|r| r.comparison_count()).sum();
        &self.slopes[start..start + self.rules.rules[i].comparison_count()]
    }

    pub fn trace(&self, x: &AisVector) -> Result<Vec<RuleTrace>> {
        (0..self.rules.n_classes())
            .map(|i| trace_rule(&self.rules.rules[i], x, &self.weights[i], self.rule_slopes(i), self.r_and, self.r_or))
            .collect()
    }

    /// Rule scores `R_i(x)`.
    pub fn evaluate(&self, x: &AisVector) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.into_iter().map(|t| t.score).collect())
    }

    /// Argmax of the rule scores, ties to the lowest index.
    pub fn classify(&self, x: &AisVector) -> Result<usize> {
        Ok(argmax(&self.evaluate(x)?))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// On-disk layout of [`FuzzyRuleSet`], one entry per condition with its weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FuzzyRuleSetFile {
    r_and: f64,
    r_or: f64,
    cart: Option<crate::cart::CartParams>,
    rules: Vec<FuzzyRuleFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FuzzyRuleFile {
    class: String,
    conditions: Vec<FuzzyConditionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FuzzyConditionFile {
    tag: String,
    weight: f64,
    leaf_purity: f64,
    leaf_support: usize,
    text: String,
    comparisons: Vec<FuzzyComparisonFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FuzzyComparisonFile {
    field: AisField,
    op: CmpOp,
    threshold: f64,
    slope: f64,
}

impl From<FuzzyRuleSet> for FuzzyRuleSetFile {
    fn from(f: FuzzyRuleSet) -> Self {
        let mut slopes = f.slopes.iter();
        let rules = f
            .rules
            .rules
            .iter()
            .zip(&f.weights)
            .map(|(r, w)| FuzzyRuleFile {
                class: r.class.clone(),
                conditions: r
                    .conditions
                    .iter()
                    .zip(w)
                    .enumerate()
                    .map(|(i, (c, &weight))| FuzzyConditionFile {
                        tag: condition_tag(i),
                        weight,
                        leaf_purity: c.leaf_purity,
                        leaf_support: c.leaf_support,
                        text: c.to_string(),
                        comparisons: c
                            .comparisons
                            .iter()
                            .map(|cmp| FuzzyComparisonFile {
                                field: cmp.field,
                                op: cmp.op,
                                threshold: cmp.threshold,
                                slope: *slopes.next().unwrap_or(&f64::NAN),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        FuzzyRuleSetFile { r_and: f.r_and, r_or: f.r_or, cart: f.rules.cart, rules }
    }
}

impl TryFrom<FuzzyRuleSetFile> for FuzzyRuleSet {
    type Error = Error;

    fn try_from(file: FuzzyRuleSetFile) -> Result<Self> {
        let mut weights = Vec::new();
        let mut slopes = Vec::new();
        let mut rules = Vec::new();
        for r in file.rules {
            weights.push(r.conditions.iter().map(|c| c.weight).collect());
            let conditions = r
                .conditions
                .into_iter()
                .map(|c| Condition {
                    comparisons: c
                        .comparisons
                        .into_iter()
                        .map(|cmp| {
                            slopes.push(cmp.slope);
                            Comparison { field: cmp.field, op: cmp.op, threshold: cmp.threshold }
                        })
                        .collect(),
                    leaf_purity: c.leaf_purity,
                    leaf_support: c.leaf_support,
                })
                .collect();
            rules.push(ClassRule { class: r.class, conditions });
        }
        let mut rs = RuleSet::new(rules);
        rs.cart = file.cart;
        let out = FuzzyRuleSet { rules: rs, weights, slopes, r_and: file.r_and, r_or: file.r_or };
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for FuzzyRuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "r_and = {}, r_or = {} ({})", self.r_and, self.r_or, r_label(self.r_or))?;
        let mut k = 0;
        for (r, w) in self.rules.rules.iter().zip(&self.weights) {
            writeln!(f, "{}:", r.class)?;
            for (i, (c, wi)) in r.conditions.iter().zip(w).enumerate() {
                let parts: Vec<String> = c
                    .comparisons
                    .iter()
                    .map(|cmp| {
                        let s = self.slopes[k];
                        k += 1;
                        format!("{}{}{} (s={s:.3})", cmp.field.symbol(), cmp.op.symbol(), fmt_threshold(cmp.threshold))
                    })
                    .collect();
                writeln!(f, "  ({}) {:.4}  {}", condition_tag(i), wi, parts.join(" ∧ "))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_points() {
        assert_eq!(membership_gt(3.0, 7.0, 3.0), 0.5);
        assert_eq!(membership_le(3.0, 7.0, 3.0), 0.5);
        assert!((membership_gt(5.0, 1.0, 0.0) - 0.9933071).abs() < 1e-7);
        assert!((membership_le(5.0, 1.0, 0.0) - 0.0066929).abs() < 1e-7);
        assert!(membership_gt(1.0, 3.0, 0.0) > membership_gt(1.0, 1.0, 0.0));
        assert!((membership_gt(1.0, 3.0, 0.0) - 0.9526).abs() < 1e-4);
        // saturation without overflow
        assert_eq!(membership_gt(1e6, 1e6, 0.0), 1.0);
        assert!(membership_gt(-1e6, 1e6, 0.0) > 0.0);
    }

    #[test]
    fn wem_point_values() {
        assert!((wem_and(&[0.0, 1.0], -14.0).unwrap() - 0.0495105).abs() < 1e-6);
        assert!((wem_and(&[0.0, 1.0], -5.4).unwrap() - 0.1275261).abs() < 1e-6);
        assert!((wem_or(&[0.0, 1.0], &[0.5, 0.5], 5.4).unwrap() - 0.8724739).abs() < 1e-6);
        assert!((wem_and(&[0.7; 4], -50.0).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(wem_or(&[0.3], &[1.0], 5.4).unwrap(), 0.3);
    }

    #[test]
    fn wem_contracts() {
        assert!(wem_and(&[], -1.0).is_err());
        assert!(wem_and(&[0.5], 1.0).is_err());
        assert!(wem_or(&[0.5, 0.5], &[0.6, 0.6], 1.0).is_err());
        assert!(wem_or(&[0.5], &[1.0], -1.0).is_err());
        check_simplex(&[0.1799, 0.1035, 0.1089, 0.2242, 0.3835]).unwrap();
    }

    #[test]
    fn l1_normalisation() {
        assert_eq!(normalize_scores_l1(&[1.0, 1.0, 2.0]), vec![0.25, 0.25, 0.5]);
        assert_eq!(normalize_scores_l1(&[0.0, 1.0]), vec![0.0, 1.0]);
        assert_eq!(normalize_scores_l1(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn tags_and_labels() {
        assert_eq!(condition_tag(0), "a");
        assert_eq!(condition_tag(4), "e");
        assert_eq!(condition_tag(26), "aa");
        assert_eq!(condition_tag(27), "ab");
        assert_eq!(r_label(-14.0), "very high");
        assert_eq!(r_label(5.4), "high");
        assert_eq!(r_label(2.14), "medium high");
    }

    fn one_rule() -> ClassRule {
        ClassRule {
            class: "Tug".into(),
            conditions: vec![Condition {
                comparisons: vec![Comparison { field: AisField::Length, op: CmpOp::Le, threshold: 27.5 }],
                leaf_purity: 1.0,
                leaf_support: 9,
            }],
        }
    }

    #[test]
    fn single_comparison_rule_is_its_membership() {
        let mut x = [0.0; 7];
        x[5] = 25.0;
        let got = eval_rule_fuzzy(&one_rule(), &x, &[1.0], &[0.8], -5.4, 5.4).unwrap();
        assert!((got - membership_le(25.0, 0.8, 27.5)).abs() < 1e-15);
        x[5] = 27.5;
        assert_eq!(eval_rule_fuzzy(&one_rule(), &x, &[1.0], &[0.8], -5.4, 5.4).unwrap(), 0.5);
        let empty = ClassRule { class: "x".into(), conditions: vec![] };
        assert_eq!(eval_rule_fuzzy(&empty, &x, &[], &[], -5.4, 5.4).unwrap(), 0.0);
    }

    #[test]
    fn fuzzy_rule_set_json_round_trip() {
        let mut f = FuzzyRuleSet::uniform(RuleSet::new(vec![one_rule()]), 1.5, -5.4, 5.4);
        f.slopes[0] = -0.25;
        let text = serde_json::to_string_pretty(&f).unwrap();
        assert!(text.contains("\"tag\": \"a\"") && text.contains("l ≤ 27.5"));
        let back: FuzzyRuleSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let bad = text.replace("\"weight\": 1.0", "\"weight\": 0.5");
        assert!(serde_json::from_str::<FuzzyRuleSet>(&bad).is_err());
    }
}
