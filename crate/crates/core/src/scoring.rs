//! Diagnostic scoring systems.
//!
//! A rule `f → d, s` adds the value of its confirmation category `s` to the
//! score of diagnosis `d` whenever finding `f` is observed. Category values
//! grow by a factor of four so that four equal categories make up the next
//! higher one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{chi2_sf_1df, Table2x2};
use crate::subgroup::{discover_top_k, MiningError, MiningTask, QualityMeasure, RankedPattern};
use crate::tabular::{Dataset, MISSING};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Mining(#[from] MiningError),
}

/// Symbolic confirmation category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    N4,
    N3,
    N2,
    N1,
    P1,
    P2,
    P3,
    P4,
}

impl Category {
    /// Ascending by value.
    pub const ALL: [Category; 8] = [
        Category::N4,
        Category::N3,
        Category::N2,
        Category::N1,
        Category::P1,
        Category::P2,
        Category::P3,
        Category::P4,
    ];

    pub fn value(self) -> i64 {
        match self {
            Category::N4 => -64,
            Category::N3 => -16,
            Category::N2 => -4,
            Category::N1 => -1,
            Category::P1 => 1,
            Category::P2 => 4,
            Category::P3 => 16,
            Category::P4 => 64,
        }
    }

    pub fn is_positive(self) -> bool {
        self.value() > 0
    }

    fn index(self) -> usize {
        self as usize
    }

    /// One step up the scale, clamped at P4. N1 steps to P1.
    pub fn step_up(self) -> Category {
        Category::ALL[(self.index() + 1).min(7)]
    }

    /// One step down the scale, clamped at N4. P1 steps to N1.
    pub fn step_down(self) -> Category {
        Category::ALL[self.index().saturating_sub(1)]
    }

    /// Category whose value is four times this one's, if any.
    pub fn next_stronger(self) -> Option<Category> {
        match self {
            Category::P4 | Category::N4 => None,
            c if c.is_positive() => Some(c.step_up()),
            c => Some(c.step_down()),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// An observed attribute value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub attribute: String,
    pub value: String,
    #[serde(default)]
    pub abnormal: bool,
}

impl Finding {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Self { attribute: attribute.into(), value: value.into(), abnormal: false }
    }

    pub fn abnormal(mut self, abnormal: bool) -> Self {
        self.abnormal = abnormal;
        self
    }

    pub fn key(&self) -> FindingKey {
        (self.attribute.clone(), self.value.clone())
    }
}

/// `(attribute, value)`; the identity of a finding.
pub type FindingKey = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Case {
    pub findings: Vec<Finding>,
    #[serde(default)]
    pub diagnoses: BTreeSet<String>,
}

impl Case {
    pub fn keys(&self) -> BTreeSet<FindingKey> {
        self.findings.iter().map(Finding::key).collect()
    }

    pub fn has(&self, attribute: &str, value: &str) -> bool {
        self.findings.iter().any(|f| f.attribute == attribute && f.value == value)
    }
}

/// Reads one JSON case per non-blank line.
pub fn read_cases<R: BufRead>(reader: R) -> Result<Vec<Case>, ScoringError> {
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        cases.push(serde_json::from_str(&line).map_err(|source| ScoringError::Json { line: i + 1, source })?);
    }
    Ok(cases)
}

pub fn write_cases<W: io::Write>(mut sink: W, cases: &[Case]) -> io::Result<()> {
    for case in cases {
        serde_json::to_writer(&mut sink, case)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScoreRule {
    pub attribute: String,
    pub value: String,
    pub diagnosis: String,
    pub category: Category,
}

impl ScoreRule {
    pub fn new(finding: &Finding, diagnosis: impl Into<String>, category: Category) -> Self {
        Self {
            attribute: finding.attribute.clone(),
            value: finding.value.clone(),
            diagnosis: diagnosis.into(),
            category,
        }
    }

    pub fn pair(&self) -> (FindingKey, String) {
        ((self.attribute.clone(), self.value.clone()), self.diagnosis.clone())
    }
}

/// Score thresholds in category-value units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub possible: i64,
    pub established: i64,
    pub excluded: i64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { possible: 16, established: 64, excluded: -16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Excluded,
    Unclear,
    Possible,
    Established,
}

impl Thresholds {
    pub fn status(&self, total: i64) -> Status {
        if total >= self.established {
            Status::Established
        } else if total >= self.possible {
            Status::Possible
        } else if total <= self.excluded {
            Status::Excluded
        } else {
            Status::Unclear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inference {
    pub total: i64,
    pub status: Status,
}

/// A set of scoring rules, at most one per (finding, diagnosis) pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RuleBaseFile")]
pub struct ScoreRuleBase {
    rules: Vec<ScoreRule>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Deserialize)]
struct RuleBaseFile {
    rules: Vec<ScoreRule>,
    #[serde(default)]
    thresholds: Thresholds,
}

impl TryFrom<RuleBaseFile> for ScoreRuleBase {
    type Error = ScoringError;

    fn try_from(file: RuleBaseFile) -> Result<Self, ScoringError> {
        ScoreRuleBase::new(file.rules, file.thresholds)
    }
}

impl ScoreRuleBase {
    pub fn new(rules: impl IntoIterator<Item = ScoreRule>, thresholds: Thresholds) -> Result<Self, ScoringError> {
        let mut rules: Vec<ScoreRule> = rules.into_iter().collect();
        rules.sort();
        for pair in rules.windows(2) {
            if pair[0].pair() == pair[1].pair() {
                return Err(ScoringError::Config(format!(
                    "duplicate rule {}={} -> {}",
                    pair[0].attribute, pair[0].value, pair[0].diagnosis
                )));
            }
        }
        if thresholds.possible > thresholds.established {
            return Err(ScoringError::Config("possible threshold above established threshold".into()));
        }
        Ok(Self { rules, thresholds })
    }

    pub fn rules(&self) -> &[ScoreRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn diagnoses(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.diagnosis.as_str()).collect()
    }

    pub fn pairs(&self) -> BTreeSet<(FindingKey, String)> {
        self.rules.iter().map(ScoreRule::pair).collect()
    }

    /// Rules of `diagnosis`, the diagnostic profile.
    pub fn profile<'a>(&'a self, diagnosis: &'a str) -> impl Iterator<Item = &'a ScoreRule> + 'a {
        self.rules.iter().filter(move |r| r.diagnosis == diagnosis)
    }

    fn retain(&self, keep: impl Fn(&ScoreRule) -> bool) -> Self {
        Self { rules: self.rules.iter().filter(|r| keep(r)).cloned().collect(), thresholds: self.thresholds }
    }

    fn total_for(&self, diagnosis: &str, present: &BTreeSet<FindingKey>) -> i64 {
        self.profile(diagnosis)
            .filter(|r| present.contains(&(r.attribute.clone(), r.value.clone())))
            .map(|r| r.category.value())
            .sum()
    }
}

/// Scores every diagnosis of the rule base against a set of findings.
pub fn infer(rb: &ScoreRuleBase, findings: &[Finding]) -> BTreeMap<String, Inference> {
    let present: BTreeSet<FindingKey> = findings.iter().map(Finding::key).collect();
    let mut totals: BTreeMap<String, i64> = rb.diagnoses().into_iter().map(|d| (d.to_string(), 0)).collect();
    for r in rb.rules() {
        if present.contains(&(r.attribute.clone(), r.value.clone())) {
            *totals.get_mut(&r.diagnosis).expect("diagnosis seeded") += r.category.value();
        }
    }
    totals
        .into_iter()
        .map(|(d, total)| (d, Inference { total, status: rb.thresholds.status(total) }))
        .collect()
}

/// Maps rule precision (positive association) and false-positive rate
/// (negative association) to categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTable {
    /// Ascending cut points; the i-th cut starts the category one above P1.
    pub precision: [f64; 3],
    /// Ascending cut points; the i-th cut starts the category one below N1.
    pub false_positive_rate: [f64; 3],
}

impl Default for MappingTable {
    fn default() -> Self {
        Self { precision: [0.7, 0.85, 0.95], false_positive_rate: [0.7, 0.85, 0.95] }
    }
}

impl MappingTable {
    pub fn validate(&self) -> Result<(), ScoringError> {
        for cuts in [&self.precision, &self.false_positive_rate] {
            if !cuts.windows(2).all(|w| w[0] < w[1]) || cuts.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(ScoringError::Config(format!("mapping cuts must be strictly increasing in [0,1]: {cuts:?}")));
            }
        }
        Ok(())
    }

    fn steps(cuts: &[f64; 3], x: f64) -> usize {
        cuts.iter().filter(|&&c| x >= c).count()
    }

    pub fn positive(&self, precision: f64) -> Category {
        [Category::P1, Category::P2, Category::P3, Category::P4][Self::steps(&self.precision, precision)]
    }

    pub fn negative(&self, false_positive_rate: f64) -> Category {
        [Category::N1, Category::N2, Category::N3, Category::N4][Self::steps(&self.false_positive_rate, false_positive_rate)]
    }
}

/// Background knowledge used by pruning.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneContext {
    /// Findings known to be pathological.
    #[serde(default)]
    pub abnormal: BTreeSet<FindingKey>,
    /// Partition class per finding attribute.
    #[serde(default)]
    pub attribute_class: BTreeMap<String, String>,
    /// Partition class per diagnosis.
    #[serde(default)]
    pub diagnosis_class: BTreeMap<String, String>,
}

impl PruneContext {
    /// Collects abnormality flags from case findings.
    pub fn from_cases(cases: &[Case]) -> Self {
        let abnormal = cases.iter().flat_map(|c| &c.findings).filter(|f| f.abnormal).map(Finding::key).collect();
        Self { abnormal, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PruneOptions {
    #[serde(default)]
    pub abnormality: bool,
    #[serde(default)]
    pub partition: bool,
    #[serde(default)]
    pub heuristic: bool,
}

/// Removes rules according to the selected knowledge sources.
///
/// Partition pruning only drops a rule when both classes are known.
pub fn prune(rb: &ScoreRuleBase, options: PruneOptions, ctx: &PruneContext) -> ScoreRuleBase {
    let mut out = rb.retain(|r| {
        if options.abnormality && !ctx.abnormal.contains(&(r.attribute.clone(), r.value.clone())) {
            return false;
        }
        if options.partition {
            if let (Some(a), Some(d)) = (ctx.attribute_class.get(&r.attribute), ctx.diagnosis_class.get(&r.diagnosis)) {
                if a != d {
                    return false;
                }
            }
        }
        true
    });
    if options.heuristic {
        let positive: BTreeSet<String> =
            out.rules.iter().filter(|r| r.category.is_positive()).map(|r| r.diagnosis.clone()).collect();
        out = out.retain(|r| positive.contains(&r.diagnosis));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Minimum |phi| for a rule.
    pub tau: f64,
    /// χ² significance level.
    pub alpha: f64,
    #[serde(default)]
    pub mapping: MappingTable,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self { tau: 0.5, alpha: 0.05, mapping: MappingTable::default(), thresholds: Thresholds::default() }
    }
}

/// Association of one (finding, diagnosis) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub table: Table2x2,
    pub phi: f64,
    pub p_value: f64,
}

/// 2×2 table of finding presence against diagnosis label.
pub fn association(cases: &[Case], finding: &FindingKey, diagnosis: &str) -> Option<Association> {
    let mut table = Table2x2::default();
    for case in cases {
        let f = case.has(&finding.0, &finding.1);
        let d = case.diagnoses.contains(diagnosis);
        match (f, d) {
            (true, true) => table.both += 1,
            (true, false) => table.condition_only += 1,
            (false, true) => table.target_only += 1,
            (false, false) => table.neither += 1,
        }
    }
    let phi = table.phi()?;
    Some(Association { table, phi, p_value: chi2_sf_1df(table.chi_square()) })
}

/// Learns one rule per strongly and significantly associated pair.
pub fn learn_scores(cases: &[Case], config: &LearnConfig) -> Result<ScoreRuleBase, ScoringError> {
    if cases.is_empty() {
        return Err(ScoringError::Config("no cases to learn from".into()));
    }
    if !(config.tau > 0.0 && config.tau < 1.0) {
        return Err(ScoringError::Config(format!("tau must lie in (0,1), got {}", config.tau)));
    }
    config.mapping.validate()?;
    let findings: BTreeSet<FindingKey> = cases.iter().flat_map(Case::keys).collect();
    let diagnoses: BTreeSet<&str> = cases.iter().flat_map(|c| c.diagnoses.iter().map(String::as_str)).collect();
    let mut rules = Vec::new();
    for f in &findings {
        for &d in &diagnoses {
            let Some(assoc) = association(cases, f, d) else { continue };
            if assoc.phi.abs() < config.tau || assoc.p_value >= config.alpha {
                continue;
            }
            let t = assoc.table;
            let fired = (t.both + t.condition_only) as f64;
            let category = if assoc.phi > 0.0 {
                config.mapping.positive(t.both as f64 / fired)
            } else {
                config.mapping.negative(t.condition_only as f64 / fired)
            };
            rules.push(ScoreRule {
                attribute: f.0.clone(),
                value: f.1.clone(),
                diagnosis: d.to_string(),
                category,
            });
        }
    }
    ScoreRuleBase::new(rules, config.thresholds)
}

/// Perceptron-style refinement on the symbolic scale.
///
/// Returns the refined base and the number of epochs run, including the
/// final epoch without changes.
pub fn refine_perceptron(rb: &ScoreRuleBase, cases: &[Case], max_epochs: usize) -> (ScoreRuleBase, usize) {
    let mut rb = rb.clone();
    let max_epochs = max_epochs.max(1);
    let mut epochs = 0;
    while epochs < max_epochs {
        epochs += 1;
        let mut changed = false;
        for case in cases {
            let present = case.keys();
            let predicted: BTreeSet<String> = infer(&rb, &case.findings)
                .into_iter()
                .filter(|(_, inf)| inf.status == Status::Established)
                .map(|(d, _)| d)
                .collect();
            let candidates: BTreeSet<&String> = case.diagnoses.iter().chain(predicted.iter()).collect();
            for d in candidates {
                let established = rb.total_for(d, &present) >= rb.thresholds.established;
                let labeled = case.diagnoses.contains(d);
                if established == labeled {
                    continue;
                }
                for r in rb.rules.iter_mut() {
                    if &r.diagnosis == d && present.contains(&(r.attribute.clone(), r.value.clone())) {
                        let next = if labeled { r.category.step_up() } else { r.category.step_down() };
                        if next != r.category {
                            r.category = next;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    (rb, epochs)
}

/// True when the established status of any diagnosis disagrees with the labels.
pub fn misclassifies(rb: &ScoreRuleBase, case: &Case, universe: &BTreeSet<String>) -> bool {
    let present = case.keys();
    universe
        .iter()
        .any(|d| (rb.total_for(d, &present) >= rb.thresholds.established) != case.diagnoses.contains(d))
}

/// One nominal column per finding attribute; absent attributes are MISSING and
/// multiple values are joined with `+`. The target marks misclassified cases.
pub fn misclassification_dataset(rb: &ScoreRuleBase, cases: &[Case]) -> Result<Dataset, ScoringError> {
    let universe: BTreeSet<String> = rb
        .diagnoses()
        .into_iter()
        .map(str::to_string)
        .chain(cases.iter().flat_map(|c| c.diagnoses.iter().cloned()))
        .collect();
    let attributes: BTreeSet<&str> = cases.iter().flat_map(|c| c.findings.iter().map(|f| f.attribute.as_str())).collect();
    let mut builder = Dataset::builder();
    for a in attributes {
        let column = cases.iter().map(|c| {
            let values: BTreeSet<&str> =
                c.findings.iter().filter(|f| f.attribute == a).map(|f| f.value.as_str()).collect();
            if values.is_empty() {
                MISSING.to_string()
            } else {
                values.into_iter().collect::<Vec<_>>().join("+")
            }
        });
        builder = builder.nominal(a, column.collect::<Vec<_>>());
    }
    let target: Vec<bool> = cases.iter().map(|c| misclassifies(rb, c, &universe)).collect();
    builder.target("misclassified", target).build().map_err(|e| ScoringError::Mining(e.into()))
}

/// Subgroups of cases that the rule base gets wrong, ranked by Piatetsky-Shapiro quality.
pub fn find_misclassification_patterns(
    rb: &ScoreRuleBase,
    cases: &[Case],
    k: usize,
    max_depth: usize,
) -> Result<Vec<RankedPattern>, ScoringError> {
    let dataset = misclassification_dataset(rb, cases)?;
    Ok(discover_top_k(&dataset, &MiningTask::new(QualityMeasure::PiatetskyShapiro, k, max_depth))?)
}

/// Learner configuration evaluated by cross-validation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnerConfig {
    #[serde(default)]
    pub learn: LearnConfig,
    #[serde(default)]
    pub prune: PruneOptions,
    #[serde(default)]
    pub context: PruneContext,
    /// Perceptron epochs after learning; 0 disables refinement.
    #[serde(default)]
    pub refine_epochs: usize,
}

impl LearnerConfig {
    pub fn train(&self, cases: &[Case]) -> Result<ScoreRuleBase, ScoringError> {
        let mut ctx = self.context.clone();
        ctx.abnormal.extend(PruneContext::from_cases(cases).abnormal);
        let rb = prune(&learn_scores(cases, &self.learn)?, self.prune, &ctx);
        Ok(if self.refine_epochs > 0 { refine_perceptron(&rb, cases, self.refine_epochs).0 } else { rb })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean rules per diagnosis.
    pub avg_rules: f64,
    pub avg_rules_stddev: f64,
    /// Mean number of distinct findings used by a rule base.
    pub avg_findings_used: f64,
    /// Mean number of distinct categories per diagnosis.
    pub avg_categories_per_diagnosis: f64,
    /// Fraction of (case, diagnosis) pairs whose established status matches the label.
    pub accuracy: f64,
}

/// Sequential k-fold cross-validation.
pub fn evaluate(config: &LearnerConfig, cases: &[Case], folds: usize) -> Result<Metrics, ScoringError> {
    if folds < 2 {
        return Err(ScoringError::Config("at least two folds are needed".into()));
    }
    if folds > cases.len() {
        return Err(ScoringError::Config(format!("{folds} folds but only {} cases", cases.len())));
    }
    let universe: BTreeSet<String> = cases.iter().flat_map(|c| c.diagnoses.iter().cloned()).collect();
    let n = cases.len();
    let mut rule_counts = Vec::new();
    let mut category_counts = Vec::new();
    let mut findings_used = Vec::new();
    let (mut agree, mut judged) = (0usize, 0usize);
    for fold in 0..folds {
        let (lo, hi) = (fold * n / folds, (fold + 1) * n / folds);
        let train: Vec<Case> = cases[..lo].iter().chain(&cases[hi..]).cloned().collect();
        let rb = config.train(&train)?;
        for d in &universe {
            rule_counts.push(rb.profile(d).count() as f64);
            category_counts.push(rb.profile(d).map(|r| r.category).collect::<BTreeSet<_>>().len() as f64);
        }
        findings_used.push(rb.rules().iter().map(|r| (&r.attribute, &r.value)).collect::<BTreeSet<_>>().len() as f64);
        for case in &cases[lo..hi] {
            let present = case.keys();
            for d in &universe {
                let established = rb.total_for(d, &present) >= rb.thresholds.established;
                agree += usize::from(established == case.diagnoses.contains(d));
                judged += 1;
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let avg_rules = mean(&rule_counts);
    let variance = mean(&rule_counts.iter().map(|r| (r - avg_rules).powi(2)).collect::<Vec<_>>());
    Ok(Metrics {
        avg_rules,
        avg_rules_stddev: variance.sqrt(),
        avg_findings_used: mean(&findings_used),
        avg_categories_per_diagnosis: mean(&category_counts),
        accuracy: if judged == 0 { 1.0 } else { agree as f64 / judged as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(attr: &str, d: &str, c: Category) -> ScoreRule {
        ScoreRule { attribute: attr.into(), value: "yes".into(), diagnosis: d.into(), category: c }
    }

    fn yes(attr: &str) -> Finding {
        Finding::new(attr, "yes").abnormal(true)
    }

    fn case(findings: &[&str], diagnoses: &[&str]) -> Case {
        Case {
            findings: findings.iter().map(|f| yes(f)).collect(),
            diagnoses: diagnoses.iter().map(|d| d.to_string()).collect(),
        }
    }

    #[test]
    fn category_values_quadruple() {
        for pair in Category::ALL[4..].windows(2) {
            assert_eq!(pair[1].value(), 4 * pair[0].value());
        }
        for c in Category::ALL {
            let mirror = Category::ALL[7 - c.index()];
            assert_eq!(c.value(), -mirror.value());
        }
    }

    #[test]
    fn steps_cross_zero_and_clamp() {
        assert_eq!(Category::N1.step_up(), Category::P1);
        assert_eq!(Category::P1.step_down(), Category::N1);
        assert_eq!(Category::P4.step_up(), Category::P4);
        assert_eq!(Category::N4.step_down(), Category::N4);
        assert_eq!(Category::N2.next_stronger(), Some(Category::N3));
    }

    #[test]
    fn four_p1_make_p2() {
        let rb = ScoreRuleBase::new(
            ["a", "b", "c", "e"].map(|f| rule(f, "d", Category::P1)),
            Thresholds::default(),
        )
        .unwrap();
        let out = infer(&rb, &["a", "b", "c", "e"].map(yes));
        assert_eq!(out["d"].total, Category::P2.value());
    }

    #[test]
    fn nothing_fires_is_unclear() {
        let rb = ScoreRuleBase::new([rule("a", "d", Category::P4)], Thresholds::default()).unwrap();
        assert_eq!(infer(&rb, &[]), BTreeMap::from([("d".into(), Inference { total: 0, status: Status::Unclear })]));
        assert_eq!(infer(&rb, &[yes("a")])["d"].status, Status::Established);
    }

    #[test]
    fn status_boundaries() {
        let t = Thresholds::default();
        assert_eq!(t.status(63), Status::Possible);
        assert_eq!(t.status(16), Status::Possible);
        assert_eq!(t.status(15), Status::Unclear);
        assert_eq!(t.status(-15), Status::Unclear);
        assert_eq!(t.status(-16), Status::Excluded);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = ScoreRuleBase::new(
            [rule("a", "d", Category::P1), rule("a", "d", Category::N1)],
            Thresholds::default(),
        );
        assert!(matches!(err, Err(ScoringError::Config(_))));
    }

    #[test]
    fn mapping_is_total() {
        let mt = MappingTable::default();
        assert_eq!(mt.positive(0.0), Category::P1);
        assert_eq!(mt.positive(0.7), Category::P2);
        assert_eq!(mt.positive(0.9), Category::P3);
        assert_eq!(mt.positive(1.0), Category::P4);
        assert_eq!(mt.negative(1.0), Category::N4);
        assert_eq!(mt.negative(0.1), Category::N1);
        let bad = MappingTable { precision: [0.7, 0.7, 0.9], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn perfect_implication_gives_p4() {
        let cases: Vec<Case> = (0..20)
            .map(|i| if i % 2 == 0 { case(&["f1"], &["d"]) } else { case(&["f2"], &[]) })
            .collect();
        let rb = learn_scores(&cases, &LearnConfig::default()).unwrap();
        let f1 = rb.rules().iter().find(|r| r.attribute == "f1").unwrap();
        assert_eq!(f1.category, Category::P4);
        // f2 present exactly when d is absent.
        let f2 = rb.rules().iter().find(|r| r.attribute == "f2").unwrap();
        assert_eq!(f2.category, Category::N4);
        let a = association(&cases, &("f2".into(), "yes".into()), "d").unwrap();
        assert_eq!(a.phi, -1.0);
    }

    #[test]
    fn independent_finding_has_no_rule() {
        let cases: Vec<Case> = [
            (true, true),
            (true, false),
            (false, true),
            (false, false),
        ]
        .iter()
        .cycle()
        .take(40)
        .map(|&(f, d)| case(if f { &["g"] } else { &[] }, if d { &["d"] } else { &[] }))
        .collect();
        let rb = learn_scores(&cases, &LearnConfig::default()).unwrap();
        assert!(rb.is_empty());
    }

    #[test]
    fn learn_preconditions() {
        assert!(learn_scores(&[], &LearnConfig::default()).is_err());
        let cfg = LearnConfig { tau: 1.0, ..Default::default() };
        assert!(learn_scores(&[case(&[], &[])], &cfg).is_err());
    }

    #[test]
    fn prune_examples() {
        let normal = ScoreRule { attribute: "a".into(), value: "normal".into(), diagnosis: "d".into(), category: Category::P2 };
        let rb = ScoreRuleBase::new([normal.clone(), rule("a", "d", Category::P3)], Thresholds::default()).unwrap();
        let ctx = PruneContext { abnormal: BTreeSet::from([("a".into(), "yes".into())]), ..Default::default() };
        let pruned = prune(&rb, PruneOptions { abnormality: true, ..Default::default() }, &ctx);
        assert_eq!(pruned.rules(), &[rule("a", "d", Category::P3)]);

        let rb = ScoreRuleBase::new([rule("liver_size", "nephritis", Category::P4)], Thresholds::default()).unwrap();
        let ctx = PruneContext {
            attribute_class: BTreeMap::from([("liver_size".into(), "liver".into())]),
            diagnosis_class: BTreeMap::from([("nephritis".into(), "kidney".into())]),
            ..Default::default()
        };
        assert!(prune(&rb, PruneOptions { partition: true, ..Default::default() }, &ctx).is_empty());
        // Unknown classes keep the rule.
        assert_eq!(prune(&rb, PruneOptions { partition: true, ..Default::default() }, &PruneContext::default()), rb);

        let rb = ScoreRuleBase::new(
            [rule("a", "d", Category::N2), rule("b", "d", Category::N1), rule("a", "e", Category::P1)],
            Thresholds::default(),
        )
        .unwrap();
        let pruned = prune(&rb, PruneOptions { heuristic: true, ..Default::default() }, &PruneContext::default());
        assert_eq!(pruned.rules(), &[rule("a", "e", Category::P1)]);
    }

    #[test]
    fn refine_one_step_short() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P3)], Thresholds::default()).unwrap();
        let cases: Vec<Case> = (0..5).map(|_| case(&["f"], &["d"])).collect();
        let (refined, epochs) = refine_perceptron(&rb, &cases, 10);
        assert_eq!(refined.rules()[0].category, Category::P4);
        assert_eq!(epochs, 2);
        let universe = BTreeSet::from(["d".to_string()]);
        assert!(cases.iter().all(|c| !misclassifies(&refined, c, &universe)));
    }

    #[test]
    fn refine_fixed_points() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        assert_eq!(refine_perceptron(&rb, &[case(&["f"], &["d"])], 5), (rb.clone(), 1));
        assert_eq!(refine_perceptron(&rb, &[], 5), (rb, 1));
    }

    #[test]
    fn refine_lowers_false_positive() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        let (refined, _) = refine_perceptron(&rb, &[case(&["f"], &[])], 1);
        assert_eq!(refined.rules()[0].category, Category::P3);
    }

    #[test]
    fn misclassification_dataset_columns() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        let mut c = case(&["f"], &[]);
        c.findings.push(Finding::new("f", "also"));
        let ds = misclassification_dataset(&rb, &[c, case(&["g"], &["d"])]).unwrap();
        assert_eq!(ds.attribute("f").unwrap().domain(), &["also+yes".to_string()][..]);
        assert_eq!(ds.row(1).value("f"), Some(crate::tabular::Value::Missing));
        assert_eq!(ds.attribute("g").unwrap().domain(), &["yes".to_string()][..]);
        assert_eq!(ds.target().unwrap().values, vec![true, true]);
    }

    #[test]
    fn misclassification_pattern_found() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        let mut cases = Vec::new();
        for i in 0..12 {
            let star = i % 3 == 0;
            let mut c = case(&["f"], &["d"]);
            if star {
                c.findings.push(yes("x"));
                c.diagnoses.clear();
            }
            cases.push(c);
        }
        let top = find_misclassification_patterns(&rb, &cases, 1, 2).unwrap();
        assert_eq!(top[0].pattern.selectors()[0].attribute, "x");
        assert_eq!(top[0].stats.positives, 4);
    }

    #[test]
    fn perfect_rb_has_no_positive_quality() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        let cases: Vec<Case> = (0..6).map(|i| if i % 2 == 0 { case(&["f"], &["d"]) } else { case(&["g"], &[]) }).collect();
        let top = find_misclassification_patterns(&rb, &cases, 50, 2).unwrap();
        assert!(top.iter().all(|p| p.quality <= 0.0));
        assert!(!top.is_empty());
    }

    #[test]
    fn evaluate_planted_two_folds() {
        let cases = vec![case(&["f"], &["d"]), case(&[], &[]), case(&["f"], &["d"]), case(&[], &[])];
        let cfg = LearnerConfig { learn: LearnConfig { alpha: 1.0, ..Default::default() }, ..Default::default() };
        let m = evaluate(&cfg, &cases, 2).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.avg_rules, 1.0);
    }

    #[test]
    fn evaluate_rejects_too_many_folds() {
        let cases = vec![case(&[], &[]); 10];
        assert!(matches!(evaluate(&LearnerConfig::default(), &cases, 11), Err(ScoringError::Config(_))));
    }

    #[test]
    fn rule_base_json_round_trip() {
        let rb = ScoreRuleBase::new([rule("f", "d", Category::P4)], Thresholds::default()).unwrap();
        let json = serde_json::to_string(&rb).unwrap();
        assert!(json.contains("\"category\":\"P4\""));
        let back: ScoreRuleBase = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rb);
        let dup = r#"{"rules":[{"attribute":"a","value":"v","diagnosis":"d","category":"P1"},{"attribute":"a","value":"v","diagnosis":"d","category":"N1"}]}"#;
        assert!(serde_json::from_str::<ScoreRuleBase>(dup).is_err());
    }

    #[test]
    fn cases_jsonl() {
        let text = "{\"findings\":[{\"attribute\":\"a\",\"value\":\"v\",\"abnormal\":true}],\"diagnoses\":[\"d\"]}\n\n{\"findings\":[]}\n";
        let cases = read_cases(text.as_bytes()).unwrap();
        assert_eq!(cases.len(), 2);
        assert!(cases[0].findings[0].abnormal);
        let mut out = Vec::new();
        write_cases(&mut out, &cases).unwrap();
        assert_eq!(read_cases(out.as_slice()).unwrap(), cases);
        assert!(matches!(read_cases("{".as_bytes()), Err(ScoringError::Json { line: 1, .. })));
    }
}
