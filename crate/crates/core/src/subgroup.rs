//! Top-k subgroup discovery.
//!
//! Quality functions of the `q^e = n_p^e · (t_p − t_0)` family (Piatetsky-Shapiro
//! `e = 1`, binomial `e = 0.5`, gain `e = 0`), the χ² statistic, and a mean-shift
//! quality for numeric targets. The search is a depth-first branch-and-bound
//! over the selector lattice; subtrees whose optimistic estimate falls strictly
//! below the current k-th best quality are skipped, which keeps the result
//! identical to exhaustive enumeration.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{chi2_sf_1df, Table2x2};
use crate::tabular::{Cover, Dataset, Pattern, Selector, TabularError};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("quality undefined for an empty subgroup")]
    UndefinedQuality,
    #[error("measure {0:?} needs a numeric target")]
    NoNumericTarget(QualityMeasure),
    #[error("dataset has no {0} target column")]
    MissingTarget(&'static str),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// Cover statistics of a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStats {
    /// `n_p`, the cover size.
    pub size: usize,
    /// Target-true rows inside the cover.
    pub positives: usize,
    /// `N`.
    pub population: usize,
    /// Target-true rows in the whole dataset.
    pub population_positives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericStats>,
}

/// Numeric-target part of [`SubgroupStats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    /// `mu_p`.
    pub mean: f64,
    /// `mu_0`.
    pub population_mean: f64,
    pub max_target: f64,
    /// Σ max(y − mu_0, 0) over the cover.
    pub upper_deviation: f64,
}

impl SubgroupStats {
    pub fn binary(size: usize, positives: usize, population: usize, population_positives: usize) -> Self {
        debug_assert!(positives <= size && size <= population && population_positives <= population);
        Self { size, positives, population, population_positives, numeric: None }
    }

    /// `t_p`; `None` for an empty cover.
    pub fn share(&self) -> Option<f64> {
        (self.size > 0).then(|| self.positives as f64 / self.size as f64)
    }

    /// `t_0`.
    pub fn population_share(&self) -> f64 {
        self.population_positives as f64 / self.population as f64
    }

    pub fn table(&self) -> Table2x2 {
        let target_only = self.population_positives - self.positives;
        Table2x2 {
            both: self.positives as u64,
            condition_only: (self.size - self.positives) as u64,
            target_only: target_only as u64,
            neither: (self.population - self.size - target_only) as u64,
        }
    }
}

/// Ranking function over patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QualityMeasure {
    /// `q^1`.
    #[serde(alias = "ps")]
    PiatetskyShapiro,
    /// `q^0.5`.
    Binomial,
    /// `q^0`; patterns smaller than `min_size` are filtered out.
    Gain { min_size: usize },
    #[serde(alias = "chi2")]
    ChiSquare,
    /// `n_p · (mu_p − mu_0)` over a numeric target.
    #[serde(alias = "mean")]
    MeanShift,
}

impl QualityMeasure {
    /// Exponent `e` for the size-weighted measures.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Self::PiatetskyShapiro | Self::MeanShift => Some(1.0),
            Self::Binomial => Some(0.5),
            Self::Gain { .. } => Some(0.0),
            Self::ChiSquare => None,
        }
    }

    pub fn uses_numeric_target(&self) -> bool {
        matches!(self, Self::MeanShift)
    }

    fn min_size(&self) -> usize {
        match self {
            Self::Gain { min_size } => *min_size,
            _ => 1,
        }
    }
}

/// Result of evaluating a quality function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quality {
    Value(f64),
    /// Excluded by a measure-specific size requirement.
    FilteredOut,
}

impl Quality {
    pub fn value(self) -> Option<f64> {
        match self {
            Quality::Value(v) => Some(v),
            Quality::FilteredOut => None,
        }
    }
}

fn size_weight(size: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        size
    } else if exponent == 0.5 {
        size.sqrt()
    } else if exponent == 0.0 {
        1.0
    } else {
        size.powf(exponent)
    }
}

pub fn quality(stats: &SubgroupStats, measure: QualityMeasure) -> Result<Quality, MiningError> {
    if stats.size == 0 {
        return Err(MiningError::UndefinedQuality);
    }
    if stats.size < measure.min_size() {
        return Ok(Quality::FilteredOut);
    }
    let n = stats.size as f64;
    let value = match measure {
        QualityMeasure::ChiSquare => stats.table().chi_square(),
        QualityMeasure::MeanShift => {
            let numeric = stats.numeric.ok_or(MiningError::NoNumericTarget(measure))?;
            n * (numeric.mean - numeric.population_mean)
        }
        _ => {
            let e = measure.exponent().expect("size-weighted measure");
            // n_p·t_p − n_p·t_0 over a common denominator keeps integer inputs exact.
            let population = stats.population as f64;
            let excess = stats.positives as f64 * population - n * stats.population_positives as f64;
            if e == 1.0 {
                excess / population
            } else {
                size_weight(n, e) * excess / (n * population)
            }
        }
    };
    Ok(Quality::Value(value))
}

/// χ² statistic of the pattern × target table and its p-value (1 d.f.).
///
/// A zero marginal gives `(0, 1)`.
pub fn chi_square_p(stats: &SubgroupStats) -> (f64, f64) {
    let statistic = stats.table().chi_square();
    (statistic, chi2_sf_1df(statistic))
}

/// Upper bound on the quality of every refinement of the pattern.
pub fn optimistic_estimate(stats: &SubgroupStats, measure: QualityMeasure) -> f64 {
    match measure {
        QualityMeasure::ChiSquare => {
            // χ² is convex in the (positives, negatives) counts of the
            // subgroup, so over refinements it peaks at a pure subgroup.
            let pure = |positives: usize, size: usize| {
                SubgroupStats { size, positives, ..*stats }.table().chi_square()
            };
            let negatives = stats.size - stats.positives;
            pure(stats.positives, stats.positives).max(pure(0, negatives))
        }
        QualityMeasure::MeanShift => stats.numeric.map_or(f64::INFINITY, |n| n.upper_deviation),
        _ => {
            if stats.positives == 0 {
                return 0.0;
            }
            let e = measure.exponent().expect("size-weighted measure");
            size_weight(stats.positives as f64, e) * (1.0 - stats.population_share())
        }
    }
}

/// Parameters of a top-k run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningTask {
    pub measure: QualityMeasure,
    pub k: usize,
    pub max_depth: usize,
    /// Global support floor applied to every measure.
    pub min_size: usize,
}

impl MiningTask {
    pub fn new(measure: QualityMeasure, k: usize, max_depth: usize) -> Self {
        Self { measure, k, max_depth, min_size: 1 }
    }

    pub fn with_min_size(mut self, min_size: usize) -> Self {
        self.min_size = min_size;
        self
    }

    fn validate(&self) -> Result<(), MiningError> {
        if self.k == 0 {
            return Err(MiningError::InvalidTask("k must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(MiningError::InvalidTask("max_depth must be at least 1".into()));
        }
        if let QualityMeasure::Gain { min_size: 0 } = self.measure {
            return Err(MiningError::InvalidTask("gain needs min_size ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPattern {
    pub pattern: Pattern,
    pub stats: SubgroupStats,
    pub quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

/// Ranking order: quality descending, then shorter, then lexicographic selectors.
pub fn rank_order(a: (f64, &Pattern), b: (f64, &Pattern)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.cmp(b.1))
}

/// Row of the JSON result report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub selectors: Vec<Selector>,
    pub n_p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_p: Option<f64>,
    pub quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl From<&RankedPattern> for ReportEntry {
    fn from(r: &RankedPattern) -> Self {
        Self {
            selectors: r.pattern.selectors().to_vec(),
            n_p: r.stats.size,
            t_p: r.stats.numeric.is_none().then(|| r.stats.share()).flatten(),
            mu_p: r.stats.numeric.map(|n| n.mean),
            quality: r.quality,
            p_value: r.p_value,
        }
    }
}

enum TargetView<'a> {
    Binary { positives: Cover, population_positives: usize },
    Numeric { values: &'a [f64], mean: f64, max: f64 },
}

impl TargetView<'_> {
    fn stats(&self, cover: &Cover) -> SubgroupStats {
        let size = cover.size();
        let population = cover.universe();
        match self {
            TargetView::Binary { positives, population_positives } => SubgroupStats::binary(
                size,
                cover.intersection_size(positives),
                population,
                *population_positives,
            ),
            TargetView::Numeric { values, mean, max } => {
                let mut sum = 0.0;
                let mut upper = 0.0;
                for i in cover.indices() {
                    sum += values[i];
                    if values[i] > *mean {
                        upper += values[i] - mean;
                    }
                }
                let numeric = NumericStats {
                    mean: if size > 0 { sum / size as f64 } else { f64::NAN },
                    population_mean: *mean,
                    max_target: *max,
                    upper_deviation: upper,
                };
                SubgroupStats { size, positives: 0, population, population_positives: 0, numeric: Some(numeric) }
            }
        }
    }
}

struct TopK {
    k: usize,
    entries: Vec<RankedPattern>,
}

impl TopK {
    fn threshold(&self) -> Option<f64> {
        (self.entries.len() == self.k).then(|| self.entries[self.k - 1].quality)
    }

    fn offer(&mut self, candidate: RankedPattern) {
        let pos = self
            .entries
            .binary_search_by(|e| rank_order((e.quality, &e.pattern), (candidate.quality, &candidate.pattern)))
            .unwrap_or_else(|p| p);
        if pos >= self.k {
            return;
        }
        self.entries.insert(pos, candidate);
        self.entries.truncate(self.k);
    }
}

struct Search<'a> {
    task: MiningTask,
    target: TargetView<'a>,
    selectors: Vec<(usize, Selector, Cover)>,
    floor: usize,
    binary: bool,
    pool: TopK,
}

impl Search<'_> {
    fn expand(&mut self, prefix: &Pattern, cover: &Cover, first: usize, depth: usize) -> Result<(), MiningError> {
        for idx in first..self.selectors.len() {
            let (attr, selector, sel_cover) = &self.selectors[idx];
            if prefix.selectors().iter().any(|s| s.attribute == selector.attribute) {
                continue;
            }
            let attr = *attr;
            let cover = cover.intersect(sel_cover);
            if cover.size() < self.floor {
                continue;
            }
            let pattern = prefix.refine(selector.clone()).expect("attribute checked above");
            let stats = self.target.stats(&cover);
            if let Quality::Value(q) = quality(&stats, self.task.measure)? {
                let p_value = self.binary.then(|| chi_square_p(&stats).1);
                self.pool.offer(RankedPattern { pattern: pattern.clone(), stats, quality: q, p_value });
            }
            if depth + 1 >= self.task.max_depth {
                continue;
            }
            if let Some(threshold) = self.pool.threshold() {
                // The slack absorbs rounding differences between the bound
                // and the quality formula so that ties are never pruned.
                let oe = optimistic_estimate(&stats, self.task.measure);
                if oe + 1e-9 * oe.abs().max(1.0) < threshold {
                    continue;
                }
            }
            // Selectors are grouped by attribute; skip the rest of this one.
            let next = self.selectors[idx..].iter().position(|(a, _, _)| *a != attr).map_or(self.selectors.len(), |p| idx + p);
            self.expand(&pattern, &cover, next, depth + 1)?;
        }
        Ok(())
    }
}

/// Returns the `k` best patterns of length `1..=max_depth`.
///
/// Only nominal attributes contribute selectors. The result equals that of
/// exhaustive enumeration under [`rank_order`].
pub fn discover_top_k(dataset: &Dataset, task: &MiningTask) -> Result<Vec<RankedPattern>, MiningError> {
    task.validate()?;
    let target = if task.measure.uses_numeric_target() {
        let t = dataset.numeric_target().ok_or(MiningError::MissingTarget("numeric"))?;
        let mean = t.values.iter().sum::<f64>() / t.values.len() as f64;
        let max = t.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TargetView::Numeric { values: &t.values, mean, max }
    } else {
        let t = dataset.target().ok_or(MiningError::MissingTarget("binary"))?;
        let positives = Cover::from_indices(t.values.len(), t.values.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i));
        let population_positives = positives.size();
        TargetView::Binary { positives, population_positives }
    };

    let mut attr_names: Vec<&str> = dataset.attributes().iter().filter(|a| a.is_nominal()).map(|a| a.name.as_str()).collect();
    attr_names.sort_unstable();
    let mut selectors = Vec::new();
    for selector in dataset.selectors() {
        let attr = attr_names.binary_search(&selector.attribute.as_str()).expect("nominal attribute");
        let cover = dataset.selector_cover(&selector)?;
        selectors.push((attr, selector, cover));
    }

    let mut search = Search {
        task: *task,
        binary: !task.measure.uses_numeric_target(),
        target,
        selectors,
        floor: task.min_size.max(task.measure.min_size()).max(1),
        pool: TopK { k: task.k, entries: Vec::with_capacity(task.k + 1) },
    };
    search.expand(&Pattern::empty(), &Cover::full(dataset.len()), 0, 0)?;
    Ok(search.pool.entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Dataset {
        Dataset::builder()
            .nominal("A", ["a1", "a1", "a1", "a1", "a2", "a2", "a2", "a2"])
            .nominal("B", ["b1", "b1", "b2", "b2", "b1", "b1", "b2", "b2"])
            .target("T", [true, true, true, false, false, false, false, true])
            .build()
            .unwrap()
    }

    /// Brute-force enumeration: every attribute-disjoint selector set up to
    /// `depth`, covers by row scan, quality written out directly.
    fn oracle(ds: &Dataset, e: f64, min_size: usize, depth: usize) -> Vec<(Pattern, f64)> {
        let target = &ds.target().unwrap().values;
        let t0 = target.iter().filter(|&&t| t).count() as f64 / target.len() as f64;
        let selectors = ds.selectors();
        let mut patterns = vec![Pattern::empty()];
        let mut out = Vec::new();
        for _ in 0..depth {
            let mut next = Vec::new();
            for p in &patterns {
                for s in &selectors {
                    if let Some(r) = p.refine(s.clone()) {
                        if !next.contains(&r) {
                            next.push(r);
                        }
                    }
                }
            }
            for p in &next {
                let rows: Vec<usize> = (0..ds.len()).filter(|&i| p.matches(&ds.row(i))).collect();
                if rows.len() < min_size.max(1) {
                    continue;
                }
                let n = rows.len() as f64;
                let tp = rows.iter().filter(|&&i| target[i]).count() as f64 / n;
                let w = if e == 1.0 { n } else if e == 0.5 { n.sqrt() } else { 1.0 };
                out.push((p.clone(), w * (tp - t0)));
            }
            patterns = next;
        }
        out.sort_by(|a, b| rank_order((a.1, &a.0), (b.1, &b.0)));
        out
    }

    fn pat(sels: &[(&str, &str)]) -> Pattern {
        Pattern::new(sels.iter().map(|(a, v)| Selector::new(*a, *v))).unwrap()
    }

    #[test]
    fn quality_formula_examples() {
        // n_p = 10, t_p = 0.8, t_0 = 0.5.
        let s = SubgroupStats::binary(10, 8, 20, 10);
        assert_eq!(quality(&s, QualityMeasure::PiatetskyShapiro).unwrap(), Quality::Value(3.0));
        let s = SubgroupStats::binary(4, 3, 8, 4);
        assert_eq!(quality(&s, QualityMeasure::Binomial).unwrap(), Quality::Value(0.5));
    }

    #[test]
    fn zero_deviation_is_zero_quality() {
        let s = SubgroupStats::binary(6, 3, 12, 6);
        for m in [
            QualityMeasure::PiatetskyShapiro,
            QualityMeasure::Binomial,
            QualityMeasure::Gain { min_size: 1 },
            QualityMeasure::ChiSquare,
        ] {
            assert_eq!(quality(&s, m).unwrap(), Quality::Value(0.0), "{m:?}");
        }
    }

    #[test]
    fn empty_cover_and_gain_filter() {
        let s = SubgroupStats::binary(0, 0, 8, 4);
        assert!(matches!(quality(&s, QualityMeasure::PiatetskyShapiro), Err(MiningError::UndefinedQuality)));
        let s = SubgroupStats::binary(1, 1, 8, 4);
        assert_eq!(quality(&s, QualityMeasure::Gain { min_size: 2 }).unwrap(), Quality::FilteredOut);
    }

    #[test]
    fn chi_square_examples() {
        assert_eq!(chi_square_p(&SubgroupStats::binary(4, 2, 8, 4)), (0.0, 1.0));
        let (stat, p) = chi_square_p(&SubgroupStats::binary(4, 4, 8, 4));
        assert_eq!(stat, 8.0);
        assert!((p - 0.004_677_734_981_047_276).abs() < 1e-12);
        assert_eq!(chi_square_p(&SubgroupStats::binary(4, 0, 8, 0)), (0.0, 1.0));
    }

    #[test]
    fn optimistic_estimate_examples() {
        let s = SubgroupStats::binary(4, 0, 8, 4);
        assert_eq!(optimistic_estimate(&s, QualityMeasure::PiatetskyShapiro), 0.0);
        let s = SubgroupStats::binary(4, 3, 8, 4);
        assert_eq!(optimistic_estimate(&s, QualityMeasure::PiatetskyShapiro), 1.5);
    }

    #[test]
    fn optimistic_estimate_admissible_on_reference() {
        let ds = reference();
        let target = &ds.target().unwrap().values;
        let a1 = pat(&[("A", "a1")]);
        let cover = ds.cover(&a1).unwrap();
        let pos = cover.indices().filter(|&i| target[i]).count();
        let stats = SubgroupStats::binary(cover.size(), pos, 8, 4);
        // Every refinement of {A=a1} within the reference selectors.
        for s in ds.selectors() {
            let Some(r) = a1.refine(s) else { continue };
            let c = ds.cover(&r).unwrap();
            if c.size() == 0 {
                continue;
            }
            let p = c.indices().filter(|&i| target[i]).count();
            let rs = SubgroupStats::binary(c.size(), p, 8, 4);
            for m in [QualityMeasure::PiatetskyShapiro, QualityMeasure::Binomial, QualityMeasure::ChiSquare] {
                let q = quality(&rs, m).unwrap().value().unwrap();
                assert!(optimistic_estimate(&stats, m) >= q, "{m:?} {r}");
            }
        }
    }

    #[test]
    fn reference_top_1_piatetsky_shapiro() {
        let ds = reference();
        let res = discover_top_k(&ds, &MiningTask::new(QualityMeasure::PiatetskyShapiro, 1, 2)).unwrap();
        let expected = oracle(&ds, 1.0, 1, 2);
        assert_eq!(res[0].pattern, expected[0].0);
        assert_eq!(res[0].pattern, pat(&[("A", "a1")]));
        assert_eq!(res[0].quality, 1.0);
        // {A=a1, B=b1} ties at 1.0 and loses on length.
        assert_eq!(expected[1], (pat(&[("A", "a1"), ("B", "b1")]), 1.0));
    }

    #[test]
    fn reference_top_3_piatetsky_shapiro() {
        let ds = reference();
        let res = discover_top_k(&ds, &MiningTask::new(QualityMeasure::PiatetskyShapiro, 3, 2)).unwrap();
        let expected: Vec<_> = oracle(&ds, 1.0, 1, 2).into_iter().take(3).collect();
        let got: Vec<_> = res.iter().map(|r| (r.pattern.clone(), r.quality)).collect();
        assert_eq!(got, expected);
        // Enumeration gives 1.0, 1.0 and then a zero-quality tie won by {B=b1}.
        assert_eq!(got.iter().map(|g| g.1).collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
        assert_eq!(got[2].0, pat(&[("B", "b1")]));
    }

    #[test]
    fn reference_top_1_gain() {
        let ds = reference();
        let task = MiningTask::new(QualityMeasure::Gain { min_size: 2 }, 1, 2);
        let res = discover_top_k(&ds, &task).unwrap();
        let expected = oracle(&ds, 0.0, 2, 2);
        assert_eq!(res[0].pattern, expected[0].0);
        assert_eq!(res[0].pattern, pat(&[("A", "a1"), ("B", "b1")]));
        assert_eq!(res[0].quality, 0.5);
    }

    #[test]
    fn all_filtered_gives_empty_result() {
        let ds = reference();
        let task = MiningTask::new(QualityMeasure::Gain { min_size: 100 }, 5, 2);
        assert!(discover_top_k(&ds, &task).unwrap().is_empty());
    }

    #[test]
    fn mean_shift_on_numeric_target() {
        let ds = Dataset::builder()
            .nominal("shift", ["day", "day", "night", "night"])
            .numeric_target("kpi", [0.0, 0.0, 2.0, 4.0])
            .build()
            .unwrap();
        let res = discover_top_k(&ds, &MiningTask::new(QualityMeasure::MeanShift, 1, 1)).unwrap();
        assert_eq!(res[0].pattern, pat(&[("shift", "night")]));
        // 2 · (3 − 1.5)
        assert_eq!(res[0].quality, 3.0);
        assert!(res[0].p_value.is_none());
    }

    #[test]
    fn invalid_tasks() {
        let ds = reference();
        assert!(discover_top_k(&ds, &MiningTask::new(QualityMeasure::PiatetskyShapiro, 0, 1)).is_err());
        assert!(discover_top_k(&ds, &MiningTask::new(QualityMeasure::PiatetskyShapiro, 1, 0)).is_err());
        assert!(matches!(
            discover_top_k(&ds, &MiningTask::new(QualityMeasure::MeanShift, 1, 1)),
            Err(MiningError::MissingTarget("numeric"))
        ));
    }

    #[test]
    fn measure_names_deserialize() {
        let m: QualityMeasure = serde_json::from_str(r#"{"kind":"gain","min_size":3}"#).unwrap();
        assert_eq!(m, QualityMeasure::Gain { min_size: 3 });
        let m: QualityMeasure = serde_json::from_str(r#"{"kind":"ps"}"#).unwrap();
        assert_eq!(m, QualityMeasure::PiatetskyShapiro);
    }
}
