//! Tabular datasets with nominal selectors and bitset covers.
//!
//! A [`Dataset`] is immutable once built. Nominal columns are dictionary
//! encoded against a sorted value domain; the reserved [`MISSING`] token is
//! stored as an absent code and never matches any selector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved token for a missing cell.
pub const MISSING: &str = "MISSING";

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} cells, found {found}")]
    Format { row: u64, expected: usize, found: usize },
    #[error("schema: {0}")]
    Schema(String),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Parse { row: u64, column: String, value: String },
    #[error("dataset has no rows (N ≥ 1 violated)")]
    Empty,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {0:?} is not numeric")]
    NotNumeric(String),
    #[error("attribute {0:?} is not nominal")]
    NotNominal(String),
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("column {name:?} has {found} values, expected {expected}")]
    Length { name: String, expected: usize, found: usize },
    #[error("bins must be at least 2, got {0}")]
    Bins(usize),
    #[error("pattern selects attribute {0:?} twice")]
    RepeatedAttribute(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = TabularError> = std::result::Result<T, E>;

/// How a CSV column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Nominal,
    Numeric,
    /// Binary target (`1/0`, `true/false`, `yes/no`).
    Target,
    /// Numeric target for mean-shift mining.
    NumericTarget,
}

impl std::str::FromStr for ColumnKind {
    type Err = TabularError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nominal" => Ok(Self::Nominal),
            "numeric" => Ok(Self::Numeric),
            "target" => Ok(Self::Target),
            "numeric-target" | "numeric_target" => Ok(Self::NumericTarget),
            other => Err(TabularError::Schema(format!("unknown column kind {other:?}"))),
        }
    }
}

/// Column name → kind mapping. Columns absent from the schema are nominal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub kinds: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: impl Into<String>, kind: ColumnKind) -> Self {
        self.kinds.insert(column.into(), kind);
        self
    }

    /// Parses the `name=kind,name=kind` sidecar form used on the command line.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut schema = Schema::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, kind) = part
                .split_once('=')
                .ok_or_else(|| TabularError::Schema(format!("expected name=kind, got {part:?}")))?;
            schema.kinds.insert(name.trim().to_string(), kind.parse()?);
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Nominal { domain: Vec<String>, codes: Vec<Option<u32>> },
    Numeric(Vec<Option<f64>>),
}

impl Column {
    fn nominal(values: Vec<Option<String>>) -> Self {
        let domain: Vec<String> = values
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, u32> =
            domain.iter().enumerate().map(|(i, v)| (v.as_str(), i as u32)).collect();
        let codes = values.iter().map(|v| v.as_deref().map(|v| index[v])).collect();
        Column::Nominal { domain, codes }
    }

    fn len(&self) -> usize {
        match self {
            Column::Nominal { codes, .. } => codes.len(),
            Column::Numeric(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub column: Column,
}

impl Attribute {
    pub fn is_nominal(&self) -> bool {
        matches!(self.column, Column::Nominal { .. })
    }

    /// Sorted value domain of a nominal attribute; empty for numeric ones.
    pub fn domain(&self) -> &[String] {
        match &self.column {
            Column::Nominal { domain, .. } => domain,
            Column::Numeric(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTarget {
    pub name: String,
    pub values: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericTarget {
    pub name: String,
    pub values: Vec<f64>,
}

/// A cell value as seen through a [`Row`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Nominal(&'a str),
    Numeric(f64),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    attributes: Vec<Attribute>,
    target: Option<BinaryTarget>,
    numeric_target: Option<NumericTarget>,
    rows: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    dataset: &'a Dataset,
    index: usize,
}

impl<'a> Row<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn value(&self, attribute: &str) -> Option<Value<'a>> {
        let attr = self.dataset.attribute(attribute)?;
        Some(match &attr.column {
            Column::Nominal { domain, codes } => match codes[self.index] {
                Some(c) => Value::Nominal(&domain[c as usize]),
                None => Value::Missing,
            },
            Column::Numeric(values) => match values[self.index] {
                Some(v) => Value::Numeric(v),
                None => Value::Missing,
            },
        })
    }
}

/// Equality test `attribute = value` on a nominal attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Selector {
    pub attribute: String,
    pub value: String,
}

impl Selector {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Self { attribute: attribute.into(), value: value.into() }
    }

    /// True iff the row carries exactly this nominal value. `MISSING` never matches.
    pub fn matches(&self, row: &Row<'_>) -> bool {
        matches!(row.value(&self.attribute), Some(Value::Nominal(v)) if v == self.value)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.attribute, self.value)
    }
}

/// Conjunction of selectors, at most one per attribute, kept sorted.
///
/// The derived ordering compares selector lists lexicographically, which is
/// the tie-break order used when ranking patterns.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Selector>", into = "Vec<Selector>")]
pub struct Pattern {
    selectors: Vec<Selector>,
}

impl Pattern {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(selectors: impl IntoIterator<Item = Selector>) -> Result<Self> {
        let mut selectors: Vec<Selector> = selectors.into_iter().collect();
        selectors.sort();
        for pair in selectors.windows(2) {
            if pair[0].attribute == pair[1].attribute {
                return Err(TabularError::RepeatedAttribute(pair[0].attribute.clone()));
            }
        }
        Ok(Self { selectors })
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }

    /// Returns the pattern extended by `selector`, or `None` if its attribute is already used.
    pub fn refine(&self, selector: Selector) -> Option<Pattern> {
        if self.selectors.iter().any(|s| s.attribute == selector.attribute) {
            return None;
        }
        let mut selectors = self.selectors.clone();
        selectors.push(selector);
        selectors.sort();
        Some(Pattern { selectors })
    }

    pub fn matches(&self, row: &Row<'_>) -> bool {
        self.selectors.iter().all(|s| s.matches(row))
    }
}

impl TryFrom<Vec<Selector>> for Pattern {
    type Error = TabularError;

    fn try_from(value: Vec<Selector>) -> Result<Self> {
        Pattern::new(value)
    }
}

impl From<Pattern> for Vec<Selector> {
    fn from(p: Pattern) -> Self {
        p.selectors
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.selectors.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> = self.selectors.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Set of covered row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    bits: FixedBitSet,
}

impl Cover {
    pub fn full(rows: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(rows);
        bits.insert_range(..);
        Self { bits }
    }

    pub fn empty(rows: usize) -> Self {
        Self { bits: FixedBitSet::with_capacity(rows) }
    }

    pub fn from_indices(rows: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut cover = Self::empty(rows);
        for i in indices {
            cover.bits.insert(i);
        }
        cover
    }

    /// Number of covered rows (`n_p`).
    pub fn size(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.bits.contains(row)
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn intersect(&self, other: &Cover) -> Cover {
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        Cover { bits }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    /// Size of the intersection with `other` without allocating.
    pub fn intersection_size(&self, other: &Cover) -> usize {
        self.bits.intersection_count(&other.bits)
    }
}

/// Builder for in-memory datasets.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    columns: Vec<(String, RawColumn)>,
    target: Option<BinaryTarget>,
    numeric_target: Option<NumericTarget>,
}

#[derive(Debug)]
enum RawColumn {
    Nominal(Vec<Option<String>>),
    Numeric(Vec<Option<f64>>),
}

impl DatasetBuilder {
    /// Adds a nominal column; the literal [`MISSING`] token becomes a missing cell.
    pub fn nominal<S: AsRef<str>>(mut self, name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        let values = values
            .into_iter()
            .map(|v| {
                let v = v.as_ref();
                (v != MISSING).then(|| v.to_string())
            })
            .collect();
        self.columns.push((name.into(), RawColumn::Nominal(values)));
        self
    }

    pub fn numeric(mut self, name: impl Into<String>, values: impl IntoIterator<Item = Option<f64>>) -> Self {
        self.columns.push((name.into(), RawColumn::Numeric(values.into_iter().collect())));
        self
    }

    pub fn target(mut self, name: impl Into<String>, values: impl IntoIterator<Item = bool>) -> Self {
        self.target = Some(BinaryTarget { name: name.into(), values: values.into_iter().collect() });
        self
    }

    pub fn numeric_target(mut self, name: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        self.numeric_target =
            Some(NumericTarget { name: name.into(), values: values.into_iter().collect() });
        self
    }

    pub fn build(self) -> Result<Dataset> {
        let rows = self
            .columns
            .first()
            .map(|(_, c)| match c {
                RawColumn::Nominal(v) => v.len(),
                RawColumn::Numeric(v) => v.len(),
            })
            .or_else(|| self.target.as_ref().map(|t| t.values.len()))
            .or_else(|| self.numeric_target.as_ref().map(|t| t.values.len()))
            .unwrap_or(0);
        if rows == 0 {
            return Err(TabularError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut attributes = Vec::with_capacity(self.columns.len());
        for (name, raw) in self.columns {
            if !seen.insert(name.clone()) {
                return Err(TabularError::DuplicateAttribute(name));
            }
            let column = match raw {
                RawColumn::Nominal(v) => Column::nominal(v),
                RawColumn::Numeric(v) => Column::Numeric(v),
            };
            if column.len() != rows {
                return Err(TabularError::Length { name, expected: rows, found: column.len() });
            }
            attributes.push(Attribute { name, column });
        }
        for (name, len) in self
            .target
            .iter()
            .map(|t| (&t.name, t.values.len()))
            .chain(self.numeric_target.iter().map(|t| (&t.name, t.values.len())))
        {
            if !seen.insert(name.clone()) {
                return Err(TabularError::DuplicateAttribute(name.clone()));
            }
            if len != rows {
                return Err(TabularError::Length { name: name.clone(), expected: rows, found: len });
            }
        }
        Ok(Dataset { attributes, target: self.target, numeric_target: self.numeric_target, rows })
    }
}

/// Binning strategy for [`Dataset::discretize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinStrategy {
    EqualWidth,
    EqualFrequency,
}

#[derive(Debug, Clone)]
pub struct Discretized {
    pub dataset: Dataset,
    /// Set when the column collapsed into a single bin (constant values).
    pub single_bin: bool,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    /// Reads a headed CSV (RFC 4180 quoting) using `schema` to type columns.
    pub fn load_csv<R: io::Read>(source: R, schema: &Schema) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        for name in schema.kinds.keys() {
            if !header.contains(name) {
                return Err(TabularError::Schema(format!("column {name:?} not in header")));
            }
        }
        let kinds: Vec<ColumnKind> = header
            .iter()
            .map(|h| schema.kinds.get(h).copied().unwrap_or(ColumnKind::Nominal))
            .collect();
        for kind in [ColumnKind::Target, ColumnKind::NumericTarget] {
            if kinds.iter().filter(|&&k| k == kind).count() > 1 {
                return Err(TabularError::Schema(format!("at most one {kind:?} column allowed")));
            }
        }

        let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != header.len() {
                return Err(TabularError::Format { row: line, expected: header.len(), found: record.len() });
            }
            for (col, cell) in record.iter().enumerate() {
                cells[col].push(cell.to_string());
            }
        }
        if cells.first().map_or(true, Vec::is_empty) {
            return Err(TabularError::Empty);
        }

        let parse_err = |row: usize, column: &str, value: &str| TabularError::Parse {
            row: row as u64 + 2,
            column: column.to_string(),
            value: value.to_string(),
        };
        let mut builder = Dataset::builder();
        for ((name, kind), values) in header.iter().zip(kinds).zip(cells) {
            builder = match kind {
                ColumnKind::Nominal => builder.nominal(name.clone(), values),
                ColumnKind::Numeric => {
                    let parsed = values
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let v = v.trim();
                            if v == MISSING {
                                Ok(None)
                            } else {
                                v.parse::<f64>().map(Some).map_err(|_| parse_err(i, name, v))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    builder.numeric(name.clone(), parsed)
                }
                ColumnKind::Target => {
                    let parsed = values
                        .iter()
                        .enumerate()
                        .map(|(i, v)| parse_bool(v).ok_or_else(|| parse_err(i, name, v)))
                        .collect::<Result<Vec<_>>>()?;
                    builder.target(name.clone(), parsed)
                }
                ColumnKind::NumericTarget => {
                    let parsed = values
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v.trim().parse::<f64>().map_err(|_| parse_err(i, name, v)))
                        .collect::<Result<Vec<_>>>()?;
                    builder.numeric_target(name.clone(), parsed)
                }
            };
        }
        builder.build()
    }

    /// Writes the dataset back to CSV together with a matching schema.
    pub fn write_csv<W: io::Write>(&self, sink: W) -> Result<Schema> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut schema = Schema::new();
        let mut header: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        for a in &self.attributes {
            let kind = if a.is_nominal() { ColumnKind::Nominal } else { ColumnKind::Numeric };
            schema.kinds.insert(a.name.clone(), kind);
        }
        if let Some(t) = &self.target {
            header.push(&t.name);
            schema.kinds.insert(t.name.clone(), ColumnKind::Target);
        }
        if let Some(t) = &self.numeric_target {
            header.push(&t.name);
            schema.kinds.insert(t.name.clone(), ColumnKind::NumericTarget);
        }
        writer.write_record(&header)?;
        for i in 0..self.rows {
            let row = self.row(i);
            let mut record: Vec<String> = self
                .attributes
                .iter()
                .map(|a| match row.value(&a.name) {
                    Some(Value::Nominal(v)) => v.to_string(),
                    Some(Value::Numeric(v)) => v.to_string(),
                    _ => MISSING.to_string(),
                })
                .collect();
            if let Some(t) = &self.target {
                record.push(if t.values[i] { "1" } else { "0" }.to_string());
            }
            if let Some(t) = &self.numeric_target {
                record.push(t.values[i].to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(schema)
    }

    /// Number of rows `N`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn target(&self) -> Option<&BinaryTarget> {
        self.target.as_ref()
    }

    pub fn numeric_target(&self) -> Option<&NumericTarget> {
        self.numeric_target.as_ref()
    }

    pub fn row(&self, index: usize) -> Row<'_> {
        assert!(index < self.rows, "row {index} out of range");
        Row { dataset: self, index }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.rows).map(move |index| Row { dataset: self, index })
    }

    /// Cover of a single selector.
    pub fn selector_cover(&self, selector: &Selector) -> Result<Cover> {
        let attr = self
            .attribute(&selector.attribute)
            .ok_or_else(|| TabularError::UnknownAttribute(selector.attribute.clone()))?;
        let Column::Nominal { domain, codes } = &attr.column else {
            return Err(TabularError::NotNominal(attr.name.clone()));
        };
        let mut cover = Cover::empty(self.rows);
        if let Ok(code) = domain.binary_search(&selector.value) {
            let code = code as u32;
            for (i, c) in codes.iter().enumerate() {
                if *c == Some(code) {
                    cover.bits.insert(i);
                }
            }
        }
        Ok(cover)
    }

    /// Rows on which every selector of `pattern` holds; the empty pattern covers all rows.
    pub fn cover(&self, pattern: &Pattern) -> Result<Cover> {
        let mut cover = Cover::full(self.rows);
        for selector in pattern.selectors() {
            cover = cover.intersect(&self.selector_cover(selector)?);
        }
        Ok(cover)
    }

    /// Every `attribute = value` selector over nominal attributes, sorted.
    pub fn selectors(&self) -> Vec<Selector> {
        let mut out: Vec<Selector> = self
            .attributes
            .iter()
            .flat_map(|a| a.domain().iter().map(move |v| Selector::new(a.name.clone(), v.clone())))
            .collect();
        out.sort();
        out
    }

    /// Replaces a numeric attribute by `[lo,hi)` interval tokens. The last bin is closed.
    pub fn discretize(&self, attribute: &str, bins: usize, strategy: BinStrategy) -> Result<Discretized> {
        if bins < 2 {
            return Err(TabularError::Bins(bins));
        }
        let position = self
            .attributes
            .iter()
            .position(|a| a.name == attribute)
            .ok_or_else(|| TabularError::UnknownAttribute(attribute.to_string()))?;
        let Column::Numeric(values) = &self.attributes[position].column else {
            return Err(TabularError::NotNumeric(attribute.to_string()));
        };

        let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let (Some(&min), Some(&max)) = (sorted.first(), sorted.last()) else {
            // Every cell is missing; nothing to bin.
            return Ok(Discretized { dataset: self.clone(), single_bin: true });
        };

        let mut cuts: Vec<f64> = match strategy {
            BinStrategy::EqualWidth => {
                let width = (max - min) / bins as f64;
                (1..bins).map(|i| min + width * i as f64).collect()
            }
            BinStrategy::EqualFrequency => (1..bins)
                .filter_map(|i| {
                    let split = i * sorted.len() / bins;
                    if split == 0 {
                        return None;
                    }
                    // Keep equal values together: the boundary is the first
                    // value strictly above the last one of the lower chunk.
                    let last_low = sorted[split - 1];
                    sorted[split..].iter().copied().find(|&v| v > last_low)
                })
                .collect(),
        };
        cuts.retain(|&c| c > min && c <= max);
        cuts.dedup();

        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(min);
        edges.extend(cuts);
        edges.push(max);
        let single_bin = edges.len() == 2;
        let labels: Vec<String> = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let close = if i + 2 == edges.len() { ']' } else { ')' };
                format!("[{},{}{}", w[0], w[1], close)
            })
            .collect();
        let bin_of = |v: f64| -> usize {
            let inner = &edges[1..edges.len() - 1];
            inner.iter().take_while(|&&c| v >= c).count()
        };
        let tokens: Vec<Option<String>> =
            values.iter().map(|v| v.map(|v| labels[bin_of(v)].clone())).collect();

        let mut dataset = self.clone();
        dataset.attributes[position].column = Column::nominal(tokens);
        Ok(Discretized { dataset, single_bin })
    }
}
