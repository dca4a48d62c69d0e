//! Logistical balance KPI over a bill of materials and a bookings ledger.
//!
//! For a material `m` with direct BOM parents `p`:
//!
//! ```text
//! balance(m) = inflow(m) + produced(m) − outflow(m) − consumed(m)
//!              − Σ_p produced(p) · quantity(p → m)
//! ```
//!
//! Consistent books make every balance zero. Only direct parents enter the
//! sum; multi-level roll-up is not performed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{Dataset, TabularError};

/// Token used for empty nominal booking attributes.
pub const EMPTY: &str = "EMPTY";

#[derive(Debug, Error)]
pub enum KpiError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("bill of materials contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub id: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomEdge {
    pub parent: String,
    pub child: String,
    /// Units of child per unit of parent.
    pub quantity: f64,
}

/// Bill of materials. Acyclic by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureGraph {
    materials: BTreeMap<String, Material>,
    edges: Vec<BomEdge>,
}

impl StructureGraph {
    /// Builds the graph, rejecting non-positive quantities and cycles.
    pub fn new(materials: impl IntoIterator<Item = Material>, edges: Vec<BomEdge>) -> Result<Self, KpiError> {
        let mut map: BTreeMap<String, Material> = BTreeMap::new();
        for m in materials {
            map.insert(m.id.clone(), m);
        }
        for (i, e) in edges.iter().enumerate() {
            if !(e.quantity > 0.0) || !e.quantity.is_finite() {
                return Err(KpiError::Format {
                    line: i as u64 + 2,
                    message: format!("quantity must be positive, got {}", e.quantity),
                });
            }
            for id in [&e.parent, &e.child] {
                map.entry(id.clone()).or_insert_with(|| Material { id: id.clone(), label: None, price: None });
            }
        }
        let graph = Self { materials: map, edges };
        if let Some(cycle) = graph.find_cycle() {
            return Err(KpiError::Cycle(cycle));
        }
        Ok(graph)
    }

    pub fn materials(&self) -> impl Iterator<Item = &Material> {
        self.materials.values()
    }

    pub fn material(&self, id: &str) -> Option<&Material> {
        self.materials.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.materials.contains_key(id)
    }

    pub fn edges(&self) -> &[BomEdge] {
        &self.edges
    }

    pub fn parents<'a>(&'a self, child: &'a str) -> impl Iterator<Item = &'a BomEdge> + 'a {
        self.edges.iter().filter(move |e| e.child == child)
    }

    pub fn children<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a BomEdge> + 'a {
        self.edges.iter().filter(move |e| e.parent == parent)
    }

    pub fn degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.parent == id || e.child == id).count()
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            adjacency.entry(&e.parent).or_default().push(&e.child);
        }
        let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
        for start in self.materials.keys() {
            if marks.contains_key(start.as_str()) {
                continue;
            }
            // Iterative DFS keeping the current path for cycle extraction.
            let mut path: Vec<&str> = vec![start];
            let mut cursors: Vec<usize> = vec![0];
            marks.insert(start, Mark::Open);
            while let Some(&node) = path.last() {
                let cursor = cursors.last_mut().expect("parallel stacks");
                let next = adjacency.get(node).and_then(|c| c.get(*cursor)).copied();
                *cursor += 1;
                match next {
                    Some(child) => match marks.get(child) {
                        Some(Mark::Open) => {
                            let from = path.iter().position(|&n| n == child).expect("open node on path");
                            let mut cycle: Vec<String> = path[from..].iter().map(|s| s.to_string()).collect();
                            cycle.push(child.to_string());
                            return Some(cycle);
                        }
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(child, Mark::Open);
                            path.push(child);
                            cursors.push(0);
                        }
                    },
                    None => {
                        marks.insert(node, Mark::Done);
                        path.pop();
                        cursors.pop();
                    }
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BookingKind {
    Production,
    Consumption,
    Inflow,
    Outflow,
}

impl FromStr for BookingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "production" => Ok(Self::Production),
            "consumption" => Ok(Self::Consumption),
            "inflow" => Ok(Self::Inflow),
            "outflow" => Ok(Self::Outflow),
            other => Err(format!("unknown booking kind {other:?}")),
        }
    }
}

impl fmt::Display for BookingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Production => "production",
            Self::Consumption => "consumption",
            Self::Inflow => "inflow",
            Self::Outflow => "outflow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booking {
    pub material: String,
    pub kind: BookingKind,
    pub amount: f64,
    pub shift: String,
    pub storage_group: String,
    pub cost_center_id: String,
}

impl Booking {
    pub fn new(material: impl Into<String>, kind: BookingKind, amount: f64) -> Self {
        Self {
            material: material.into(),
            kind,
            amount,
            shift: EMPTY.into(),
            storage_group: EMPTY.into(),
            cost_center_id: EMPTY.into(),
        }
    }

    pub fn with_shift(mut self, shift: impl Into<String>) -> Self {
        self.shift = shift.into();
        self
    }

    pub fn with_storage_group(mut self, group: impl Into<String>) -> Self {
        self.storage_group = group.into();
        self
    }

    pub fn with_cost_center(mut self, id: impl Into<String>) -> Self {
        self.cost_center_id = id.into();
        self
    }
}

/// Bookings ledger. Bookings whose material is absent from the structure
/// graph are kept and reported as dangling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccountingGraph {
    bookings: Vec<Booking>,
    dangling: BTreeSet<usize>,
}

impl AccountingGraph {
    pub fn new(bookings: Vec<Booking>, structure: &StructureGraph) -> Self {
        let dangling = bookings
            .iter()
            .enumerate()
            .filter(|(_, b)| !structure.contains(&b.material))
            .map(|(i, _)| i)
            .collect();
        Self { bookings, dangling }
    }

    pub fn bookings(&self) -> &[Booking] {
        &self.bookings
    }

    pub fn is_dangling(&self, index: usize) -> bool {
        self.dangling.contains(&index)
    }

    /// Materials booked but unknown to the structure graph.
    pub fn dangling_materials(&self) -> BTreeSet<&str> {
        self.dangling.iter().map(|&i| self.bookings[i].material.as_str()).collect()
    }

    fn totals(&self) -> BTreeMap<(&str, BookingKind), f64> {
        let mut totals = BTreeMap::new();
        for b in &self.bookings {
            *totals.entry((b.material.as_str(), b.kind)).or_insert(0.0) += b.amount;
        }
        totals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiValue {
    pub material: String,
    pub balance: f64,
}

#[derive(Debug, Deserialize)]
struct StructureRecord {
    parent: String,
    child: String,
    quantity: f64,
    #[serde(default)]
    price_parent: Option<f64>,
    #[serde(default)]
    price_child: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct BookingRecord {
    material: String,
    kind: String,
    amount: f64,
    #[serde(default)]
    shift: String,
    #[serde(default)]
    storage_group: String,
    #[serde(default)]
    cost_center_id: String,
}

fn nominal_or_empty(s: String) -> String {
    let s = s.trim();
    if s.is_empty() {
        EMPTY.to_string()
    } else {
        s.to_string()
    }
}

/// Loads `parent,child,quantity,price_parent,price_child` and
/// `material,kind,amount,shift,storage_group,cost_center_id` CSVs.
pub fn load_graphs<S: io::Read, B: io::Read>(
    structure_csv: S,
    bookings_csv: B,
) -> Result<(StructureGraph, AccountingGraph), KpiError> {
    let mut materials: BTreeMap<String, Material> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(structure_csv);
    for (i, record) in reader.deserialize::<StructureRecord>().enumerate() {
        let r = record?;
        for (id, price) in [(&r.parent, r.price_parent), (&r.child, r.price_child)] {
            let entry = materials
                .entry(id.clone())
                .or_insert_with(|| Material { id: id.clone(), label: None, price: None });
            if price.is_some() {
                entry.price = price;
            }
        }
        if r.parent == r.child {
            return Err(KpiError::Cycle(vec![r.parent.clone(), r.child]));
        }
        let _ = i;
        edges.push(BomEdge { parent: r.parent, child: r.child, quantity: r.quantity });
    }
    let structure = StructureGraph::new(materials.into_values(), edges)?;

    let mut bookings = Vec::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bookings_csv);
    for (i, record) in reader.deserialize::<BookingRecord>().enumerate() {
        let r = record?;
        let line = i as u64 + 2;
        let kind = r.kind.parse().map_err(|message| KpiError::Format { line, message })?;
        if !(r.amount >= 0.0) {
            return Err(KpiError::Format { line, message: format!("negative amount {}", r.amount) });
        }
        bookings.push(Booking {
            material: r.material,
            kind,
            amount: r.amount,
            shift: nominal_or_empty(r.shift),
            storage_group: nominal_or_empty(r.storage_group),
            cost_center_id: nominal_or_empty(r.cost_center_id),
        });
    }
    let accounting = AccountingGraph::new(bookings, &structure);
    Ok((structure, accounting))
}

fn balance_from(totals: &BTreeMap<(&str, BookingKind), f64>, material: &str, structure: &StructureGraph) -> f64 {
    let get = |m: &str, k: BookingKind| totals.get(&(m, k)).copied().unwrap_or(0.0);
    let mut balance = get(material, BookingKind::Inflow) + get(material, BookingKind::Production)
        - get(material, BookingKind::Outflow)
        - get(material, BookingKind::Consumption);
    for edge in structure.parents(material) {
        balance -= get(&edge.parent, BookingKind::Production) * edge.quantity;
    }
    balance
}

pub fn compute_kpi(material: &str, structure: &StructureGraph, accounting: &AccountingGraph) -> Result<KpiValue, KpiError> {
    if !structure.contains(material) {
        return Err(KpiError::UnknownMaterial(material.to_string()));
    }
    let totals = accounting.totals();
    Ok(KpiValue { material: material.to_string(), balance: balance_from(&totals, material, structure) })
}

/// Balances of every material in the structure graph, ordered by id.
pub fn compute_all(structure: &StructureGraph, accounting: &AccountingGraph) -> Vec<KpiValue> {
    let totals = accounting.totals();
    structure
        .materials()
        .map(|m| KpiValue { material: m.id.clone(), balance: balance_from(&totals, &m.id, structure) })
        .collect()
}

/// Row granularity of the feature table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// One row per material; booking attributes take the most frequent value.
    Material,
    /// One row per (material, shift, storage group, cost center) booking group.
    BookingGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Shift,
    StorageGroup,
    CostCenterId,
    PriceBand,
    DegreeBand,
}

impl Feature {
    pub const ALL: [Feature; 5] =
        [Feature::Shift, Feature::StorageGroup, Feature::CostCenterId, Feature::PriceBand, Feature::DegreeBand];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::Shift => "shift",
            Feature::StorageGroup => "storage_group",
            Feature::CostCenterId => "cost_center_id",
            Feature::PriceBand => "price_band",
            Feature::DegreeBand => "degree_band",
        }
    }
}

/// Name of the numeric target column (|balance|).
pub const TARGET: &str = "abs_balance";

fn degree_band(degree: usize) -> &'static str {
    match degree {
        0 => "0",
        1 => "1",
        2..=3 => "2-3",
        _ => "4+",
    }
}

fn price_bands(structure: &StructureGraph) -> impl Fn(Option<f64>) -> &'static str {
    let mut prices: Vec<f64> = structure.materials().filter_map(|m| m.price).collect();
    prices.sort_by(f64::total_cmp);
    let cut = |q: usize| prices.get((prices.len() * q / 3).min(prices.len().saturating_sub(1))).copied();
    let (low, mid) = (cut(1), cut(2));
    move |price| match (price, low, mid) {
        (None, _, _) => EMPTY,
        (Some(p), Some(l), _) if p < l => "low",
        (Some(p), _, Some(m)) if p < m => "mid",
        _ => "high",
    }
}

fn mode<'a>(values: impl Iterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iteration makes ties resolve to the lexicographically first value.
    counts
        .into_iter()
        .fold((EMPTY, 0), |best, (v, c)| if c > best.1 { (v, c) } else { best })
        .0
        .to_string()
}

/// Nominal feature table with numeric target `|balance|` for mean-shift mining.
pub fn kpi_feature_table(
    structure: &StructureGraph,
    accounting: &AccountingGraph,
    features: &[Feature],
    granularity: Granularity,
) -> Result<Dataset, KpiError> {
    let kpis: BTreeMap<String, f64> =
        compute_all(structure, accounting).into_iter().map(|k| (k.material, k.balance)).collect();
    let band = price_bands(structure);
    let mut by_material: BTreeMap<&str, Vec<&Booking>> = BTreeMap::new();
    for b in accounting.bookings() {
        by_material.entry(&b.material).or_default().push(b);
    }

    let booking_value = |b: &Booking, f: Feature| -> String {
        match f {
            Feature::Shift => b.shift.clone(),
            Feature::StorageGroup => b.storage_group.clone(),
            Feature::CostCenterId => b.cost_center_id.clone(),
            _ => unreachable!("material-level feature"),
        }
    };
    let material_value = |id: &str, f: Feature| -> String {
        match f {
            Feature::PriceBand => band(structure.material(id).and_then(|m| m.price)).to_string(),
            Feature::DegreeBand => degree_band(structure.degree(id)).to_string(),
            _ => unreachable!("booking-level feature"),
        }
    };
    let is_booking_feature = |f: Feature| matches!(f, Feature::Shift | Feature::StorageGroup | Feature::CostCenterId);

    let mut columns: Vec<Vec<String>> = vec![Vec::new(); features.len()];
    let mut target = Vec::new();
    for m in structure.materials() {
        let balance = kpis[&m.id].abs();
        let bookings = by_material.get(m.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        match granularity {
            Granularity::Material => {
                for (col, &f) in features.iter().enumerate() {
                    let value = if is_booking_feature(f) {
                        let values: Vec<String> = bookings.iter().map(|b| booking_value(b, f)).collect();
                        mode(values.iter().map(String::as_str))
                    } else {
                        material_value(&m.id, f)
                    };
                    columns[col].push(value);
                }
                target.push(balance);
            }
            Granularity::BookingGroup => {
                let groups: BTreeSet<(&str, &str, &str)> = bookings
                    .iter()
                    .map(|b| (b.shift.as_str(), b.storage_group.as_str(), b.cost_center_id.as_str()))
                    .collect();
                let groups: Vec<(&str, &str, &str)> =
                    if groups.is_empty() { vec![(EMPTY, EMPTY, EMPTY)] } else { groups.into_iter().collect() };
                for (shift, storage, cost_center) in groups {
                    for (col, &f) in features.iter().enumerate() {
                        let value = match f {
                            Feature::Shift => shift.to_string(),
                            Feature::StorageGroup => storage.to_string(),
                            Feature::CostCenterId => cost_center.to_string(),
                            _ => material_value(&m.id, f),
                        };
                        columns[col].push(value);
                    }
                    target.push(balance);
                }
            }
        }
    }

    let mut builder = Dataset::builder();
    for (f, values) in features.iter().zip(columns) {
        builder = builder.nominal(f.name(), values);
    }
    Ok(builder.numeric_target(TARGET, target).build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgroup::{discover_top_k, MiningTask, QualityMeasure};
    use crate::tabular::{Pattern, Selector};

    fn chain() -> StructureGraph {
        StructureGraph::new(
            [],
            vec![
                BomEdge { parent: "P".into(), child: "M".into(), quantity: 2.0 },
                BomEdge { parent: "M".into(), child: "R".into(), quantity: 4.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn chain_loads_two_edges() {
        let structure = "parent,child,quantity,price_parent,price_child\nP,M,2,100,10\nM,R,4,10,\n";
        let bookings = "material,kind,amount,shift,storage_group,cost_center_id\n";
        let (sg, ag) = load_graphs(structure.as_bytes(), bookings.as_bytes()).unwrap();
        assert_eq!(sg.edges().len(), 2);
        assert_eq!(sg.materials().count(), 3);
        assert_eq!(sg.material("P").unwrap().price, Some(100.0));
        assert_eq!(sg.material("R").unwrap().price, None);
        assert!(ag.bookings().is_empty());
    }

    #[test]
    fn two_cycle_rejected() {
        let structure = "parent,child,quantity,price_parent,price_child\nA,B,1,,\nB,A,1,,\n";
        let err = load_graphs(structure.as_bytes(), "material,kind,amount\n".as_bytes()).unwrap_err();
        match err {
            KpiError::Cycle(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 3);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dangling_booking_kept() {
        let structure = "parent,child,quantity,price_parent,price_child\nP,M,2,,\n";
        let bookings = "material,kind,amount,shift,storage_group,cost_center_id\nX,inflow,3,day,,cc1\n";
        let (_, ag) = load_graphs(structure.as_bytes(), bookings.as_bytes()).unwrap();
        assert_eq!(ag.bookings().len(), 1);
        assert!(ag.is_dangling(0));
        assert_eq!(ag.dangling_materials().into_iter().collect::<Vec<_>>(), vec!["X"]);
        assert_eq!(ag.bookings()[0].storage_group, EMPTY);
    }

    #[test]
    fn consistent_and_shifted_balances() {
        let sg = chain();
        let mut bookings = vec![
            Booking::new("P", BookingKind::Production, 10.0),
            Booking::new("M", BookingKind::Inflow, 20.0),
        ];
        let ag = AccountingGraph::new(bookings.clone(), &sg);
        assert_eq!(compute_kpi("M", &sg, &ag).unwrap().balance, 0.0);
        bookings[1].amount = 18.0;
        let ag = AccountingGraph::new(bookings, &sg);
        assert_eq!(compute_kpi("M", &sg, &ag).unwrap().balance, -2.0);
    }

    #[test]
    fn leaf_without_bookings_is_zero() {
        let sg = StructureGraph::new(
            [Material { id: "L".into(), label: None, price: None }],
            vec![],
        )
        .unwrap();
        let ag = AccountingGraph::default();
        assert_eq!(compute_kpi("L", &sg, &ag).unwrap().balance, 0.0);
        assert!(matches!(compute_kpi("nope", &sg, &ag), Err(KpiError::UnknownMaterial(_))));
    }

    fn five_materials() -> (StructureGraph, Vec<Booking>) {
        let sg = StructureGraph::new(
            ["A", "B", "C", "D", "E"].map(|id| Material { id: id.into(), label: None, price: Some(1.0) }),
            vec![BomEdge { parent: "A".into(), child: "B".into(), quantity: 3.0 }],
        )
        .unwrap();
        let bookings = vec![
            Booking::new("A", BookingKind::Production, 2.0).with_shift("day"),
            Booking::new("A", BookingKind::Outflow, 2.0).with_shift("day"),
            Booking::new("B", BookingKind::Inflow, 6.0).with_shift("day"),
            Booking::new("C", BookingKind::Inflow, 5.0).with_shift("night"),
            Booking::new("C", BookingKind::Outflow, 5.0).with_shift("night"),
            Booking::new("D", BookingKind::Inflow, 4.0).with_shift("night"),
            Booking::new("D", BookingKind::Consumption, 4.0).with_shift("night"),
            Booking::new("E", BookingKind::Inflow, 1.0).with_shift("late"),
            Booking::new("E", BookingKind::Outflow, 1.0).with_shift("late"),
        ];
        (sg, bookings)
    }

    #[test]
    fn per_material_table_shape_and_zero_target() {
        let (sg, bookings) = five_materials();
        let ag = AccountingGraph::new(bookings, &sg);
        let ds = kpi_feature_table(&sg, &ag, &Feature::ALL, Granularity::Material).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.attributes().len(), 5);
        assert!(ds.numeric_target().unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn night_inflation_raises_night_mean() {
        let (sg, mut bookings) = five_materials();
        for b in bookings.iter_mut().filter(|b| b.shift == "night" && b.kind == BookingKind::Inflow) {
            b.amount += 1.0;
        }
        let ag = AccountingGraph::new(bookings.clone(), &sg);
        let ds = kpi_feature_table(&sg, &ag, &[Feature::Shift], Granularity::Material).unwrap();

        // Direct summation oracle over the raw bookings.
        let direct = |m: &str| -> f64 {
            let own: f64 = bookings
                .iter()
                .filter(|b| b.material == m)
                .map(|b| match b.kind {
                    BookingKind::Inflow | BookingKind::Production => b.amount,
                    _ => -b.amount,
                })
                .sum();
            let inherited: f64 = sg
                .edges()
                .iter()
                .filter(|e| e.child == m)
                .map(|e| {
                    e.quantity
                        * bookings
                            .iter()
                            .filter(|b| b.material == e.parent && b.kind == BookingKind::Production)
                            .map(|b| b.amount)
                            .sum::<f64>()
                })
                .sum();
            (own - inherited).abs()
        };
        let all: Vec<f64> = ["A", "B", "C", "D", "E"].iter().map(|m| direct(m)).collect();
        assert_eq!(ds.numeric_target().unwrap().values, all);
        let mu0 = all.iter().sum::<f64>() / 5.0;
        let night = (direct("C") + direct("D")) / 2.0;
        assert!(night > mu0);

        let top = discover_top_k(&ds, &MiningTask::new(QualityMeasure::MeanShift, 1, 1)).unwrap();
        assert_eq!(top[0].pattern, Pattern::new([Selector::new("shift", "night")]).unwrap());
    }

    #[test]
    fn booking_group_rows() {
        let (sg, mut bookings) = five_materials();
        bookings.push(Booking::new("E", BookingKind::Inflow, 0.0).with_shift("night").with_storage_group("S1"));
        let ag = AccountingGraph::new(bookings, &sg);
        let ds = kpi_feature_table(&sg, &ag, &[Feature::Shift, Feature::StorageGroup], Granularity::BookingGroup).unwrap();
        // A, B, C, D one group each; E has two.
        assert_eq!(ds.len(), 6);
        assert!(ds.attribute("storage_group").unwrap().domain().contains(&EMPTY.to_string()));
    }

    #[test]
    fn non_positive_quantity_rejected() {
        let err = StructureGraph::new([], vec![BomEdge { parent: "a".into(), child: "b".into(), quantity: 0.0 }]);
        assert!(err.is_err());
    }
}
