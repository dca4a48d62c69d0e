//! Tabular pattern mining and interpretable diagnostic scoring.
//!
//! The crate is organised bottom-up:
//!
//! * [`tabular`] holds the dataset model with nominal selectors and bitset covers.
//! * [`subgroup`] implements top-k subgroup discovery over that model.
//! * [`kpi`] computes per-material logistical balances over a bill of
//!   materials and a bookings ledger and turns them into a mining table.
//! * [`scoring`] covers diagnostic scoring rules: inference, learning,
//!   pruning and refinement.
//! * [`synth`] generates seeded data with planted structure.

pub mod kpi;
pub mod scoring;
pub mod stats;
pub mod subgroup;
pub mod synth;
pub mod tabular;

pub use subgroup::{discover_top_k, MiningTask, QualityMeasure, RankedPattern, SubgroupStats};
pub use tabular::{Cover, Dataset, Pattern, Selector};
