//! Port-call turnaround time prediction.
//!
//! Ingestion and validation of port-call records, rule-based cleaning,
//! feature engineering, gradient-boosted regression trees with ordered target
//! statistics, a ridge linear baseline, leave-one-year-out evaluation and
//! AIS-based visit detection.

pub mod ais;
pub mod cleaning;
pub mod evaluation;
pub mod features;
pub mod gbdt;
pub mod linreg;
pub mod persist;
pub mod portcall;
pub mod synth;
