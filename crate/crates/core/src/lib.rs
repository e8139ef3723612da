//! Joint design of the transmit waveform, a beyond-diagonal RIS and the radar
//! receive filters for a dual-function radar-communication base station with
//! max-min SCNR fairness across targets.

// `!(x > 0.0)` is used on purpose: NaN must fail positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod channel;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod quadforms;
pub mod report;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
pub use scenario::{load_scenario, load_scenario_file, ArchTag, Architecture, Scenario, Side};
pub use state::{BdRisState, FilterBank, Instance, SymbolBlock, Waveform};
