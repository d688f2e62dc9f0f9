//! Independent oracles for scdn-core and the acceptance checks built on
//! them.

pub mod criteria;
pub mod instances;
pub mod oracles;
pub mod suite;

pub use suite::{format_table, run_oracles, OracleOutcome};
