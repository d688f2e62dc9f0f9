//! Pooling indices derived from flow-unit embeddings: pairwise pooling
//! probability (HPP), the FU efficiency indicator (FEI) and the hotspot
//! membership check.

mod fei;
mod hpp;
mod validate;

pub use fei::{fei_table, neighborhoods, FeiEntry, FeiTable, DEFAULT_NEIGHBOR_RADIUS_M};
pub use hpp::HppIndex;
pub use validate::{seh_validate, SehThresholds, SehValidation, Violation};
