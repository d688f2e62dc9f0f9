//! Flow-unit embedding, pooling indices and many-to-one order dispatch for
//! on-demand delivery.

pub mod eatne;
pub mod error;
pub mod geo;
pub mod dispatch;
pub mod indices;
pub mod network;
pub mod registry;
pub mod seh;
pub mod simgen;

pub use error::{Error, Result};
