//! Sketch-to-mesh reconstruction: geometry, rendering, the two networks,
//! surface extraction, metrics and the command pipeline.

pub mod config;
pub mod dataset;
pub mod error;
pub mod extract;
pub mod geometry;
pub mod implicit;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod sketch25d;
mod io;

pub use error::{CoreError, Result};
