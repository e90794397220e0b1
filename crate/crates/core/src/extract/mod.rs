//! Iso-surface extraction from sampled scalar fields.

pub mod field;
pub mod marching;
mod table;

pub use field::ScalarField;
pub use marching::{marching_cubes, padding_value};
