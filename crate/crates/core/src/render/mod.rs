//! Orthographic 2.5D renders (depth, normal, mask) from icosahedron
//! viewpoints, and line-drawing proxies derived from them.

pub mod camera;
pub mod maps;
pub mod raster;
pub mod sketch;

pub use camera::{icosahedron_viewpoints, slanted_front_view, ViewCount, Viewpoint, DEFAULT_HALF_EXTENT};
pub use maps::{SketchImage, ViewMap25D};
pub use raster::{render_view25d, Analytic, PixelHit, Surface};
pub use sketch::{render_sketch_proxy, SketchThresholds};
