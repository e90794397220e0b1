use serde::{Deserialize, Serialize};

use super::maps::{SketchImage, ViewMap25D};

/// Line-detection thresholds for sketch proxies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchThresholds {
    /// Normalized-depth jump that counts as an occluding contour.
    pub depth: f64,
    /// Normal change in degrees that counts as a crease.
    pub crease_deg: f64,
}

impl Default for SketchThresholds {
    fn default() -> Self {
        Self {
            depth: 0.05,
            crease_deg: 30.0,
        }
    }
}

/// Line image from a rendered view: silhouette pixels (foreground with a
/// background or out-of-image 4-neighbor), the nearer pixel across a depth
/// jump, and the first pixel of any right/down pair whose normals differ
/// by more than the crease angle.
pub fn render_sketch_proxy(view: &ViewMap25D, th: SketchThresholds) -> SketchImage {
    let n = view.size();
    let mut out = SketchImage::blank(n);
    let cos_limit = th.crease_deg.to_radians().cos();
    let fg = |c: usize, r: usize| view.is_foreground(c, r);
    for row in 0..n {
        for col in 0..n {
            if !fg(col, row) {
                continue;
            }
            let mut edge = false;
            let neighbors = [
                (col.checked_sub(1), Some(row)),
                ((col + 1 < n).then_some(col + 1), Some(row)),
                (Some(col), row.checked_sub(1)),
                (Some(col), (row + 1 < n).then_some(row + 1)),
            ];
            let d = view.depth(col, row);
            for (k, nb) in neighbors.iter().enumerate() {
                match *nb {
                    (Some(c), Some(r)) if fg(c, r) => {
                        if view.depth(c, r) - d > th.depth {
                            edge = true;
                        }
                        // Right and down neighbors only, so each crease is one pixel wide.
                        if k == 1 || k == 3 {
                            let a = view.normal(col, row);
                            let b = view.normal(c, r);
                            if a[0] * b[0] + a[1] * b[1] + a[2] * b[2] < cos_limit {
                                edge = true;
                            }
                        }
                    }
                    _ => edge = true,
                }
            }
            if edge {
                out.data[row * n + col] = 1.0;
            }
        }
    }
    out
}
