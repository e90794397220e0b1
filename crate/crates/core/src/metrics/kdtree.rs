//! Exact nearest-neighbor search over 3-D points.
//!
//! Distances use [`dist2`], so the minimum found equals the brute-force
//! minimum bit-for-bit: a subtree is skipped only when the squared
//! distance to its splitting plane already exceeds the best found, and
//! rounding is monotone, so every skipped point is at least that far.

use crate::geometry::vec3::{dist2, Vec3};

const LEAF: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    root: Option<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut points = points.to_vec();
        let root = (!points.is_empty()).then(|| build(&mut points, 0));
        Self { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest squared distance from `q` to any stored point, or `None`
    /// for an empty tree.
    pub fn nearest_dist2(&self, q: Vec3) -> Option<f64> {
        let root = self.root.as_ref()?;
        let mut best = f64::INFINITY;
        self.search(root, q, &mut best);
        Some(best)
    }

    fn search(&self, node: &Node, q: Vec3, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for p in &self.points[*start..*end] {
                    let d = dist2(q, *p);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &mut [Vec3], offset: usize) -> Node {
    if points.len() <= LEAF {
        return Node::Leaf { start: offset, end: offset + points.len() };
    }
    let axis = (0..3)
        .map(|a| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[a]), hi.max(p[a])));
            (a, hi - lo)
        })
        .fold((0, f64::NEG_INFINITY), |acc, (a, s)| if s > acc.1 { (a, s) } else { acc })
        .0;
    let mid = points.len() / 2;
    points.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let value = points[mid][axis];
    // Everything left of `mid` is ≤ value and everything from `mid` on is
    // ≥ value, which is all the pruning test relies on.
    let (lo, hi) = points.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(lo, offset)),
        right: Box::new(build(hi, offset + mid)),
    }
}
