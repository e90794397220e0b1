//! Marching-cubes case table, generated rather than transcribed.
//!
//! Corner `c` sits at `(c & 1, c >> 1 & 1, c >> 2 & 1)`. On each cube face
//! the crossing edges are paired so that every run of inside corners is cut
//! off by one segment; ambiguous faces (diagonal inside corners) therefore
//! always separate the inside corners. Neighboring cubes see the same face
//! corners and pick the same segments, which makes the surface closed.
//! Segments chain into loops inside the cube. Each loop is fanned from a
//! vertex whose diagonals never join two edges of one cube face (such a
//! diagonal lies in the face and could coincide with the neighbor's); loops
//! without such a vertex are fanned around their centroid instead.

use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Corner pair of each edge, lower corner first.
pub const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Corners of each face, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [1, 3, 7, 5], // +x
    [0, 4, 6, 2], // −x
    [2, 6, 7, 3], // +y
    [0, 1, 5, 4], // −y
    [4, 5, 7, 6], // +z
    [0, 2, 3, 1], // −z
];

fn edge_between(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == key).expect("corners share an edge")
}

fn corner_pos(c: usize) -> [f64; 3] {
    [(c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64]
}

/// One surface loop within a cell, as a cycle of edge indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polygon {
    pub edges: Vec<usize>,
    /// Fan apex position in `edges`; `None` means fan around the centroid.
    pub apex: Option<usize>,
}

impl Polygon {
    /// Triangles as positions into `edges`, with `edges.len()` standing
    /// for the centroid.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let n = self.edges.len();
        match self.apex {
            Some(a) => (1..n - 1).map(|j| [a, (a + j) % n, (a + j + 1) % n]).collect(),
            None => (0..n).map(|j| [n, j, (j + 1) % n]).collect(),
        }
    }
}

fn share_face(e: usize, f: usize) -> bool {
    let (a, b) = EDGES[e];
    let (c, d) = EDGES[f];
    FACES.iter().any(|face| [a, b, c, d].iter().all(|x| face.contains(x)))
}

fn choose_apex(poly: &[usize]) -> Option<usize> {
    let n = poly.len();
    (0..n).find(|&a| (2..n - 1).all(|j| !share_face(poly[a], poly[(a + j) % n])))
}

/// Loops for one corner configuration.
fn build_case(config: usize) -> Vec<Polygon> {
    let inside = |c: usize| config >> c & 1 == 1;
    // start edge → end edge
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for face in FACES {
        for i in 0..4 {
            let (a, b) = (face[i], face[(i + 1) % 4]);
            if inside(a) || !inside(b) {
                continue;
            }
            // Entering an inside run at edge (a, b); find where it ends.
            let entry = edge_between(a, b);
            let mut k = (i + 1) % 4;
            while inside(face[(k + 1) % 4]) {
                k = (k + 1) % 4;
            }
            let exit = edge_between(face[k], face[(k + 1) % 4]);
            let prev = next.insert(exit, entry);
            debug_assert!(prev.is_none());
        }
    }
    let mut polys = Vec::new();
    while let Some((&start, _)) = next.iter().next() {
        let mut poly = vec![start];
        let mut cur = next.remove(&start).expect("present");
        while cur != start {
            poly.push(cur);
            cur = next.remove(&cur).expect("segments close into loops");
        }
        let apex = choose_apex(&poly);
        polys.push(Polygon { edges: poly, apex });
    }
    polys
}

fn build_table() -> Vec<Vec<Polygon>> {
    let mut table: Vec<Vec<Polygon>> = (0..256).map(build_case).collect();
    // Orient so normals face away from the inside: with only corner 0
    // inside, the normal must point toward (1, 1, 1).
    let mid = |e: usize| {
        let (a, b) = EDGES[e];
        let (pa, pb) = (corner_pos(a), corner_pos(b));
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]
    };
    let e = &table[1][0].edges;
    let [a, b, c] = [mid(e[0]), mid(e[1]), mid(e[2])];
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    if n[0] + n[1] + n[2] < 0.0 {
        for case in &mut table {
            for poly in case.iter_mut() {
                poly.edges.reverse();
                poly.apex = choose_apex(&poly.edges);
            }
        }
    }
    table
}

/// Surface loops for each of the 256 configurations.
pub fn case_table() -> &'static [Vec<Polygon>] {
    static TABLE: OnceLock<Vec<Vec<Polygon>>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases_are_empty() {
        assert!(case_table()[0].is_empty());
        assert!(case_table()[255].is_empty());
    }

    #[test]
    fn single_corner_cases_are_one_triangle() {
        // One corner inside or outside: a single triangle either way.
        for c in 0..8 {
            for config in [1 << c, 255 ^ (1 << c)] {
                let case = &case_table()[config];
                assert_eq!(case.len(), 1);
                assert_eq!(case[0].triangles().len(), 1);
            }
        }
    }

    #[test]
    fn each_crossing_edge_used_by_exactly_one_loop_vertex() {
        for config in 0..256usize {
            let crossing: Vec<usize> = (0..12)
                .filter(|&e| {
                    let (a, b) = EDGES[e];
                    (config >> a & 1) != (config >> b & 1)
                })
                .collect();
            let mut used: Vec<usize> = case_table()[config].iter().flat_map(|p| p.edges.clone()).collect();
            let total = used.len();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), total, "config {config}");
            assert_eq!(used, crossing, "config {config}");
        }
    }
}
