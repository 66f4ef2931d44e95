//! Marching cubes with a case table derived at first use.
//!
//! Each cube face is contoured on its own (marching squares), so two cubes
//! sharing a face always agree on its segments and the result is closed
//! wherever the surface does not leave the grid. On ambiguous faces every
//! negative corner is cut off separately. Segments are oriented so the
//! resulting loops wind counter-clockwise seen from the positive side, and
//! each loop is fan-triangulated from a corner whose diagonals avoid the
//! cube faces.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{Bounds, MeshError, TriMesh};
use crate::Exec;

/// Corner `c` has offsets `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const fn corner(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Edges as (low corner, high corner, axis).
const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    EDGES.iter().position(|&(x, y, _)| x == lo && y == hi).expect("corners share an edge")
}

/// Faces as (cyclic corner list, outward normal).
fn faces() -> [([usize; 4], [f64; 3]); 6] {
    [
        ([0, 2, 6, 4], [-1.0, 0.0, 0.0]),
        ([1, 3, 7, 5], [1.0, 0.0, 0.0]),
        ([0, 1, 5, 4], [0.0, -1.0, 0.0]),
        ([2, 3, 7, 6], [0.0, 1.0, 0.0]),
        ([0, 1, 3, 2], [0.0, 0.0, -1.0]),
        ([4, 5, 7, 6], [0.0, 0.0, 1.0]),
    ]
}

fn edge_mid(e: usize) -> [f64; 3] {
    let (a, b, _) = EDGES[e];
    let (ca, cb) = (corner(a), corner(b));
    [0, 1, 2].map(|i| 0.5 * (ca[i] + cb[i]) as f64)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orient segment `(p, q)` on a face so that `normal x (q - p)` points away
/// from `witness` when `witness_negative`, towards it otherwise.
fn oriented(p: usize, q: usize, normal: [f64; 3], witness: usize, witness_negative: bool) -> (usize, usize) {
    let (mp, mq) = (edge_mid(p), edge_mid(q));
    let side = dot(cross(normal, sub(mq, mp)), sub(corner(witness).map(|v| v as f64), mp));
    if (side < 0.0) == witness_negative {
        (p, q)
    } else {
        (q, p)
    }
}

fn case_triangles(case: usize) -> Vec<[u8; 3]> {
    let neg = |c: usize| case >> c & 1 == 1;
    let mut next: HashMap<usize, usize> = HashMap::new();
    for (cs, normal) in faces() {
        let edge = |i: usize| edge_between(cs[i], cs[(i + 1) % 4]);
        let count = cs.iter().filter(|&&c| neg(c)).count();
        let mut segs = Vec::new();
        match count {
            0 | 4 => {}
            1 | 3 => {
                // Cut off the odd corner out.
                let odd = (0..4).find(|&i| neg(cs[i]) == (count == 1)).unwrap();
                segs.push(oriented(edge((odd + 3) % 4), edge(odd), normal, cs[odd], count == 1));
            }
            _ => {
                if neg(cs[0]) == neg(cs[2]) {
                    for i in (0..4).filter(|&i| neg(cs[i])) {
                        segs.push(oriented(edge((i + 3) % 4), edge(i), normal, cs[i], true));
                    }
                } else {
                    let crossing: Vec<usize> = (0..4).filter(|&i| neg(cs[i]) != neg(cs[(i + 1) % 4])).map(edge).collect();
                    let witness = *cs.iter().find(|&&c| neg(c)).unwrap();
                    segs.push(oriented(crossing[0], crossing[1], normal, witness, true));
                }
            }
        }
        for (p, q) in segs {
            let prev = next.insert(p, q);
            debug_assert!(prev.is_none(), "case {case}: edge {p} starts two segments");
        }
    }
    let mut tris = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = [false; 12];
    for s in starts {
        if seen[s] {
            continue;
        }
        let mut lp = vec![s];
        seen[s] = true;
        let mut cur = next[&s];
        while cur != s {
            seen[cur] = true;
            lp.push(cur);
            cur = next[&cur];
        }
        triangulate(&lp, &mut tris);
    }
    tris
}

/// Whether two cube edges lie on a common face.
fn share_face(a: usize, b: usize) -> bool {
    let (ea, eb) = (EDGES[a], EDGES[b]);
    faces().iter().any(|(cs, _)| [ea.0, ea.1, eb.0, eb.1].iter().all(|c| cs.contains(c)))
}

/// Fan-triangulate a loop from a root whose diagonals stay off the cube
/// faces; a diagonal on a face could coincide with a segment of the
/// neighbouring cube. Such a root exists for every case (checked by the
/// table tests).
fn triangulate(lp: &[usize], tris: &mut Vec<[u8; 3]>) {
    let n = lp.len();
    let r = (0..n)
        .find(|&r| (2..n - 1).all(|k| !share_face(lp[r], lp[(r + k) % n])))
        .expect("some fan root keeps its diagonals off the faces");
    for k in 1..n - 1 {
        tris.push([lp[r], lp[(r + k) % n], lp[(r + k + 1) % n]].map(|e| e as u8));
    }
}

/// Triangles (as local edge triples) for each of the 256 sign cases; bit
/// `c` of the case is set when corner `c` is negative.
pub fn case_table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(case_triangles).collect())
}

/// Grid sample coordinates, x fastest: index `(k * r + j) * r + i`.
pub fn grid_points(resolution: usize, bounds: &Bounds) -> Vec<[f64; 3]> {
    let r = resolution;
    let mut out = Vec::with_capacity(r * r * r);
    for k in 0..r {
        for j in 0..r {
            for i in 0..r {
                out.push([bounds.coord(0, i, r), bounds.coord(1, j, r), bounds.coord(2, k, r)]);
            }
        }
    }
    out
}

/// Sample `field` on the grid and extract its zero level set.
pub fn marching_cubes<F>(field: F, resolution: usize, bounds: &Bounds, exec: Exec) -> Result<TriMesh, MeshError>
where
    F: Fn([f64; 3]) -> f64 + Sync + Send,
{
    check_grid(resolution, bounds)?;
    let pts = grid_points(resolution, bounds);
    let values = exec.flat_map_chunks(&pts, 4096, |c| c.iter().map(|p| field(*p)).collect());
    marching_cubes_grid(&values, resolution, bounds)
}

fn check_grid(resolution: usize, bounds: &Bounds) -> Result<(), MeshError> {
    if resolution < 2 {
        return Err(MeshError::Grid(format!("resolution {resolution} < 2")));
    }
    if !bounds.is_valid() {
        return Err(MeshError::Grid(format!("invalid bounds {bounds:?}")));
    }
    Ok(())
}

/// Extract the zero level set from precomputed samples laid out as in
/// [`grid_points`]. Values `>= 0` count as outside.
pub fn marching_cubes_grid(values: &[f64], resolution: usize, bounds: &Bounds) -> Result<TriMesh, MeshError> {
    check_grid(resolution, bounds)?;
    let r = resolution;
    if values.len() != r * r * r {
        return Err(MeshError::Grid(format!("{} samples for resolution {r}", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(MeshError::Grid(format!("non-finite field value {v}")));
    }
    let idx = |i: usize, j: usize, k: usize| (k * r + j) * r + i;
    let table = case_table();
    let mut mesh = TriMesh::default();
    let mut vertex_of_edge: HashMap<usize, u32> = HashMap::new();
    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut case = 0;
                for c in 0..8 {
                    let o = corner(c);
                    if values[idx(i + o[0], j + o[1], k + o[2])] < 0.0 {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case];
                if tris.is_empty() {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for &e in tris.iter().flatten() {
                    let e = e as usize;
                    if local[e] != u32::MAX {
                        continue;
                    }
                    let (a, b, axis) = EDGES[e];
                    let (ca, cb) = (corner(a), corner(b));
                    let ga = [i + ca[0], j + ca[1], k + ca[2]];
                    let gb = [i + cb[0], j + cb[1], k + cb[2]];
                    let key = idx(ga[0], ga[1], ga[2]) * 3 + axis;
                    local[e] = *vertex_of_edge.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[idx(ga[0], ga[1], ga[2])], values[idx(gb[0], gb[1], gb[2])]);
                        let t = va / (va - vb);
                        let mut p = [0.0; 3];
                        for d in 0..3 {
                            let (pa, pb) = (bounds.coord(d, ga[d], r), bounds.coord(d, gb[d], r));
                            p[d] = if d == axis { pa + t * (pb - pa) } else { pa };
                        }
                        mesh.vertices.push(p);
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                for tri in tris {
                    mesh.triangles.push(tri.map(|e| local[e as usize]));
                }
            }
        }
    }
    // Vertices are shared by grid edge, not by position: a zero sample puts
    // several edge vertices on the same corner, and merging them would pinch
    // the surface there.
    if mesh.triangles.is_empty() {
        return Err(MeshError::EmptyField);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let t = case_table();
        assert_eq!(t.len(), 256);
        assert!(t[0].is_empty() && t[255].is_empty());
        assert_eq!(t[1].len(), 1);
        assert_eq!(t[0b0000_0011].len(), 2);
    }

    #[test]
    fn every_case_closes_its_loops() {
        // Each crossing edge must appear in exactly one loop: as many
        // incident triangle-boundary uses in as out.
        for case in 0..256usize {
            let crossing = EDGES.iter().filter(|(a, b, _)| (case >> a & 1) != (case >> b & 1)).count();
            let mut used = [false; 12];
            for e in case_table()[case].iter().flatten() {
                used[*e as usize] = true;
            }
            assert_eq!(used.iter().filter(|u| **u).count(), crossing, "case {case}");
        }
    }

    #[test]
    fn no_interior_segment_lies_on_a_face() {
        // Every triangle edge between two cube edges sharing a face must be
        // one of that face's contour segments, i.e. a boundary edge of the
        // case's surface, used by exactly one triangle of the case.
        for (case, tris) in case_table().iter().enumerate() {
            let mut uses: HashMap<(u8, u8), usize> = HashMap::new();
            for t in tris {
                for i in 0..3 {
                    let (a, b) = (t[i], t[(i + 1) % 3]);
                    *uses.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            for ((a, b), n) in uses {
                if share_face(a as usize, b as usize) {
                    assert_eq!(n, 1, "case {case}: segment {a}-{b}");
                }
            }
        }
    }
}
