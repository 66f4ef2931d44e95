//! Hand-object interpenetration: inside tests by ray parity along +x,
//! penetration depth and voxelized intersection volume.

use super::MetricsError;
use crate::meshops::{is_watertight, TriMesh};

/// Triangles projected onto the `(y, z)` plane, counter-clockwise, with
/// their projected bounding boxes.
struct RayCaster {
    tris: Vec<[[f64; 3]; 3]>,
    boxes: Vec<[f64; 4]>,
}

fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Tie rule for points exactly on an edge `a -> b` of a counter-clockwise
/// triangle: the edge owns them when it runs downwards, or horizontally
/// towards -y. Two triangles sharing an edge traverse it in opposite
/// directions, so exactly one of them counts the hit.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    b[1] < a[1] || (b[1] == a[1] && b[0] < a[0])
}

impl RayCaster {
    fn new(mesh: &TriMesh) -> Self {
        let mut tris = Vec::with_capacity(mesh.triangles.len());
        let mut boxes = Vec::with_capacity(mesh.triangles.len());
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle(t);
            let area = orient([a[1], a[2]], [b[1], b[2]], [c[1], c[2]]);
            if area == 0.0 {
                continue;
            }
            let tri = if area > 0.0 { [a, b, c] } else { [a, c, b] };
            boxes.push([
                a[1].min(b[1]).min(c[1]),
                a[1].max(b[1]).max(c[1]),
                a[2].min(b[2]).min(c[2]),
                a[2].max(b[2]).max(c[2]),
            ]);
            tris.push(tri);
        }
        Self { tris, boxes }
    }

    /// Sorted x coordinates where the line through `(y, z)` along x crosses
    /// the surface.
    fn hits(&self, y: f64, z: f64) -> Vec<f64> {
        let p = [y, z];
        let mut out = Vec::new();
        for (tri, bx) in self.tris.iter().zip(&self.boxes) {
            if y < bx[0] || y > bx[1] || z < bx[2] || z > bx[3] {
                continue;
            }
            let v = tri.map(|q| [q[1], q[2]]);
            let mut w = [0.0; 3];
            let mut inside = true;
            for i in 0..3 {
                let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
                let e = orient(a, b, p);
                if e < 0.0 || (e == 0.0 && !owns_edge(a, b)) {
                    inside = false;
                    break;
                }
                w[i] = e;
            }
            if inside {
                let total = w[0] + w[1] + w[2];
                out.push((w[0] * tri[0][0] + w[1] * tri[1][0] + w[2] * tri[2][0]) / total);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        self.hits(p[1], p[2]).iter().filter(|&&x| x > p[0]).count() % 2 == 1
    }
}

/// Inside test by crossing parity; `mesh` should be closed.
pub fn point_inside(mesh: &TriMesh, p: [f64; 3]) -> bool {
    RayCaster::new(mesh).contains(p)
}

/// Exact distance from `p` to triangle `abc`.
pub fn point_triangle_distance(p: [f64; 3], tri: [[f64; 3]; 3]) -> f64 {
    use crate::geom::v3;
    let (p, a, b, c) = (v3(p), v3(tri[0]), v3(tri[1]), v3(tri[2]));
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + v * ab)).norm();
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + w * ac)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    (p - (a + v * ab + w * ac)).norm()
}

pub fn distance_to_mesh(mesh: &TriMesh, p: [f64; 3]) -> f64 {
    (0..mesh.triangles.len()).map(|t| point_triangle_distance(p, mesh.triangle(t))).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub penetrating: bool,
    pub depth: f64,
    pub volume: f64,
}

fn bbox(mesh: &TriMesh) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &mesh.vertices {
        for d in 0..3 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    (lo, hi)
}

/// Volume of the voxels (lattice of pitch `pitch` with centers at
/// `(k + 1/2) pitch`) whose centers lie inside both closed meshes.
pub fn intersection_volume(a: &TriMesh, b: &TriMesh, pitch: f64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (la, ha) = bbox(a);
    let (lb, hb) = bbox(b);
    let lo: [f64; 3] = [0, 1, 2].map(|d| la[d].max(lb[d]));
    let hi: [f64; 3] = [0, 1, 2].map(|d| ha[d].min(hb[d]));
    if (0..3).any(|d| lo[d] >= hi[d]) {
        return 0.0;
    }
    let range = |d: usize| {
        let first = (lo[d] / pitch - 0.5).ceil() as i64;
        let last = (hi[d] / pitch - 0.5).floor() as i64;
        first..=last
    };
    let center = |k: i64| (k as f64 + 0.5) * pitch;
    let (ra, rb) = (RayCaster::new(a), RayCaster::new(b));
    let mut count = 0u64;
    for kz in range(2) {
        for ky in range(1) {
            let (y, z) = (center(ky), center(kz));
            let (ha, hb) = (ra.hits(y, z), rb.hits(y, z));
            if ha.len() < 2 || hb.len() < 2 {
                continue;
            }
            for kx in range(0) {
                let x = center(kx);
                let odd = |h: &[f64]| h.iter().filter(|&&v| v > x).count() % 2 == 1;
                if odd(&ha) && odd(&hb) {
                    count += 1;
                }
            }
        }
    }
    count as f64 * pitch.powi(3)
}

/// Penetration depth (deepest hand vertex inside the object, measured to the
/// object surface) and intersection volume. The object must be closed.
pub fn interaction_metrics(hand: &TriMesh, object: &TriMesh, pitch: f64, object_name: &str) -> Result<Interaction, MetricsError> {
    let (closed, defects) = is_watertight(object);
    if !closed {
        return Err(MetricsError::NotWatertight { mesh: object_name.to_string(), open_edges: defects.len() });
    }
    let caster = RayCaster::new(object);
    let mut depth: f64 = 0.0;
    for v in &hand.vertices {
        if caster.contains(*v) {
            depth = depth.max(distance_to_mesh(object, *v));
        }
    }
    let volume = intersection_volume(hand, object, pitch);
    Ok(Interaction { penetrating: depth > 0.0, depth, volume })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cube(lo: [f64; 3], hi: [f64; 3]) -> TriMesh {
        let v: Vec<[f64; 3]> = (0..8).map(|c| [0, 1, 2].map(|d| if c >> d & 1 == 1 { hi[d] } else { lo[d] })).collect();
        // outward-oriented quads split into triangles
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let mut triangles = Vec::new();
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriMesh { vertices: v, triangles }
    }

    #[test]
    fn cube_is_closed_and_outward() {
        let c = cube([0.0; 3], [1.0; 3]);
        assert!(is_watertight(&c).0);
        assert!((c.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parity_inside_test() {
        let c = cube([0.0; 3], [1.0; 3]);
        assert!(point_inside(&c, [0.5, 0.5, 0.5]));
        // the ray passes exactly through the shared diagonal of two faces
        assert!(point_inside(&c, [0.2, 0.3, 0.3]));
        assert!(!point_inside(&c, [1.5, 0.5, 0.5]));
        assert!(!point_inside(&c, [-0.5, 0.5, 0.5]));
    }

    #[test]
    fn disjoint_meshes() {
        let a = cube([0.0; 3], [1.0; 3]);
        let b = cube([2.0, 0.0, 0.0], [3.0, 1.0, 1.0]);
        let r = interaction_metrics(&a, &b, 0.05, "b").unwrap();
        assert_eq!(r, Interaction { penetrating: false, depth: 0.0, volume: 0.0 });
    }

    #[test]
    fn slab_overlap_volume() {
        let a = cube([0.0; 3], [1.0; 3]);
        let b = cube([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        let v = intersection_volume(&a, &b, 0.05);
        assert!((v - 0.5).abs() < 0.025, "{v}");
    }

    #[test]
    fn open_object_is_rejected() {
        let mut b = cube([0.0; 3], [1.0; 3]);
        b.triangles.pop();
        assert!(matches!(interaction_metrics(&b, &b, 0.1, "obj"), Err(MetricsError::NotWatertight { .. })));
    }

    #[test]
    fn triangle_distance_regions() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!((point_triangle_distance([0.2, 0.2, 0.5], t) - 0.5).abs() < 1e-15);
        assert!((point_triangle_distance([-1.0, 0.0, 0.0], t) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance([1.0, 1.0, 0.0], t) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance([0.5, -2.0, 0.0], t) - 2.0).abs() < 1e-15);
    }
}
