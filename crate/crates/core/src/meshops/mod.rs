//! Triangle meshes: zero-level-set extraction, closedness checks, signed
//! volume and OBJ I/O.

mod mc;

pub use mc::{case_table, grid_points, marching_cubes, marching_cubes_grid};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Triangles below this area are dropped.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;
pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("empty field: no sign change on the sampling grid")]
    EmptyField,
    #[error("grid: {0}")]
    Grid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Axis-aligned sampling box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Bounds {
    fn default() -> Self {
        Self::cube(1.0)
    }
}

impl Bounds {
    pub fn cube(half: f64) -> Self {
        Self { min: [-half; 3], max: [half; 3] }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|d| self.min[d].is_finite() && self.max[d].is_finite() && self.max[d] > self.min[d])
    }

    /// Coordinate of grid line `i` of `r` along axis `d`.
    pub fn coord(&self, d: usize, i: usize, r: usize) -> f64 {
        self.min[d] + (self.max[d] - self.min[d]) * i as f64 / (r - 1) as f64
    }

    pub fn voxel_size(&self, r: usize) -> [f64; 3] {
        [0, 1, 2].map(|d| (self.max[d] - self.min[d]) / (r - 1) as f64)
    }
}

/// Extraction parameters, echoed next to exported meshes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    pub resolution: usize,
    pub bounds: Bounds,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

/// An edge not shared by exactly two triangles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeDefect {
    pub edge: (u32, u32),
    pub uses: usize,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Enclosed volume by the divergence theorem; positive for outward
    /// orientation.
    pub fn signed_volume(&self) -> f64 {
        let mut v = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(t);
            v += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
        }
        v / 6.0
    }

    pub fn transformed(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        Self { vertices: self.vertices.iter().map(|v| f(*v)).collect(), triangles: self.triangles.clone() }
    }

    /// Merge vertices with bitwise-equal coordinates.
    pub fn weld_coincident(&mut self) {
        let mut first: HashMap<[u64; 3], u32> = HashMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut kept = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            // +0.0 and -0.0 are the same point
            let key = v.map(|c| if c == 0.0 { 0 } else { c.to_bits() });
            let id = *first.entry(key).or_insert_with(|| {
                kept.push(*v);
                (kept.len() - 1) as u32
            });
            remap.push(id);
        }
        self.vertices = kept;
        for t in &mut self.triangles {
            *t = t.map(|i| remap[i as usize]);
        }
    }

    /// Remove triangles with repeated corners or area below
    /// [`MIN_TRIANGLE_AREA`], then unreferenced vertices.
    pub fn drop_degenerate(&mut self) {
        let keep: Vec<bool> = (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangles[t];
                a != b && b != c && a != c && self.triangle_area(t) >= MIN_TRIANGLE_AREA
            })
            .collect();
        let mut k = keep.iter();
        self.triangles.retain(|_| *k.next().unwrap());
        self.compact();
    }

    fn compact(&mut self) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut kept = Vec::new();
        for t in &mut self.triangles {
            for i in t.iter_mut() {
                let r = &mut remap[*i as usize];
                if *r == u32::MAX {
                    kept.push(self.vertices[*i as usize]);
                    *r = (kept.len() - 1) as u32;
                }
                *i = *r;
            }
        }
        self.vertices = kept;
    }
}

/// Closed iff every undirected edge is used by exactly two triangles. The
/// empty mesh is closed by convention.
pub fn is_watertight(mesh: &TriMesh) -> (bool, Vec<EdgeDefect>) {
    let mut uses: HashMap<(u32, u32), usize> = HashMap::new();
    for t in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut defects: Vec<EdgeDefect> =
        uses.into_iter().filter(|(_, n)| *n != 2).map(|(edge, uses)| EdgeDefect { edge, uses }).collect();
    defects.sort_by_key(|d| d.edge);
    (defects.is_empty(), defects)
}

/// ASCII OBJ with 9 significant digits per coordinate and 1-based faces.
pub fn to_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {:.8e} {:.8e} {:.8e}", v[0], v[1], v[2]).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

pub fn from_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut mesh = TriMesh::default();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |msg: String| MeshError::Parse { line, msg };
        let mut parts = raw.split_whitespace();
        match parts.next() {
            None => {}
            Some(c) if c.starts_with('#') => {}
            Some("v") => {
                let vals: Vec<f64> = parts
                    .map(|p| p.parse::<f64>().map_err(|e| err(format!("bad coordinate `{p}`: {e}"))))
                    .collect::<Result<_, _>>()?;
                if vals.len() != 3 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", vals.len())));
                }
                mesh.vertices.push([vals[0], vals[1], vals[2]]);
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|p| {
                        // "i/t/n" forms carry the vertex index first
                        let head = p.split('/').next().unwrap_or("");
                        match head.parse::<u32>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(format!("bad face index `{p}`"))),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("face needs 3 indices, got {}", idx.len())));
                }
                faces.push((line, [idx[0], idx[1], idx[2]]));
            }
            Some(tag) => return Err(err(format!("unsupported record `{tag}`"))),
        }
    }
    for (line, f) in faces {
        if f.iter().any(|&i| i as usize >= mesh.vertices.len()) {
            return Err(MeshError::Parse { line, msg: format!("face index out of range ({} vertices)", mesh.vertices.len()) });
        }
        mesh.triangles.push(f);
    }
    Ok(mesh)
}

pub fn export_obj(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, to_obj(mesh)).map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

pub fn import_obj(path: &Path) -> Result<TriMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    from_obj(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Exec;

    fn sphere(r: f64) -> impl Fn([f64; 3]) -> f64 + Sync + Send {
        move |p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - r
    }

    fn max_surface_error(m: &TriMesh, r: f64) -> f64 {
        m.vertices.iter().map(|v| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - r).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn sphere_is_closed_and_accurate() {
        let b = Bounds::default();
        let m = marching_cubes(sphere(0.5), 64, &b, Exec::available()).unwrap();
        assert!(is_watertight(&m).0);
        assert!(max_surface_error(&m, 0.5) < 1.5 * b.voxel_size(64)[0]);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((m.signed_volume() - exact).abs() < 0.1 * exact);
    }

    #[test]
    fn refinement_does_not_hurt() {
        let b = Bounds::default();
        let coarse = marching_cubes(sphere(0.5), 16, &b, Exec::Serial).unwrap();
        let fine = marching_cubes(sphere(0.5), 32, &b, Exec::Serial).unwrap();
        assert!(max_surface_error(&fine, 0.5) <= max_surface_error(&coarse, 0.5));
    }

    #[test]
    fn plane_lies_on_zero() {
        for res in [9, 10] {
            let m = marching_cubes(|p| p[0], res, &Bounds::default(), Exec::Serial).unwrap();
            assert!(m.vertices.iter().all(|v| v[0].abs() < 1e-12));
            // normals point towards +x where the field grows
            for t in 0..m.triangles.len() {
                let [a, b, c] = m.triangle(t);
                let nx = (b[1] - a[1]) * (c[2] - a[2]) - (b[2] - a[2]) * (c[1] - a[1]);
                assert!(nx > 0.0);
            }
        }
    }

    #[test]
    fn constant_field_is_empty() {
        assert!(matches!(marching_cubes(|_| 1.0, 8, &Bounds::default(), Exec::Serial), Err(MeshError::EmptyField)));
        assert!(matches!(marching_cubes(|_| 1.0, 1, &Bounds::default(), Exec::Serial), Err(MeshError::Grid(_))));
    }

    #[test]
    fn watertight_conventions() {
        assert!(is_watertight(&TriMesh::default()).0);
        let tri = TriMesh { vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], triangles: vec![[0, 1, 2]] };
        let (ok, defects) = is_watertight(&tri);
        assert!(!ok);
        assert_eq!(defects.len(), 3);
    }

    #[test]
    fn obj_text() {
        let tri = TriMesh { vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], triangles: vec![[0, 1, 2]] };
        let s = to_obj(&tri);
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(s.lines().last(), Some("f 1 2 3"));
        assert_eq!(from_obj(&s).unwrap(), tri);
        let bad = "v 0 0 0\nv 1 0 0\nf 1 2\n";
        assert!(matches!(from_obj(bad), Err(MeshError::Parse { line: 3, .. })));
    }

    #[test]
    fn ambiguous_saddle_stays_closed() {
        // A field with many ambiguous faces: two nearly touching spheres.
        let f = |p: [f64; 3]| {
            let a = ((p[0] - 0.26).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.25;
            let b = ((p[0] + 0.26).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.25;
            a.min(b)
        };
        for res in [7, 12, 23, 40] {
            let m = marching_cubes(f, res, &Bounds::default(), Exec::Serial).unwrap();
            assert!(is_watertight(&m).0, "resolution {res}");
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn random_interior_fields_are_closed() {
        use rand::{Rng, SeedableRng};
        let r = 14;
        for seed in 0..40 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..r * r * r)
                .map(|n| {
                    let (i, j, k) = (n % r, n / r % r, n / (r * r));
                    if [i, j, k].iter().any(|&c| c == 0 || c == r - 1) {
                        1.0
                    } else {
                        // exact zeros put vertices on grid corners, where welding merges them
                        [-1.0, -0.5, 0.0, 0.5, 1.0][rng.random_range(0..5)] * if seed % 2 == 0 { 1.0 } else { rng.random_range(0.5..1.0) }
                    }
                })
                .collect();
            let m = marching_cubes_grid(&values, r, &Bounds::default()).unwrap();
            let (closed, defects) = is_watertight(&m);
            assert!(closed, "seed {seed}: {} defective edges", defects.len());
        }
    }
}
