//! Similarity alignment: closed-form fits for known correspondences and an
//! iterated-closest-point loop that only ever accepts improvements.

use nalgebra::{Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::MetricsError;
use crate::geom::{arr, v3, Mat3, Vec3};
use crate::Exec;

pub const ICP_MAX_ITERS: usize = 30;
pub const ICP_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignMode {
    /// Scale and translation only.
    ScaleTranslation,
    /// Scale, rotation and translation.
    Procrustes,
}

/// `x -> s R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub s: f64,
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { s: 1.0, r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t: [0.0; 3] }
    }

    pub fn rotation(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.r[i][j])
    }

    fn from_parts(s: f64, r: &Mat3, t: &Vec3) -> Self {
        Self { s, r: [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)])), t: arr(t) }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        arr(&(self.s * (self.rotation() * v3(p)) + v3(self.t)))
    }

    pub fn apply_all(&self, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let (r, t) = (self.rotation(), v3(self.t));
        pts.iter().map(|p| arr(&(self.s * (r * v3(*p)) + t))).collect()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * v3(self.t)) / self.s;
        Self::from_parts(1.0 / self.s, &rt, &t)
    }
}

/// Best similarity mapping `src[i]` onto `dst[i]` under weights `w`
/// (weighted least squares). With `fixed_rotation`, only scale and
/// translation are fitted around that rotation.
pub fn fit_weighted(
    src: &[[f64; 3]],
    dst: &[[f64; 3]],
    w: &[f64],
    mode: AlignMode,
    fixed_rotation: &Mat3,
) -> Result<SimilarityTransform, MetricsError> {
    let total: f64 = w.iter().sum();
    if src.len() != dst.len() || src.len() != w.len() || src.is_empty() || !(total > 0.0) {
        return Err(MetricsError::Degenerate("correspondence set is empty or mismatched".into()));
    }
    let mut ps = Vec3::zeros();
    let mut qs = Vec3::zeros();
    for ((p, q), wi) in src.iter().zip(dst).zip(w) {
        ps += *wi * v3(*p);
        qs += *wi * v3(*q);
    }
    let (pc, qc) = (ps / total, qs / total);
    let mut var = 0.0;
    let mut m = Mat3::zeros();
    for ((p, q), wi) in src.iter().zip(dst).zip(w) {
        let (a, b) = (v3(*p) - pc, v3(*q) - qc);
        var += wi * a.norm_squared();
        m += *wi * a * b.transpose();
    }
    if !(var > 1e-300) {
        return Err(MetricsError::Degenerate("source points have zero variance".into()));
    }
    let r = match mode {
        AlignMode::ScaleTranslation => *fixed_rotation,
        AlignMode::Procrustes => horn_rotation(&m),
    };
    // sum w b.(R a) = trace(R M)
    let s = (r * m).trace() / var;
    if !(s > 0.0) || !s.is_finite() {
        return Err(MetricsError::Degenerate(format!("non-positive scale {s}")));
    }
    let t = qc - s * (r * pc);
    Ok(SimilarityTransform::from_parts(s, &r, &t))
}

/// Rotation maximizing `trace(R M)` for `M = sum a b^T`, via the dominant
/// eigenvector of Horn's symmetric 4x4 matrix.
fn horn_rotation(m: &Mat3) -> Mat3 {
    let s = |i: usize, j: usize| m[(i, j)];
    let (sxx, sxy, sxz, syx, syy, syz, szx, szy, szz) =
        (s(0, 0), s(0, 1), s(0, 2), s(1, 0), s(1, 1), s(1, 2), s(2, 0), s(2, 1), s(2, 2));
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    q.to_rotation_matrix().into_inner()
}

/// Fit with known one-to-one correspondences and equal weights.
pub fn fit_similarity(src: &[[f64; 3]], dst: &[[f64; 3]], mode: AlignMode) -> Result<SimilarityTransform, MetricsError> {
    fit_weighted(src, dst, &vec![1.0; src.len()], mode, &Mat3::identity())
}

/// Squared chamfer between `t(src)` and `dst`, plus the symmetric
/// correspondences it used.
struct Evaluation {
    value: f64,
    src: Vec<[f64; 3]>,
    dst: Vec<[f64; 3]>,
    w: Vec<f64>,
}

fn evaluate(t: &SimilarityTransform, src: &[[f64; 3]], dst: &[[f64; 3]], dst_tree: &KdTree, exec: Exec) -> Evaluation {
    let moved = t.apply_all(src);
    let moved_tree = KdTree::build(&moved);
    let fwd = exec.map_slice(&moved, |p| dst_tree.nearest(*p).unwrap());
    let bwd = exec.map_slice(dst, |q| moved_tree.nearest(*q).unwrap());
    let (ns, nd) = (src.len() as f64, dst.len() as f64);
    let value = fwd.iter().map(|x| x.1).sum::<f64>() / ns + bwd.iter().map(|x| x.1).sum::<f64>() / nd;
    let mut e = Evaluation { value, src: Vec::new(), dst: Vec::new(), w: Vec::new() };
    for (i, (j, _)) in fwd.iter().enumerate() {
        e.src.push(src[i]);
        e.dst.push(dst[*j]);
        e.w.push(1.0 / ns);
    }
    for (j, (i, _)) in bwd.iter().enumerate() {
        e.src.push(src[*i]);
        e.dst.push(dst[j]);
        e.w.push(1.0 / nd);
    }
    e
}

/// Result of [`align_similarity`]: the transform and the squared chamfer it
/// achieves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    pub transform: SimilarityTransform,
    pub chamfer: f64,
    pub iterations: usize,
}

/// ICP with similarity updates, starting from `init`. A candidate is kept
/// only if it lowers the chamfer, so the result never does worse than
/// `init`.
pub fn align_similarity_from(
    src: &[[f64; 3]],
    dst: &[[f64; 3]],
    mode: AlignMode,
    init: SimilarityTransform,
    exec: Exec,
) -> Result<Alignment, MetricsError> {
    if src.len() < 4 || dst.len() < 4 {
        return Err(MetricsError::Degenerate(format!("need at least 4 points, got {} and {}", src.len(), dst.len())));
    }
    let dst_tree = KdTree::build(dst);
    let mut best = init;
    let mut cur = evaluate(&best, src, dst, &dst_tree, exec);
    let mut iterations = 0;
    for _ in 0..ICP_MAX_ITERS {
        let cand = fit_weighted(&cur.src, &cur.dst, &cur.w, mode, &best.rotation())?;
        let next = evaluate(&cand, src, dst, &dst_tree, exec);
        if !(next.value < cur.value) {
            break;
        }
        iterations += 1;
        let rel = (cur.value - next.value) / cur.value;
        best = cand;
        cur = next;
        if rel < ICP_REL_TOL {
            break;
        }
    }
    Ok(Alignment { transform: best, chamfer: cur.value, iterations })
}

pub fn align_similarity(src: &[[f64; 3]], dst: &[[f64; 3]], mode: AlignMode, exec: Exec) -> Result<Alignment, MetricsError> {
    align_similarity_from(src, dst, mode, SimilarityTransform::identity(), exec)
}
