//! Capsule-skeleton parametric hand: 21 joints, 20 capsule bones, 16
//! axis-angle rotations (wrist + 3 per finger) and a linear bone-length shape
//! basis. Provides forward kinematics (plain and on the tape), hand-frame
//! canonicalization of query points, the analytic hand SDF and the pose
//! regression head.

mod template;

pub use template::{HandTemplate, SHAPE_STEP};

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, NodeId, ParamStore, Tape, Tensor};
use crate::geom::{arr, rodrigues, segment_distance, v3, Mat3, Vec3};
use crate::nn::Mlp;

pub const NUM_JOINTS: usize = 21;
pub const NUM_BONES: usize = 20;
pub const NUM_FINGERS: usize = 5;
pub const NUM_ROTATIONS: usize = 16;
pub const POSE_DIM: usize = 3 * NUM_ROTATIONS;
pub const SHAPE_DIM: usize = 10;
/// Width of the hand head output: pose followed by shape.
pub const HAND_HEAD_OUT: usize = POSE_DIM + SHAPE_DIM;

/// Parent of joint `j` (`None` for the wrist).
pub fn parent(j: usize) -> Option<usize> {
    match j {
        0 => None,
        _ if (j - 1).is_multiple_of(4) => Some(0),
        _ => Some(j - 1),
    }
}

/// Index of the rotation applied at joint `j`, if the joint rotates (tips
/// do not).
pub fn rotation_index(j: usize) -> Option<usize> {
    if j == 0 {
        return Some(0);
    }
    let (f, k) = ((j - 1) / 4, (j - 1) % 4);
    (k < 3).then_some(1 + 3 * f + k)
}

/// Pose (16 axis-angle triplets, the first one global) and shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    #[serde(with = "serde_arrays::pose")]
    pub theta: [f64; POSE_DIM],
    pub beta: [f64; SHAPE_DIM],
}

impl Default for HandParams {
    fn default() -> Self {
        Self { theta: [0.0; POSE_DIM], beta: [0.0; SHAPE_DIM] }
    }
}

impl HandParams {
    pub fn global_rotation(&self) -> [f64; 3] {
        [self.theta[0], self.theta[1], self.theta[2]]
    }

    pub fn set_global_rotation(&mut self, aa: [f64; 3]) {
        self.theta[..3].copy_from_slice(&aa);
    }

    pub fn local_rotation(&self, r: usize) -> Vec3 {
        Vec3::new(self.theta[3 * r], self.theta[3 * r + 1], self.theta[3 * r + 2])
    }

    /// Flattened `[theta, beta]`, the layout the hand head regresses.
    pub fn to_vec(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.beta).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut p = Self::default();
        p.theta.copy_from_slice(&v[..POSE_DIM]);
        p.beta.copy_from_slice(&v[POSE_DIM..POSE_DIM + SHAPE_DIM]);
        p
    }
}

/// Posed hand: joints, surface vertices, global rotation and its center.
#[derive(Clone, Debug, PartialEq)]
pub struct HandState {
    pub joints: Vec<[f64; 3]>,
    pub vertices: Vec<[f64; 3]>,
    pub theta_hr: [f64; 3],
    pub t_h: [f64; 3],
}

impl HandState {
    /// State from stored joints; vertices are re-tessellated.
    pub fn from_joints(joints: Vec<[f64; 3]>, theta_hr: [f64; 3], template: &HandTemplate) -> Self {
        let t_h = joints[0];
        let vertices = tessellate(&joints, template, 6, 3);
        Self { joints, vertices, theta_hr, t_h }
    }

    pub fn bone_length(&self, b: usize) -> f64 {
        let j = b + 1;
        let p = parent(j).expect("bones end at non-root joints");
        (v3(self.joints[j]) - v3(self.joints[p])).norm()
    }
}

/// Joint positions of a posed hand. The wrist (rotation center) sits at the
/// origin, which is also the shape-blended root joint.
pub fn forward_kinematics(params: &HandParams, template: &HandTemplate) -> HandState {
    let scales = template.bone_scales(&params.beta);
    let root = Vec3::zeros();
    let mut joints = [Vec3::zeros(); NUM_JOINTS];
    let mut cumulative = [Mat3::identity(); NUM_JOINTS];
    joints[0] = root;
    cumulative[0] = rodrigues(&params.local_rotation(0));
    for j in 1..NUM_JOINTS {
        let p = parent(j).unwrap();
        let b = j - 1;
        joints[j] = joints[p] + cumulative[p] * (scales[b] * v3(template.bone_offsets[b]));
        if let Some(r) = rotation_index(j) {
            cumulative[j] = cumulative[p] * rodrigues(&params.local_rotation(r));
        }
    }
    let joints: Vec<[f64; 3]> = joints.iter().map(arr).collect();
    let vertices = tessellate(&joints, template, 6, 3);
    HandState { joints, vertices, theta_hr: params.global_rotation(), t_h: arr(&root) }
}

/// Pull query points back into the hand frame whose global rotation is zero:
/// `R(theta_hr)^T (x - t_h) + t_h`.
pub fn canonicalize_hand(points: &[[f64; 3]], theta_hr: [f64; 3], t_h: [f64; 3]) -> Vec<[f64; 3]> {
    let rt = rodrigues(&v3(theta_hr)).transpose();
    let t = v3(t_h);
    points.iter().map(|p| arr(&(rt * (v3(*p) - t) + t))).collect()
}

/// Signed distance to one capsule (negative inside).
pub fn capsule_sdf(x: &Vec3, a: &Vec3, b: &Vec3, r: f64) -> f64 {
    segment_distance(x, a, b) - r
}

/// Exact signed distance to the union of bone capsules.
pub fn hand_sdf_oracle(x: [f64; 3], state: &HandState, template: &HandTemplate) -> f64 {
    hand_sdf_joints(&v3(x), &state.joints, template)
}

pub fn hand_sdf_joints(x: &Vec3, joints: &[[f64; 3]], template: &HandTemplate) -> f64 {
    let mut best = f64::INFINITY;
    for b in 0..NUM_BONES {
        let j = b + 1;
        let p = parent(j).unwrap();
        let d = capsule_sdf(x, &v3(joints[p]), &v3(joints[j]), template.bone_radii[b]);
        best = best.min(d);
    }
    best
}

/// Vertices of tessellated bone capsules: `rings` rings along each cylinder
/// plus hemispherical caps with `cap_rings` latitude rings, `2 * rings + 4`
/// points around.
pub fn tessellate(joints: &[[f64; 3]], template: &HandTemplate, rings: usize, cap_rings: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for b in 0..NUM_BONES {
        let j = b + 1;
        let p = parent(j).unwrap();
        capsule_points(&v3(joints[p]), &v3(joints[j]), template.bone_radii[b], rings, cap_rings, 2 * rings + 4, &mut out);
    }
    out
}

/// Surface points of a capsule on a regular latitude/longitude pattern.
pub fn capsule_points(a: &Vec3, b: &Vec3, r: f64, rings: usize, cap_rings: usize, around: usize, out: &mut Vec<[f64; 3]>) {
    let axis = b - a;
    let len = axis.norm();
    let w = if len > 0.0 { axis / len } else { Vec3::z() };
    let helper = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = w.cross(&helper).normalize();
    let v = w.cross(&u);
    let ring = |center: Vec3, radius: f64, out: &mut Vec<[f64; 3]>| {
        for k in 0..around {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / around as f64;
            out.push(arr(&(center + radius * (phi.cos() * u + phi.sin() * v))));
        }
    };
    for i in 0..=rings {
        ring(a + axis * (i as f64 / rings.max(1) as f64), r, out);
    }
    for i in 1..=cap_rings {
        let lat = std::f64::consts::FRAC_PI_2 * i as f64 / (cap_rings + 1) as f64;
        ring(b + w * (r * lat.sin()), r * lat.cos(), out);
        ring(a - w * (r * lat.sin()), r * lat.cos(), out);
    }
    out.push(arr(&(b + w * r)));
    out.push(arr(&(a - w * r)));
}

/// Forward kinematics recorded on the tape. `theta` is `1 x 48`, `beta` is
/// `1 x 10`; returns the `21 x 3` joint matrix.
pub fn forward_kinematics_tape(
    tape: &mut Tape,
    theta: NodeId,
    beta: NodeId,
    template: &HandTemplate,
) -> Result<NodeId, AutodiffError> {
    // bone scales = 1 + beta * B^T
    let basis_t: Vec<f64> = (0..SHAPE_DIM)
        .flat_map(|k| template.shape_basis.iter().map(move |row| row[k]))
        .collect();
    let basis = tape.constant(Tensor::matrix(SHAPE_DIM, NUM_BONES, basis_t));
    let ones = tape.constant(Tensor::matrix(1, NUM_BONES, vec![1.0; NUM_BONES]));
    let scales = tape.affine(beta, basis, Some(ones))?;
    let mut offsets = Vec::with_capacity(NUM_BONES);
    for b in 0..NUM_BONES {
        let s = tape.slice_cols(scales, b, 1)?;
        let o = tape.constant(Tensor::row(&template.bone_offsets[b]));
        offsets.push(tape.affine(s, o, None)?);
    }
    let mut fingers: Option<NodeId> = None;
    for f in 0..NUM_FINGERS {
        let bone = |k: usize| offsets[4 * f + k];
        let aa = |tape: &mut Tape, k: usize| tape.slice_cols(theta, 3 * (1 + 3 * f + k), 3);
        // Work outwards-in: positions of the distal joints relative to each
        // rotating joint, in that joint's parent frame.
        let a2 = aa(tape, 2)?;
        let mut chain = tape.rotate_points(bone(3), a2)?;
        for k in (0..2).rev() {
            let shifted = tape.add_row(chain, bone(k + 1))?;
            let stacked = tape.concat_rows(bone(k + 1), shifted)?;
            let ak = aa(tape, k)?;
            chain = tape.rotate_points(stacked, ak)?;
        }
        let shifted = tape.add_row(chain, bone(0))?;
        let finger = tape.concat_rows(bone(0), shifted)?;
        fingers = Some(match fingers {
            None => finger,
            Some(acc) => tape.concat_rows(acc, finger)?,
        });
    }
    let global = tape.slice_cols(theta, 0, 3)?;
    let posed = tape.rotate_points(fingers.expect("five fingers"), global)?;
    let root = tape.constant(Tensor::zeros(1, 3));
    tape.concat_rows(root, posed)
}

/// Pose/shape regression head: 256 -> 256 relu -> 58.
pub fn hand_head() -> Mlp {
    Mlp::new("hand_head", &[256, 256, HAND_HEAD_OUT])
}

/// Run the hand head; returns `(theta 1x48, beta 1x10)` nodes.
pub fn hand_encoder(
    tape: &mut Tape,
    store: &ParamStore,
    features: NodeId,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let out = hand_head().forward(tape, store, features)?;
    let theta = tape.slice_cols(out, 0, POSE_DIM)?;
    let beta = tape.slice_cols(out, POSE_DIM, SHAPE_DIM)?;
    Ok((theta, beta))
}

mod serde_arrays {
    pub mod pose {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use super::super::POSE_DIM;

        pub fn serialize<S: Serializer>(v: &[f64; POSE_DIM], s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; POSE_DIM], D::Error> {
            let v = Vec::<f64>::deserialize(d)?;
            v.try_into().map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"48 pose values"))
        }
    }
}
