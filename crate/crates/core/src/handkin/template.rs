use serde::{Deserialize, Serialize};

use super::{NUM_BONES, NUM_FINGERS, SHAPE_DIM};

/// Rest-pose geometry of the capsule hand.
///
/// Bone `b` ends at joint `b + 1`; its offset is expressed in the frame of its
/// parent joint before any rotation. `shape_basis[b]` maps the shape vector to
/// an additive change of that bone's length scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandTemplate {
    pub bone_offsets: Vec<[f64; 3]>,
    pub bone_radii: Vec<f64>,
    pub shape_basis: Vec<[f64; SHAPE_DIM]>,
    /// Flexion axis per finger (thumb, index, middle, ring, pinky).
    pub flex_axes: Vec<[f64; 3]>,
}

/// Length change per unit of a shape coefficient.
pub const SHAPE_STEP: f64 = 0.1;

impl HandTemplate {
    /// Right hand in meters: wrist at the origin, fingers along +y, palm
    /// facing -z, thumb towards +x.
    pub fn standard() -> Self {
        // (first joint relative to wrist, direction of the remaining bones, lengths, radii)
        let fingers: [([f64; 3], [f64; 3], [f64; 3], [f64; 4]); NUM_FINGERS] = [
            ([0.022, 0.018, -0.006], [0.6, 0.8, 0.0], [0.034, 0.030, 0.024], [0.0120, 0.0105, 0.0095, 0.0085]),
            ([0.026, 0.088, 0.0], [0.05, 1.0, 0.0], [0.040, 0.025, 0.020], [0.0110, 0.0095, 0.0085, 0.0075]),
            ([0.006, 0.093, 0.0], [0.0, 1.0, 0.0], [0.045, 0.028, 0.022], [0.0110, 0.0095, 0.0085, 0.0075]),
            ([-0.013, 0.088, 0.0], [-0.04, 1.0, 0.0], [0.042, 0.027, 0.021], [0.0110, 0.0092, 0.0082, 0.0072]),
            ([-0.030, 0.078, 0.0], [-0.12, 1.0, 0.0], [0.032, 0.020, 0.018], [0.0105, 0.0085, 0.0075, 0.0068]),
        ];
        let mut bone_offsets = Vec::with_capacity(NUM_BONES);
        let mut bone_radii = Vec::with_capacity(NUM_BONES);
        let mut shape_basis = Vec::with_capacity(NUM_BONES);
        let mut flex_axes = Vec::with_capacity(NUM_FINGERS);
        for (f, (first, dir, lens, radii)) in fingers.iter().enumerate() {
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let d = [dir[0] / n, dir[1] / n, dir[2] / n];
            // z x d bends the finger towards -z
            flex_axes.push([-d[1], d[0], 0.0]);
            bone_offsets.push(*first);
            for &l in lens {
                bone_offsets.push([d[0] * l, d[1] * l, d[2] * l]);
            }
            bone_radii.extend_from_slice(radii);
            for k in 0..4 {
                let mut row = [0.0; SHAPE_DIM];
                row[0] = SHAPE_STEP; // overall size
                row[1 + f] = SHAPE_STEP; // this finger
                row[6 + k] = SHAPE_STEP; // this bone level (metacarpal, proximal, middle, distal)
                shape_basis.push(row);
            }
        }
        Self { bone_offsets, bone_radii, shape_basis, flex_axes }
    }

    /// Same hand with every length multiplied by `s` (dataset normalization).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            bone_offsets: self.bone_offsets.iter().map(|o| o.map(|v| v * s)).collect(),
            bone_radii: self.bone_radii.iter().map(|r| r * s).collect(),
            shape_basis: self.shape_basis.clone(),
            flex_axes: self.flex_axes.clone(),
        }
    }

    /// Per-bone length multipliers for shape coefficients `beta`.
    pub fn bone_scales(&self, beta: &[f64; SHAPE_DIM]) -> [f64; NUM_BONES] {
        let mut out = [1.0; NUM_BONES];
        for (b, row) in self.shape_basis.iter().enumerate() {
            out[b] += row.iter().zip(beta).map(|(a, c)| a * c).sum::<f64>();
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.bone_offsets.len() != NUM_BONES || self.bone_radii.len() != NUM_BONES || self.shape_basis.len() != NUM_BONES {
            return Err(format!("template must describe {NUM_BONES} bones"));
        }
        if self.flex_axes.len() != NUM_FINGERS {
            return Err(format!("template must have {NUM_FINGERS} flexion axes"));
        }
        if let Some(r) = self.bone_radii.iter().find(|r| !(**r > 0.0)) {
            return Err(format!("bone radius {r} is not positive"));
        }
        Ok(())
    }
}
