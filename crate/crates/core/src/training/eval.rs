//! Test-time reconstruction and scoring.

use serde::{Deserialize, Serialize};

use super::model::{Model, Prediction};
use super::TrainError;
use crate::geom::v3;
use crate::handkin::{hand_sdf_joints, HandTemplate};
use crate::meshops::{grid_points, marching_cubes, marching_cubes_grid, Bounds, MeshError, TriMesh};
use crate::metrics::{
    hand_shape_single, interaction_metrics, joint_error_single, object_shape_single, MetricsReport, SampleMetrics,
    ShapeEvalConfig, VOXEL_PITCH_M,
};
use crate::scenegen::{analytic_object_sdf, DatasetManifest, SceneSample};
use crate::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Grid points per axis for predicted meshes.
    pub res: usize,
    /// Grid points per axis for ground-truth meshes.
    pub gt_res: usize,
    /// Surface samples per mesh for the chamfer metrics.
    pub surface_samples: usize,
    pub seed: u64,
    /// Intersection-volume voxel pitch in meters.
    pub voxel_pitch_m: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { res: 64, gt_res: 64, surface_samples: 30_000, seed: 0, voxel_pitch_m: VOXEL_PITCH_M }
    }
}

/// Reconstruction volume in normalized units.
pub fn recon_bounds() -> Bounds {
    Bounds::cube(1.0)
}

#[derive(Debug)]
pub struct Reconstruction {
    pub prediction: Prediction,
    pub hand: Result<TriMesh, MeshError>,
    pub object: Option<Result<TriMesh, MeshError>>,
}

pub fn reconstruct(
    model: &Model,
    sample: &SceneSample,
    template: &HandTemplate,
    res: usize,
    exec: Exec,
) -> Result<Reconstruction, TrainError> {
    let bounds = recon_bounds();
    let prediction = model.predict(sample, template)?;
    let pts = grid_points(res, &bounds);
    let hv = model.hand_field(&prediction, &pts, exec)?;
    let hand = marching_cubes_grid(&hv, res, &bounds);
    let object = match model.object_field(&prediction, &pts, exec) {
        Some(v) => Some(marching_cubes_grid(&v?, res, &bounds)),
        None => None,
    };
    Ok(Reconstruction { prediction, hand, object })
}

/// Meshes of the analytic hand and object fields.
pub fn ground_truth_meshes(
    sample: &SceneSample,
    template: &HandTemplate,
    res: usize,
    exec: Exec,
) -> Result<(TriMesh, TriMesh), MeshError> {
    let b = recon_bounds();
    let hand = marching_cubes(|x| hand_sdf_joints(&v3(x), &sample.joints, template), res, &b, exec)?;
    let object = marching_cubes(|x| analytic_object_sdf(x, &sample.object), res, &b, exec)?;
    Ok((hand, object))
}

/// Score one scene from predicted meshes. `None` meshes mean the branch
/// does not exist; errors are recorded as failures.
pub fn score_sample(
    id: usize,
    manifest: &DatasetManifest,
    sample: &SceneSample,
    pred: Option<&Prediction>,
    hand: &Result<TriMesh, MeshError>,
    object: Option<&Result<TriMesh, MeshError>>,
    cfg: &EvalConfig,
    exec: Exec,
) -> SampleMetrics {
    let template = manifest.normalized_template();
    let cm = manifest.cm();
    let cm2 = cm * cm;
    let mut m = SampleMetrics { id, ..SampleMetrics::default() };
    let (gt_hand, gt_obj) = match ground_truth_meshes(sample, &template, cfg.gt_res, exec) {
        Ok(x) => x,
        Err(e) => {
            m.failures.push(format!("ground truth: {e}"));
            return m;
        }
    };
    let shape_cfg = ShapeEvalConfig { samples: cfg.surface_samples, seed: cfg.seed, exec };
    let mut hand_transform = None;
    match hand {
        Ok(h) => match hand_shape_single(h, &gt_hand, &shape_cfg) {
            Ok(r) => {
                m.h_se = Some(r.h_se / cm2);
                m.h_ve = Some(r.h_ve / cm2);
                hand_transform = Some(r.transform);
            }
            Err(e) => m.failures.push(format!("hand shape: {e}")),
        },
        Err(e) => m.failures.push(format!("hand mesh: {e}")),
    }
    if let Some(joints) = pred.and_then(|p| p.joints.as_ref()) {
        match joint_error_single(joints, &sample.joints) {
            Ok(e) => m.h_je = Some(e / cm),
            Err(e) => m.failures.push(format!("joints: {e}")),
        }
    }
    if let Some(t) = pred.and_then(|p| p.t_o) {
        m.o_te = Some((v3(t) - v3(sample.object.t_o)).norm() / cm);
    }
    if let Some(obj) = object {
        match (obj, &hand_transform) {
            (Ok(o), Some(t)) => match object_shape_single(o, &gt_obj, t, &shape_cfg) {
                Ok(v) => m.o_se = Some(v / cm2),
                Err(e) => m.failures.push(format!("object shape: {e}")),
            },
            (Ok(_), None) => m.failures.push("object shape: no hand alignment".into()),
            (Err(e), _) => m.failures.push(format!("object mesh: {e}")),
        }
        if let (Ok(h), Ok(o)) = (hand, obj) {
            match interaction_metrics(h, o, cfg.voxel_pitch_m * manifest.scale, "predicted object") {
                Ok(r) => {
                    m.penetrating = Some(r.penetrating);
                    m.p_d = Some(r.depth / cm);
                    m.i_v = Some(r.volume / (cm2 * cm));
                }
                Err(e) => m.failures.push(format!("interaction: {e}")),
            }
        }
    }
    m
}

/// Reconstruct and score every sample in `test`.
pub fn evaluate(
    model: &Model,
    manifest: &DatasetManifest,
    test: &[SceneSample],
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<MetricsReport, TrainError> {
    let template = manifest.normalized_template();
    // samples run in parallel; each one is evaluated serially
    let inner = Exec::Serial;
    let per: Vec<Result<SampleMetrics, TrainError>> = exec.map_slice(test, |s| {
        let r = reconstruct(model, s, &template, cfg.res, inner)?;
        Ok(score_sample(s.id as usize, manifest, s, Some(&r.prediction), &r.hand, r.object.as_ref(), cfg, inner))
    });
    let samples = per.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_samples(samples))
}
