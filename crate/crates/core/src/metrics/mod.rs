//! Reconstruction metrics: aligned hand chamfer (scale+translation and full
//! similarity), object chamfer under the hand alignment, wrist-relative
//! joint error, object translation error and interpenetration statistics.

mod align;
mod interact;
mod kdtree;

pub use align::{
    align_similarity, align_similarity_from, fit_similarity, fit_weighted, AlignMode, Alignment, SimilarityTransform,
    ICP_MAX_ITERS, ICP_REL_TOL,
};
pub use interact::{
    distance_to_mesh, interaction_metrics, intersection_volume, point_inside, point_triangle_distance, Interaction,
};
pub use kdtree::KdTree;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meshops::TriMesh;
use crate::Exec;

/// Surface samples per mesh for chamfer evaluation.
pub const DEFAULT_SURFACE_SAMPLES: usize = 30_000;
/// Voxel pitch for intersection volume, in meters.
pub const VOXEL_PITCH_M: f64 = 0.005;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty point set")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("mesh `{mesh}` is not watertight ({open_edges} defective edges)")]
    NotWatertight { mesh: String, open_edges: usize },
    #[error("{0}")]
    Mismatch(String),
}

fn sq(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Mean squared nearest distance from A to B plus from B to A.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]], exec: Exec) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (ta, tb) = (KdTree::build(a), KdTree::build(b));
    let ab: f64 = exec.map_slice(a, |p| tb.nearest(*p).unwrap().1).iter().sum();
    let ba: f64 = exec.map_slice(b, |p| ta.nearest(*p).unwrap().1).iter().sum();
    Ok(ab / a.len() as f64 + ba / b.len() as f64)
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<[f64; 3]>, MetricsError> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let pick = WeightedIndex::new(&areas).map_err(|_| MetricsError::Empty)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(pick.sample(&mut rng));
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            [0, 1, 2].map(|d| wa * a[d] + wb * b[d] + wc * c[d])
        })
        .collect())
}

/// Wrist-relative mean joint distance for one hand (joint 0 is the wrist).
pub fn joint_error_single(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricsError::Mismatch(format!("{} predicted vs {} ground-truth joints", pred.len(), gt.len())));
    }
    let (pw, gw) = (pred[0], gt[0]);
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| sq([p[0] - pw[0], p[1] - pw[1], p[2] - pw[2]], [g[0] - gw[0], g[1] - gw[1], g[2] - gw[2]]).sqrt())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean over samples of [`joint_error_single`].
pub fn joint_error(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>]) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricsError::Mismatch("sample counts differ or are zero".into()));
    }
    let errs: Result<Vec<f64>, _> = pred.iter().zip(gt).map(|(p, g)| joint_error_single(p, g)).collect();
    Ok(mean(&errs?))
}

/// Mean Euclidean distance between predicted and true object centroids.
pub fn translation_error(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricsError::Mismatch("sample counts differ or are zero".into()));
    }
    Ok(mean(&pred.iter().zip(gt).map(|(p, g)| sq(*p, *g).sqrt()).collect::<Vec<_>>()))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Settings shared by the shape metrics.
#[derive(Clone, Copy, Debug)]
pub struct ShapeEvalConfig {
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ShapeEvalConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_SURFACE_SAMPLES, seed: 0, exec: Exec::available() }
    }
}

/// Per-sample aligned hand chamfer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandShape {
    pub h_se: f64,
    pub h_ve: f64,
    /// Scale+translation transform (pred -> gt), reused for the object.
    pub transform: SimilarityTransform,
    pub unaligned: f64,
}

/// Aligned chamfer for one predicted/true hand pair. The Procrustes search
/// starts from the scale+translation optimum, so `h_ve <= h_se <= unaligned`.
pub fn hand_shape_single(pred: &TriMesh, gt: &TriMesh, cfg: &ShapeEvalConfig) -> Result<HandShape, MetricsError> {
    let ps = sample_surface(pred, cfg.samples, cfg.seed)?;
    let gs = sample_surface(gt, cfg.samples, cfg.seed)?;
    let unaligned = chamfer(&ps, &gs, cfg.exec)?;
    let se = align_similarity(&ps, &gs, AlignMode::ScaleTranslation, cfg.exec)?;
    let ve = align_similarity_from(&ps, &gs, AlignMode::Procrustes, se.transform, cfg.exec)?;
    Ok(HandShape { h_se: se.chamfer, h_ve: ve.chamfer, transform: se.transform, unaligned })
}

/// Median aligned hand chamfer over matched pairs. Failed samples are
/// excluded and reported by index.
pub fn hand_shape_error(
    pred: &[TriMesh],
    gt: &[TriMesh],
    cfg: &ShapeEvalConfig,
) -> Result<(f64, Vec<Option<HandShape>>, Vec<usize>), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::Mismatch(format!("{} predicted vs {} ground-truth hands", pred.len(), gt.len())));
    }
    let per: Vec<Option<HandShape>> = pred.iter().zip(gt).map(|(p, g)| hand_shape_single(p, g, cfg).ok()).collect();
    let excluded: Vec<usize> = per.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();
    let vals: Vec<f64> = per.iter().flatten().map(|h| h.h_se).collect();
    Ok((median(&vals), per, excluded))
}

/// Object chamfer after moving the prediction with the hand transform (not
/// re-optimized on the object).
pub fn object_shape_single(
    pred: &TriMesh,
    gt: &TriMesh,
    hand_transform: &SimilarityTransform,
    cfg: &ShapeEvalConfig,
) -> Result<f64, MetricsError> {
    let ps = hand_transform.apply_all(&sample_surface(pred, cfg.samples, cfg.seed)?);
    let gs = sample_surface(gt, cfg.samples, cfg.seed)?;
    chamfer(&ps, &gs, cfg.exec)
}

pub fn object_shape_error(
    pred: &[TriMesh],
    gt: &[TriMesh],
    transforms: &[Option<SimilarityTransform>],
    cfg: &ShapeEvalConfig,
) -> Result<(f64, Vec<Option<f64>>), MetricsError> {
    if pred.len() != gt.len() || pred.len() != transforms.len() {
        return Err(MetricsError::Mismatch("object meshes and hand transforms differ in count".into()));
    }
    let mut per = Vec::with_capacity(pred.len());
    for (i, ((p, g), t)) in pred.iter().zip(gt).zip(transforms).enumerate() {
        let t = t.as_ref().ok_or_else(|| MetricsError::Mismatch(format!("missing hand transform for sample {i}")))?;
        per.push(object_shape_single(p, g, t, cfg).ok());
    }
    let vals: Vec<f64> = per.iter().flatten().copied().collect();
    Ok((median(&vals), per))
}

/// One evaluated sample. Lengths are reported in centimeters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: usize,
    pub h_se: Option<f64>,
    pub h_ve: Option<f64>,
    pub o_se: Option<f64>,
    pub h_je: Option<f64>,
    pub o_te: Option<f64>,
    pub penetrating: Option<bool>,
    pub p_d: Option<f64>,
    pub i_v: Option<f64>,
    pub failures: Vec<String>,
}

/// Aggregates: medians for the shape errors, means elsewhere, and the
/// penetrating fraction as the contact ratio.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub h_se: Option<f64>,
    pub h_ve: Option<f64>,
    pub o_se: Option<f64>,
    pub h_je: Option<f64>,
    pub o_te: Option<f64>,
    pub c_r: Option<f64>,
    pub p_d: Option<f64>,
    pub i_v: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub units: Units,
    pub samples: Vec<SampleMetrics>,
    pub aggregate: Aggregate,
    /// Samples with at least one metric missing, per metric.
    pub excluded: ExcludedCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub squared: String,
    pub volume: String,
}

impl Default for Units {
    fn default() -> Self {
        Self { length: "cm".into(), squared: "cm^2".into(), volume: "cm^3".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCounts {
    pub h_se: usize,
    pub o_se: usize,
    pub h_je: usize,
    pub o_te: usize,
    pub interaction: usize,
}

/// Column order of the printed table.
pub const TABLE_COLUMNS: [&str; 8] = ["H_se", "H_ve", "O_se", "H_je", "O_te", "C_r", "P_d", "I_v"];

impl MetricsReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Self {
        let col = |f: &dyn Fn(&SampleMetrics) -> Option<f64>| -> Vec<f64> { samples.iter().filter_map(f).collect() };
        let opt = |v: Vec<f64>, agg: fn(&[f64]) -> f64| if v.is_empty() { None } else { Some(agg(&v)) };
        let missing = |f: &dyn Fn(&SampleMetrics) -> bool| samples.iter().filter(|s| f(s)).count();
        let pen: Vec<f64> = samples.iter().filter_map(|s| s.penetrating).map(|p| if p { 1.0 } else { 0.0 }).collect();
        let aggregate = Aggregate {
            h_se: opt(col(&|s| s.h_se), median),
            h_ve: opt(col(&|s| s.h_ve), median),
            o_se: opt(col(&|s| s.o_se), median),
            h_je: opt(col(&|s| s.h_je), mean),
            o_te: opt(col(&|s| s.o_te), mean),
            c_r: opt(pen, mean),
            p_d: opt(col(&|s| s.p_d), mean),
            i_v: opt(col(&|s| s.i_v), mean),
        };
        let excluded = ExcludedCounts {
            h_se: missing(&|s| s.h_se.is_none()),
            o_se: missing(&|s| s.o_se.is_none()),
            h_je: missing(&|s| s.h_je.is_none()),
            o_te: missing(&|s| s.o_te.is_none()),
            interaction: missing(&|s| s.p_d.is_none()),
        };
        Self { units: Units::default(), samples, aggregate, excluded }
    }

    /// Header and one row, in the fixed column order.
    pub fn table(&self) -> String {
        let a = &self.aggregate;
        let cells = [a.h_se, a.h_ve, a.o_se, a.h_je, a.o_te, a.c_r, a.p_d, a.i_v];
        let mut s: String = TABLE_COLUMNS.iter().map(|c| format!("{c:>10}")).collect::<Vec<_>>().join(" ");
        s.push('\n');
        s.push_str(
            &cells.iter().map(|c| c.map_or(format!("{:>10}", "-"), |v| format!("{v:>10.4}"))).collect::<Vec<_>>().join(" "),
        );
        s.push('\n');
        s
    }
}

/// JSON schema of [`MetricsReport`], shipped with the CLI.
pub fn report_schema() -> serde_json::Value {
    let num = serde_json::json!({"type": ["number", "null"]});
    let metric_obj = |keys: &[&str]| {
        let props: serde_json::Map<String, serde_json::Value> = keys.iter().map(|k| (k.to_string(), num.clone())).collect();
        serde_json::json!({"type": "object", "properties": props, "required": keys})
    };
    serde_json::json!({
        "type": "object",
        "required": ["units", "samples", "aggregate", "excluded"],
        "properties": {
            "units": {"type": "object", "required": ["length", "squared", "volume"]},
            "samples": {"type": "array", "items": {
                "type": "object",
                "required": ["id", "h_se", "h_ve", "o_se", "h_je", "o_te", "penetrating", "p_d", "i_v", "failures"]
            }},
            "aggregate": metric_obj(&["h_se", "h_ve", "o_se", "h_je", "o_te", "c_r", "p_d", "i_v"]),
            "excluded": {"type": "object", "required": ["h_se", "o_se", "h_je", "o_te", "interaction"]}
        }
    })
}

/// Check `value` against the object/required/type subset used by
/// [`report_schema`].
pub fn validate_schema(value: &serde_json::Value, schema: &serde_json::Value) -> Result<(), String> {
    use serde_json::Value;
    if let Some(t) = schema.get("type") {
        let ok = |name: &str| match name {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "number" => value.is_number(),
            "null" => value.is_null(),
            _ => true,
        };
        let pass = match t {
            Value::String(s) => ok(s),
            Value::Array(a) => a.iter().filter_map(|s| s.as_str()).any(ok),
            _ => true,
        };
        if !pass {
            return Err(format!("expected {t}, found {value}"));
        }
    }
    if let (Some(req), Some(obj)) = (schema.get("required").and_then(|r| r.as_array()), value.as_object()) {
        for k in req.iter().filter_map(|k| k.as_str()) {
            if !obj.contains_key(k) {
                return Err(format!("missing key `{k}`"));
            }
        }
    }
    if let (Some(props), Some(obj)) = (schema.get("properties").and_then(|p| p.as_object()), value.as_object()) {
        for (k, sub) in props {
            if let Some(v) = obj.get(k) {
                validate_schema(v, sub).map_err(|e| format!("{k}: {e}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate_schema(v, items).map_err(|e| format!("[{i}]: {e}"))?;
        }
    }
    Ok(())
}

/// Draw a random point set; used by tests and benches.
pub fn random_cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshops::{marching_cubes, Bounds};

    fn sphere_mesh(r: f64, c: [f64; 3]) -> TriMesh {
        marching_cubes(
            move |p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt() - r,
            24,
            &Bounds::default(),
            Exec::Serial,
        )
        .unwrap()
    }

    #[test]
    fn chamfer_identities() {
        let a = random_cloud(100, 1);
        assert_eq!(chamfer(&a, &a, Exec::Serial).unwrap(), 0.0);
        assert_eq!(chamfer(&[[0.0; 3]], &[[1.0, 0.0, 0.0]], Exec::Serial).unwrap(), 2.0);
        assert!(matches!(chamfer(&[], &a, Exec::Serial), Err(MetricsError::Empty)));
    }

    #[test]
    fn joint_and_translation_identities() {
        let gt: Vec<[f64; 3]> = random_cloud(21, 2);
        assert_eq!(joint_error_single(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<_> = gt.iter().map(|p| [p[0] + 0.3, p[1] - 2.0, p[2] + 1.0]).collect();
        assert!(joint_error_single(&shifted, &gt).unwrap() < 1e-15);
        let mut one = gt.clone();
        one[7][1] += 0.21;
        assert!((joint_error_single(&one, &gt).unwrap() - 0.01).abs() < 1e-15);
        let u = 0.7;
        let e = translation_error(&[[0.0; 3], [3.0 * u, 4.0 * u, 0.0]], &[[0.0; 3], [0.0; 3]]).unwrap();
        assert!((e - 2.5 * u).abs() < 1e-15);
    }

    #[test]
    fn aligned_errors_are_ordered() {
        let gt = sphere_mesh(0.4, [0.0; 3]);
        let pred = sphere_mesh(0.35, [0.1, -0.05, 0.0]);
        let cfg = ShapeEvalConfig { samples: 2000, seed: 3, exec: Exec::Serial };
        let h = hand_shape_single(&pred, &gt, &cfg).unwrap();
        assert!(h.h_ve <= h.h_se && h.h_se <= h.unaligned);
        assert!(h.h_se < 0.1 * h.unaligned);
    }

    #[test]
    fn scaled_copy_aligns_to_zero() {
        let gt = sphere_mesh(0.3, [0.1, 0.0, 0.0]);
        let pred = gt.transformed(|p| p.map(|v| 1.3 * v));
        let cfg = ShapeEvalConfig { samples: 3000, seed: 9, exec: Exec::Serial };
        let (h, _, excluded) = hand_shape_error(&[pred], &[gt], &cfg).unwrap();
        assert!(excluded.is_empty());
        assert!(h < 1e-6, "{h}");
    }

    #[test]
    fn object_error_uses_hand_transform() {
        let obj = sphere_mesh(0.3, [0.2, 0.0, 0.0]);
        let cfg = ShapeEvalConfig { samples: 1000, seed: 1, exec: Exec::Serial };
        assert_eq!(object_shape_single(&obj, &obj, &SimilarityTransform::identity(), &cfg).unwrap(), 0.0);
        let double = SimilarityTransform { s: 2.0, ..SimilarityTransform::identity() };
        let got = object_shape_single(&obj, &obj, &double, &cfg).unwrap();
        let pts = sample_surface(&obj, 1000, 1).unwrap();
        let expect = chamfer(&double.apply_all(&pts), &pts, Exec::Serial).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn median_not_mean() {
        assert_eq!(median(&[1.0, 100.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 3.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn report_table_and_schema() {
        let s = SampleMetrics { id: 0, h_se: Some(1.0), penetrating: Some(true), p_d: Some(0.2), ..Default::default() };
        let r = MetricsReport::from_samples(vec![s, SampleMetrics { id: 1, penetrating: Some(false), ..Default::default() }]);
        assert_eq!(r.aggregate.c_r, Some(0.5));
        assert_eq!(r.excluded.h_se, 1);
        let header: Vec<_> = r.table().lines().next().unwrap().split_whitespace().map(String::from).collect();
        assert_eq!(header, TABLE_COLUMNS);
        let v = serde_json::to_value(&r).unwrap();
        validate_schema(&v, &report_schema()).unwrap();
        assert!(validate_schema(&serde_json::json!({"units": {}}), &report_schema()).is_err());
    }
}
