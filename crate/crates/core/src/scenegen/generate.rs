use nalgebra::{Quaternion, UnitQuaternion};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::primitive::{object_sdf_batch, ObjectPrimitive, Shape};
use super::SceneError;
use crate::geom::{arr, rodrigues, rotation_log, rot_z, v3, Vec3};
use crate::handkin::{
    forward_kinematics, hand_sdf_joints, parent, HandParams, HandState, HandTemplate, NUM_BONES, NUM_FINGERS, SHAPE_DIM,
};
use crate::objpose::HeatmapGrid;
use crate::Exec;

/// Generation settings. Lengths ending in `_m` are meters; the point
/// sampling widths are normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub points_per_branch: usize,
    pub render_size: usize,
    pub sigma_near: f64,
    pub sigma_close: f64,
    pub frac_near: f64,
    pub frac_close: f64,
    pub flex_max: f64,
    pub abduction_max: f64,
    pub beta_max: f64,
    pub proximity_m: f64,
    pub penetration_cap_m: f64,
    pub retries: usize,
    pub test_fraction: f64,
    pub heatmap: HeatmapGrid,
    pub object_kinds: Vec<String>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            points_per_branch: 40_000,
            render_size: 32,
            sigma_near: 0.05,
            sigma_close: 0.005,
            frac_near: 0.475,
            frac_close: 0.475,
            flex_max: 1.2,
            abduction_max: 0.15,
            beta_max: 1.0,
            proximity_m: 0.005,
            penetration_cap_m: 0.002,
            retries: 64,
            test_fraction: 0.1,
            heatmap: HeatmapGrid::default(),
            object_kinds: ["sphere", "box", "capsule", "torus"].map(String::from).to_vec(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Config(m));
        if self.points_per_branch < 2 {
            return bad(format!("points_per_branch = {} < 2", self.points_per_branch));
        }
        if self.render_size == 0 {
            return bad("render_size must be positive".into());
        }
        if !(self.frac_near >= 0.0 && self.frac_close >= 0.0 && self.frac_near + self.frac_close <= 1.0) {
            return bad("sampling fractions must be non-negative and sum to at most 1".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction {} outside [0, 1)", self.test_fraction));
        }
        if self.object_kinds.is_empty() || self.object_kinds.iter().any(|k| !["sphere", "box", "capsule", "torus"].contains(&k.as_str())) {
            return bad(format!("object_kinds {:?}", self.object_kinds));
        }
        Ok(())
    }
}

/// Independent random streams per scene, so changing one consumer never
/// shifts another.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Geometry = 0,
    Points = 1,
}

pub fn scene_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Scene seed for sample `i` of a dataset.
pub fn sample_seed(base: u64, i: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Geometry of one scene before normalization (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct RawScene {
    pub seed: u64,
    pub hand: HandParams,
    pub joints: Vec<[f64; 3]>,
    pub object: ObjectPrimitive,
    /// Hand-object surface gap (negative when interpenetrating).
    pub gap: f64,
}

fn random_rotation(rng: &mut impl Rng) -> [f64; 3] {
    let q: [f64; 4] = [0; 4].map(|_| StandardNormal.sample(rng));
    let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    arr(&rotation_log(&q.to_rotation_matrix().into_inner()))
}

/// Random grasp-like pose: uniform global rotation, flexion about each
/// finger's flexion axis and a little abduction at the first joint.
pub fn random_hand(rng: &mut impl Rng, template: &HandTemplate, cfg: &GenConfig) -> HandParams {
    let mut p = HandParams::default();
    p.set_global_rotation(random_rotation(rng));
    for f in 0..NUM_FINGERS {
        let axis = v3(template.flex_axes[f]);
        for k in 0..3 {
            let mut aa = axis * rng.random_range(0.0..=cfg.flex_max);
            if k == 0 {
                aa += Vec3::z() * rng.random_range(-cfg.abduction_max..=cfg.abduction_max);
            }
            let r = 1 + 3 * f + k;
            p.theta[3 * r..3 * r + 3].copy_from_slice(aa.as_slice());
        }
    }
    for b in p.beta.iter_mut().take(SHAPE_DIM) {
        *b = rng.random_range(-cfg.beta_max..=cfg.beta_max);
    }
    p
}

fn random_shape(rng: &mut impl Rng, cfg: &GenConfig) -> Shape {
    let kind = &cfg.object_kinds[rng.random_range(0..cfg.object_kinds.len())];
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match kind.as_str() {
        "sphere" => Shape::Sphere { radius: u(0.025, 0.05) },
        "box" => Shape::Box { half: [u(0.015, 0.04), u(0.015, 0.04), u(0.015, 0.04)] },
        "capsule" => Shape::Capsule { half_length: u(0.01, 0.04), radius: u(0.015, 0.03) },
        _ => Shape::Torus { major: u(0.025, 0.045), minor: u(0.008, 0.015) },
    }
}

/// Minimum of the object's signed distance along segment `[a, b]`.
fn segment_min_sdf(a: &Vec3, b: &Vec3, f: &impl Fn(&Vec3) -> f64) -> f64 {
    const N: usize = 32;
    let at = |t: f64| f(&(a + (b - a) * t));
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..=N {
        let v = at(i as f64 / N as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = ((best_i.max(1) - 1) as f64 / N as f64, ((best_i + 1).min(N)) as f64 / N as f64);
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if at(m1) < at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(at(0.5 * (lo + hi)))
}

/// Hand-object surface gap: over all bones, the least object distance along
/// the bone minus its radius.
pub fn surface_gap(joints: &[[f64; 3]], template: &HandTemplate, object: &ObjectPrimitive) -> f64 {
    let frame = object.local_frame();
    let f = |p: &Vec3| object.shape.sdf(&frame(arr(p)));
    (0..NUM_BONES)
        .map(|b| {
            let j = b + 1;
            segment_min_sdf(&v3(joints[parent(j).unwrap()]), &v3(joints[j]), &f) - template.bone_radii[b]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random hand and a primitive pushed along the palm normal until its gap to
/// the hand matches a random target in `[-cap, proximity]`.
pub fn generate_raw(seed: u64, template: &HandTemplate, cfg: &GenConfig) -> Result<RawScene, SceneError> {
    let mut rng = scene_rng(seed, Stream::Geometry);
    let hand = random_hand(&mut rng, template, cfg);
    let state = forward_kinematics(&hand, template);
    let j = |i: usize| v3(state.joints[i]);
    let knuckles = (j(5) + j(9) + j(13) + j(17)) / 4.0;
    let palm = 0.5 * (j(0) + knuckles);
    let rg = rodrigues(&v3(hand.global_rotation()));
    let normal = rg * -Vec3::z();
    let (side, along) = (rg * Vec3::x(), rg * Vec3::y());
    for _ in 0..cfg.retries {
        let shape = random_shape(&mut rng, cfg);
        let rotation = random_rotation(&mut rng);
        let center = palm + side * rng.random_range(-0.01..0.01) + along * rng.random_range(-0.01..0.01);
        let target = rng.random_range(-cfg.penetration_cap_m..=cfg.proximity_m);
        let place = |lambda: f64| ObjectPrimitive { shape, rotation, t_o: arr(&(center + normal * lambda)) };
        let gap = |lambda: f64| surface_gap(&state.joints, template, &place(lambda));
        let (mut lo, mut hi) = (0.0, shape.bounding_radius() + 0.25);
        if !(gap(lo) < target && gap(hi) > target) {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let object = place(hi);
        let g = gap(hi);
        if g <= cfg.proximity_m && g >= -cfg.penetration_cap_m {
            return Ok(RawScene { seed, hand, joints: state.joints, object, gap: g });
        }
    }
    Err(SceneError::RetriesExhausted { seed, retries: cfg.retries })
}

/// Largest absolute coordinate reached by a raw scene's geometry.
pub fn raw_extent(scene: &RawScene, template: &HandTemplate) -> f64 {
    let mut e: f64 = 0.0;
    for b in 0..NUM_BONES {
        let j = b + 1;
        for p in [scene.joints[parent(j).unwrap()], scene.joints[j]] {
            e = e.max(p.iter().map(|v| v.abs()).fold(0.0, f64::max) + template.bone_radii[b]);
        }
    }
    let r = scene.object.shape.bounding_radius();
    e.max(scene.object.t_o.iter().map(|v| v.abs()).fold(0.0, f64::max) + r)
}

/// Signed-distance-labelled points; negatives (inside) come first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPoints {
    pub points: Vec<[f64; 3]>,
    pub sdf: Vec<f64>,
    pub negatives: usize,
}

impl LabeledPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.points.len() - self.negatives
    }

    /// Stable sign partition of `points` with labels `sdf`.
    pub fn partitioned(points: Vec<[f64; 3]>, sdf: Vec<f64>) -> Self {
        let (mut neg, mut pos): (Vec<_>, Vec<_>) = points.into_iter().zip(sdf).partition(|(_, d)| *d < 0.0);
        let negatives = neg.len();
        neg.append(&mut pos);
        let (points, sdf) = neg.into_iter().unzip();
        Self { points, sdf, negatives }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p.map(|v| v * s)).collect(),
            sdf: self.sdf.iter().map(|d| d * s).collect(),
            negatives: self.negatives,
        }
    }
}

/// One synthetic training or evaluation record, in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub id: u64,
    pub seed: u64,
    pub render_size: usize,
    pub render: Vec<f64>,
    pub hand: HandParams,
    pub joints: Vec<[f64; 3]>,
    pub object: ObjectPrimitive,
    pub hand_points: LabeledPoints,
    pub object_points: LabeledPoints,
}

impl SceneSample {
    /// Ground-truth hand state; `template` must be at the dataset scale.
    pub fn hand_state(&self, template: &HandTemplate) -> HandState {
        HandState::from_joints(self.joints.clone(), self.hand.global_rotation(), template)
    }

    pub fn hand_sdf(&self, x: [f64; 3], template: &HandTemplate) -> f64 {
        hand_sdf_joints(&v3(x), &self.joints, template)
    }

    pub fn scene_sdf(&self, x: [f64; 3], template: &HandTemplate) -> f64 {
        self.hand_sdf(x, template).min(super::analytic_object_sdf(x, &self.object))
    }
}

fn gaussian3(rng: &mut impl Rng, sigma: f64) -> Vec3 {
    Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)) * sigma
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = gaussian3(rng, 1.0);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Points on the union of bone capsules, area-weighted per capsule, with
/// points buried inside other capsules rejected.
fn hand_surface_points(n: usize, joints: &[[f64; 3]], template: &HandTemplate, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let areas: Vec<f64> = (0..NUM_BONES)
        .map(|b| {
            let len = (v3(joints[b + 1]) - v3(joints[parent(b + 1).unwrap()])).norm();
            let r = template.bone_radii[b];
            2.0 * std::f64::consts::PI * r * len + 4.0 * std::f64::consts::PI * r * r
        })
        .collect();
    let pick = rand::distr::weighted::WeightedIndex::new(&areas).expect("capsules have positive area");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let b = pick.sample(rng);
        let (a, c) = (v3(joints[parent(b + 1).unwrap()]), v3(joints[b + 1]));
        let r = template.bone_radii[b];
        let dir = unit_vector(rng);
        // a point on the capsule: nearest axis point plus r along a random
        // direction perpendicular to the axis, or on a cap
        let t: f64 = rng.random();
        let axis = c - a;
        let len = axis.norm();
        let w = axis / len;
        let cyl_share = len / (len + 2.0 * r);
        let p = if rng.random::<f64>() < cyl_share {
            let perp = dir - w * dir.dot(&w);
            if perp.norm() < 1e-9 {
                continue;
            }
            a + axis * t + perp.normalize() * r
        } else if dir.dot(&w) >= 0.0 {
            c + dir * r
        } else {
            a + dir * r
        };
        if hand_sdf_joints(&p, joints, template) > -1e-9 {
            out.push(arr(&p));
        }
    }
    out
}

/// Points on a primitive's surface by projecting random points along the
/// distance gradient.
pub(crate) fn object_surface_points(n: usize, object: &ObjectPrimitive, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let frame = object.local_frame();
    let f = |p: &Vec3| object.shape.sdf(&frame(arr(p)));
    let r = object.shape.bounding_radius();
    let c = v3(object.t_o);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut p = c + unit_vector(rng) * (r * rng.random_range(0.2..1.5));
        let mut ok = false;
        for _ in 0..8 {
            let d = f(&p);
            if d.abs() < 1e-10 {
                ok = true;
                break;
            }
            let h = 1e-7 * r.max(1e-3);
            let g = Vec3::new(
                f(&(p + Vec3::x() * h)) - f(&(p - Vec3::x() * h)),
                f(&(p + Vec3::y() * h)) - f(&(p - Vec3::y() * h)),
                f(&(p + Vec3::z() * h)) - f(&(p - Vec3::z() * h)),
            );
            let gn = g.norm();
            if gn < 1e-12 {
                break;
            }
            p -= g / gn * d;
        }
        if ok {
            out.push(arr(&p));
        }
    }
    out
}

/// Near-surface Gaussian samples at two widths plus uniform cube samples.
pub(crate) fn mixture(surface: &[[f64; 3]], n: usize, cfg: &GenConfig, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let n_near = (n as f64 * cfg.frac_near).round() as usize;
    let n_close = ((n as f64 * cfg.frac_close).round() as usize).min(n - n_near);
    let mut out = Vec::with_capacity(n);
    for (i, s) in surface.iter().enumerate().take(n_near + n_close) {
        let sigma = if i < n_near { cfg.sigma_near } else { cfg.sigma_close };
        out.push(arr(&(v3(*s) + gaussian3(rng, sigma))));
    }
    while out.len() < n {
        out.push([0; 3].map(|_| rng.random_range(-1.0..1.0)));
    }
    out
}

/// Labelled hand and object point sets for a normalized scene.
pub fn sample_points(
    joints: &[[f64; 3]],
    object: &ObjectPrimitive,
    template: &HandTemplate,
    n: usize,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> (LabeledPoints, LabeledPoints) {
    let hs = hand_surface_points(n, joints, template, rng);
    let hp = mixture(&hs, n, cfg, rng);
    let os = object_surface_points(n, object, rng);
    let op = mixture(&os, n, cfg, rng);
    let hl = hp.iter().map(|p| hand_sdf_joints(&v3(*p), joints, template)).collect();
    let ol = object_sdf_batch(&op, object);
    (LabeledPoints::partitioned(hp, hl), LabeledPoints::partitioned(op, ol))
}

/// Pixel center `(x, y)` of column `i`, row `j` in the `[-1, 1]^2` view.
pub fn pixel_center(i: usize, j: usize, size: usize) -> (f64, f64) {
    let step = 2.0 / size as f64;
    (-1.0 + (i as f64 + 0.5) * step, 1.0 - (j as f64 + 0.5) * step)
}

/// Ray start height and depth range of the orthographic camera.
pub const RENDER_Z0: f64 = 1.5;
pub const RENDER_DEPTH: f64 = 3.0;

/// Orthographic sphere-traced depth image looking down -z. Hits map to
/// `1 - t / depth` in (0, 1]; misses are 0. Row-major, row 0 at +y.
pub fn render_field(field: impl Fn([f64; 3]) -> f64, size: usize) -> Vec<f64> {
    let mut img = vec![0.0; size * size];
    for j in 0..size {
        for i in 0..size {
            let (x, y) = pixel_center(i, j, size);
            let mut t = 0.0;
            for _ in 0..512 {
                let d = field([x, y, RENDER_Z0 - t]);
                if d < 1e-6 {
                    img[j * size + i] = 1.0 - t / RENDER_DEPTH;
                    break;
                }
                t += d;
                if t > RENDER_DEPTH {
                    break;
                }
            }
        }
    }
    img
}

pub fn render_scene(joints: &[[f64; 3]], object: &ObjectPrimitive, template: &HandTemplate, size: usize) -> Vec<f64> {
    let frame = object.local_frame();
    render_field(|x| hand_sdf_joints(&v3(x), joints, template).min(object.shape.sdf(&frame(x))), size)
}

/// Dataset scale: the factor bringing every negative point inside the unit
/// cube with a 1% margin.
pub fn compute_dataset_scale(samples: &[SceneSample]) -> f64 {
    let mut m: f64 = 0.0;
    for s in samples {
        for lp in [&s.hand_points, &s.object_points] {
            for p in &lp.points[..lp.negatives] {
                m = m.max(p[0].abs()).max(p[1].abs()).max(p[2].abs());
            }
        }
    }
    if m > 0.0 {
        0.99 / m
    } else {
        1.0
    }
}

/// Scale geometry, points and labels by `s` (the render is left as is).
pub fn apply_scale(sample: &SceneSample, s: f64) -> SceneSample {
    SceneSample {
        joints: sample.joints.iter().map(|p| p.map(|v| v * s)).collect(),
        object: sample.object.scaled(s),
        hand_points: sample.hand_points.scaled(s),
        object_points: sample.object_points.scaled(s),
        ..sample.clone()
    }
}

fn q32(v: f64) -> f64 {
    v as f32 as f64
}

fn q3(p: [f64; 3]) -> [f64; 3] {
    p.map(q32)
}

/// Round everything to single precision, recompute labels from the rounded
/// inputs and re-render, so the stored record is self-consistent.
pub fn finalize(sample: &SceneSample, template: &HandTemplate) -> SceneSample {
    let mut hand = sample.hand;
    hand.theta = hand.theta.map(q32);
    hand.beta = hand.beta.map(q32);
    let joints: Vec<[f64; 3]> = forward_kinematics(&hand, template).joints.into_iter().map(q3).collect();
    let shape = sample.object.shape.scaled(1.0);
    let shape = Shape::from_code(shape.code(), shape.params().map(q32)).unwrap();
    let object = ObjectPrimitive { shape, rotation: q3(sample.object.rotation), t_o: q3(sample.object.t_o) };
    let relabel_hand = |lp: &LabeledPoints| {
        let pts: Vec<[f64; 3]> = lp.points.iter().map(|p| q3(*p)).collect();
        let sdf = pts.iter().map(|p| q32(hand_sdf_joints(&v3(*p), &joints, template))).collect();
        LabeledPoints::partitioned(pts, sdf)
    };
    let hand_points = relabel_hand(&sample.hand_points);
    let opts: Vec<[f64; 3]> = sample.object_points.points.iter().map(|p| q3(*p)).collect();
    let osdf = object_sdf_batch(&opts, &object).into_iter().map(q32).collect();
    let object_points = LabeledPoints::partitioned(opts, osdf);
    let render = render_scene(&joints, &object, template, sample.render_size).into_iter().map(q32).collect();
    SceneSample { render, hand, joints, object, hand_points, object_points, ..sample.clone() }
}

/// Rotate a sample about the viewing axis by a random angle in
/// `[-max_deg, max_deg]`: points, joints, global hand rotation, object pose
/// and render move together; labels are untouched.
pub fn augment_rotation(sample: &SceneSample, max_deg: f64, template: &HandTemplate, rng: &mut impl Rng) -> SceneSample {
    if max_deg <= 0.0 {
        return sample.clone();
    }
    let angle = rng.random_range(-max_deg..=max_deg).to_radians();
    rotate_about_view(sample, angle, template)
}

pub fn rotate_about_view(sample: &SceneSample, angle: f64, template: &HandTemplate) -> SceneSample {
    let r = rot_z(angle);
    let rot = |p: &[f64; 3]| arr(&(r * v3(*p)));
    let rot_points = |lp: &LabeledPoints| LabeledPoints { points: lp.points.iter().map(rot).collect(), ..lp.clone() };
    let mut hand = sample.hand;
    hand.set_global_rotation(arr(&rotation_log(&(r * rodrigues(&v3(hand.global_rotation()))))));
    let object = ObjectPrimitive {
        shape: sample.object.shape,
        rotation: arr(&rotation_log(&(r * rodrigues(&v3(sample.object.rotation))))),
        t_o: rot(&sample.object.t_o),
    };
    let joints: Vec<[f64; 3]> = sample.joints.iter().map(rot).collect();
    let render = render_scene(&joints, &object, template, sample.render_size);
    SceneSample {
        render,
        hand,
        joints,
        object,
        hand_points: rot_points(&sample.hand_points),
        object_points: rot_points(&sample.object_points),
        ..sample.clone()
    }
}

/// Dataset-level metadata written next to the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Meters to normalized units.
    pub scale: f64,
    pub heatmap: HeatmapGrid,
    /// Rest hand in meters; use [`DatasetManifest::normalized_template`] for
    /// sample geometry.
    pub template: HandTemplate,
    pub generation: GenConfig,
}

impl DatasetManifest {
    pub fn normalized_template(&self) -> HandTemplate {
        self.template.scaled(self.scale)
    }

    pub fn train_ids(&self) -> std::ops::Range<usize> {
        0..self.sample_count - self.test_count
    }

    pub fn test_ids(&self) -> std::ops::Range<usize> {
        self.sample_count - self.test_count..self.sample_count
    }

    /// Normalized length of one centimeter.
    pub fn cm(&self) -> f64 {
        0.01 * self.scale
    }
}

/// Generate `n` scenes from `seed`: raw geometry, a geometric pre-scale,
/// point sampling, the negative-point dataset scale and final rounding.
pub fn generate_dataset(
    n: usize,
    seed: u64,
    cfg: &GenConfig,
    exec: Exec,
) -> Result<(DatasetManifest, Vec<SceneSample>), SceneError> {
    cfg.validate()?;
    if n == 0 {
        return Err(SceneError::Config("sample count must be positive".into()));
    }
    let template = HandTemplate::standard();
    let raws: Result<Vec<RawScene>, SceneError> =
        exec.map_range(n, |i| generate_raw(sample_seed(seed, i), &template, cfg)).into_iter().collect();
    let raws = raws?;
    let extent = raws.iter().map(|r| raw_extent(r, &template)).fold(0.0, f64::max);
    let s_geo = 0.99 / extent;
    let geo_template = template.scaled(s_geo);
    let staged: Vec<SceneSample> = exec.map_range(n, |i| {
        let raw = &raws[i];
        let joints: Vec<[f64; 3]> = raw.joints.iter().map(|p| p.map(|v| v * s_geo)).collect();
        let object = raw.object.scaled(s_geo);
        let mut rng = scene_rng(raw.seed, Stream::Points);
        let (hand_points, object_points) =
            sample_points(&joints, &object, &geo_template, cfg.points_per_branch, cfg, &mut rng);
        SceneSample {
            id: i as u64,
            seed: raw.seed,
            render_size: cfg.render_size,
            render: Vec::new(),
            hand: raw.hand,
            joints,
            object,
            hand_points,
            object_points,
        }
    });
    let s_neg = compute_dataset_scale(&staged);
    let scale = s_geo * s_neg;
    let final_template = template.scaled(scale);
    let samples: Vec<SceneSample> = exec.map_slice(&staged, |s| finalize(&apply_scale(s, s_neg), &final_template));
    for s in &samples {
        if !cfg.heatmap.reachable(s.object.t_o) {
            return Err(SceneError::Unreachable { seed: s.seed, t_o: s.object.t_o, half_width: cfg.heatmap.half_width });
        }
    }
    let test_count = ((n as f64) * cfg.test_fraction).round() as usize;
    let manifest = DatasetManifest {
        format_version: super::FORMAT_VERSION,
        sample_count: n,
        test_count: test_count.min(n - 1),
        seed,
        scale,
        heatmap: cfg.heatmap,
        template,
        generation: cfg.clone(),
    };
    Ok((manifest, samples))
}

/// Labelled points around a lone primitive, drawn like the object branch of
/// [`sample_points`].
pub fn primitive_points(object: &ObjectPrimitive, n: usize, cfg: &GenConfig, rng: &mut impl Rng) -> LabeledPoints {
    let surface = object_surface_points(n, object, rng);
    let pts = mixture(&surface, n, cfg, rng);
    let sdf = object_sdf_batch(&pts, object);
    LabeledPoints::partitioned(pts, sdf)
}
