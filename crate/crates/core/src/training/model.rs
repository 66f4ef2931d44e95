//! The network: render encoder, optional pose heads and one or two SDF
//! decoders, wired according to the model variant.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{
    assemble, beta_loss_tape, joint_loss_tape, sdf_loss_tape, theta_loss_tape, translation_loss_tape, LossNodes,
    LossReport, LossWeights,
};
use super::TrainError;
use crate::autodiff::{AutodiffError, Checkpoint, NodeId, ParamStore, Tape, Tensor};
use crate::geom::{rodrigues, v3};
use crate::handkin::{forward_kinematics, forward_kinematics_tape, hand_encoder, hand_head, HandParams, HandTemplate};
use crate::nn::Mlp;
use crate::objpose::{heatmap_head, predict_heatmap, soft_argmax_tape, HeatmapGrid};
use crate::scenegen::SceneSample;
use crate::sdfnet::{point_features, SdfDecoder, FEATURE_DIM, POINT_DIM};
use crate::Exec;

/// How query points are expressed before decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// Raw coordinates only.
    None,
    /// Pulled back with the predicted pose.
    Predicted,
    /// Pulled back with the ground-truth pose.
    GroundTruth,
}

/// Ablation ladder: which branches exist and how each decoder's points are
/// canonicalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    A,
    B,
    C,
    CStar,
    D,
    E,
    F,
    G,
    GStar,
}

pub const VARIANT_NAMES: [&str; 9] = ["a", "b", "c", "c_star", "d", "e", "f", "g", "g_star"];

impl ModelVariant {
    pub const ALL: [ModelVariant; 9] = [Self::A, Self::B, Self::C, Self::CStar, Self::D, Self::E, Self::F, Self::G, Self::GStar];

    pub fn name(self) -> &'static str {
        VARIANT_NAMES[Self::ALL.iter().position(|v| *v == self).unwrap()]
    }

    pub fn has_object(self) -> bool {
        matches!(self, Self::D | Self::E | Self::F | Self::G | Self::GStar)
    }

    /// Pose/shape regression head for the hand.
    pub fn has_hand_head(self) -> bool {
        matches!(self, Self::B | Self::C | Self::E | Self::G)
    }

    /// Heatmap head for the object centroid.
    pub fn has_object_head(self) -> bool {
        matches!(self, Self::F | Self::G)
    }

    pub fn hand_frame(self) -> Frame {
        match self {
            Self::C | Self::E | Self::G => Frame::Predicted,
            Self::CStar | Self::GStar => Frame::GroundTruth,
            _ => Frame::None,
        }
    }

    pub fn object_frame(self) -> Frame {
        match self {
            Self::F | Self::G => Frame::Predicted,
            Self::GStar => Frame::GroundTruth,
            _ => Frame::None,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        VARIANT_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of {{{}}}", VARIANT_NAMES.join(",")))
    }
}

/// Labelled query points for one scene and step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BranchPoints {
    pub points: Vec<[f64; 3]>,
    pub sdf: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenePoints {
    pub hand: BranchPoints,
    pub object: Option<BranchPoints>,
}

/// Loss options that are not weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Clamp predictions and labels to `[-delta, delta]` in the SDF loss.
    pub clamp: Option<f64>,
    /// Let gradients flow from the SDF loss into the pose estimates.
    pub pose_grad: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { weights: LossWeights::default(), clamp: None, pose_grad: true }
    }
}

/// No-grad outputs used at test time.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub features: Vec<f64>,
    pub hand: Option<HandParams>,
    pub joints: Option<Vec<[f64; 3]>>,
    pub t_o: Option<[f64; 3]>,
    /// Axis-angle used to canonicalize hand points, if any.
    pub hand_rotation: Option<[f64; 3]>,
    /// Translation used to canonicalize object points, if any.
    pub object_translation: Option<[f64; 3]>,
}

pub const ENCODER_HIDDEN: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub variant: ModelVariant,
    pub render_size: usize,
    pub grid: HeatmapGrid,
    pub hand_decoder: SdfDecoder,
    pub object_decoder: Option<SdfDecoder>,
    pub store: ParamStore,
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl Model {
    /// Fresh weights. Each component draws from its own stream, so a
    /// component's initialization does not depend on which others exist.
    pub fn new(
        variant: ModelVariant,
        render_size: usize,
        grid: HeatmapGrid,
        scale_h: f64,
        scale_o: f64,
        seed: u64,
    ) -> Result<Self, AutodiffError> {
        let mut store = ParamStore::new();
        encoder(render_size).init(&mut store, &mut sub_rng(seed, 10))?;
        if variant.has_hand_head() {
            hand_head().init(&mut store, &mut sub_rng(seed, 11))?;
        }
        if variant.has_object_head() {
            heatmap_head(grid).init(&mut store, &mut sub_rng(seed, 12))?;
        }
        let hand_decoder = SdfDecoder::new("sdf_h", scale_h);
        hand_decoder.init(&mut store, &mut sub_rng(seed, 13))?;
        let object_decoder = if variant.has_object() {
            let d = SdfDecoder::new("sdf_o", scale_o);
            d.init(&mut store, &mut sub_rng(seed, 14))?;
            Some(d)
        } else {
            None
        };
        Ok(Self { variant, render_size, grid, hand_decoder, object_decoder, store })
    }

    pub fn to_checkpoint(&self, extra: &[(String, String)]) -> Checkpoint {
        let mut meta = vec![
            ("variant".to_string(), self.variant.name().to_string()),
            ("render_size".to_string(), self.render_size.to_string()),
            ("heatmap_n".to_string(), self.grid.n.to_string()),
            ("heatmap_half_width".to_string(), format!("{:?}", self.grid.half_width)),
            ("scale_h".to_string(), format!("{:?}", self.hand_decoder.output_scale)),
        ];
        if let Some(d) = &self.object_decoder {
            meta.push(("scale_o".to_string(), format!("{:?}", d.output_scale)));
        }
        meta.extend_from_slice(extra);
        Checkpoint { meta, params: self.store.clone() }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        let get = |k: &str| ck.meta_value(k).ok_or_else(|| TrainError::Checkpoint(format!("missing metadata key {k:?}")));
        let num = |k: &str| -> Result<f64, TrainError> {
            get(k)?.parse::<f64>().map_err(|e| TrainError::Checkpoint(format!("metadata {k}: {e}")))
        };
        let variant: ModelVariant = get("variant")?.parse().map_err(TrainError::Checkpoint)?;
        let render_size = num("render_size")? as usize;
        let grid = HeatmapGrid { n: num("heatmap_n")? as usize, half_width: num("heatmap_half_width")? };
        let hand_decoder = SdfDecoder::new("sdf_h", num("scale_h")?);
        let object_decoder = if variant.has_object() { Some(SdfDecoder::new("sdf_o", num("scale_o")?)) } else { None };
        let model = Self { variant, render_size, grid, hand_decoder, object_decoder, store: ck.params.clone() };
        let fresh = Model::new(variant, render_size, grid, 1.0, 1.0, 0).map_err(TrainError::from)?;
        for (name, t) in fresh.store.iter() {
            match model.store.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(TrainError::Checkpoint(format!("parameter {name} is {:?}, expected {:?}", p.shape(), t.shape())))
                }
                None => return Err(TrainError::Checkpoint(format!("parameter {name} missing"))),
            }
        }
        if model.store.len() != fresh.store.len() {
            return Err(TrainError::Checkpoint(format!(
                "{} parameters, expected {} for variant {variant}",
                model.store.len(),
                fresh.store.len()
            )));
        }
        Ok(model)
    }

    fn features(&self, tape: &mut Tape, store: &ParamStore, render: &[f64]) -> Result<NodeId, AutodiffError> {
        let x = tape.constant(Tensor::row(render));
        encoder(self.render_size).forward(tape, store, x)
    }

    /// Loss of one scene recorded on `tape`, reading weights from `store`.
    pub fn scene_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &SceneSample,
        points: &ScenePoints,
        template: &HandTemplate,
        cfg: &LossConfig,
    ) -> Result<(NodeId, LossReport), AutodiffError> {
        let v = self.variant;
        let feats = self.features(tape, store, &sample.render)?;
        let mut nodes = LossNodes::default();

        let mut hand_rot: Option<NodeId> = None;
        if v.has_hand_head() {
            let (theta, beta) = hand_encoder(tape, store, feats)?;
            let joints = forward_kinematics_tape(tape, theta, beta, template)?;
            nodes.jh = Some(joint_loss_tape(tape, joints, &sample.joints)?);
            nodes.beta = Some(beta_loss_tape(tape, beta)?);
            nodes.theta = Some(theta_loss_tape(tape, theta)?);
            if v.hand_frame() == Frame::Predicted {
                let g = tape.slice_cols(theta, 0, 3)?;
                hand_rot = Some(if cfg.pose_grad { g } else { tape.detach(g) });
            }
        }
        if v.hand_frame() == Frame::GroundTruth {
            hand_rot = Some(tape.constant(Tensor::row(&sample.hand.global_rotation())));
        }
        let hp = tape.constant(Tensor::from_points(&points.hand.points));
        let hc = match hand_rot {
            Some(aa) => {
                let inv = tape.scale(aa, -1.0);
                tape.rotate_points(hp, inv)?
            }
            None => hp,
        };
        let hx = tape.concat_cols(hp, hc)?;
        let hpred = self.hand_decoder.decode(tape, store, feats, hx)?;
        nodes.rec_h = Some(sdf_loss_tape(tape, hpred, &points.hand.sdf, cfg.clamp)?);

        if let (Some(dec), Some(op)) = (&self.object_decoder, &points.object) {
            let mut t_o: Option<NodeId> = None;
            if v.has_object_head() {
                let logits = predict_heatmap(tape, store, feats, self.grid)?;
                let t = soft_argmax_tape(tape, logits, &self.grid.center_table())?;
                nodes.to = Some(translation_loss_tape(tape, t, sample.object.t_o)?);
                if v.object_frame() == Frame::Predicted {
                    t_o = Some(if cfg.pose_grad { t } else { tape.detach(t) });
                }
            }
            if v.object_frame() == Frame::GroundTruth {
                t_o = Some(tape.constant(Tensor::row(&sample.object.t_o)));
            }
            let p = tape.constant(Tensor::from_points(&op.points));
            let c = match t_o {
                Some(t) => {
                    let neg = tape.scale(t, -1.0);
                    tape.add_row(p, neg)?
                }
                None => p,
            };
            let x = tape.concat_cols(p, c)?;
            let pred = dec.decode(tape, store, feats, x)?;
            nodes.rec_o = Some(sdf_loss_tape(tape, pred, &op.sdf, cfg.clamp)?);
        }
        assemble(tape, &nodes, &cfg.weights)
    }

    /// Pose estimates and canonicalization frames for a test scene.
    pub fn predict(&self, sample: &SceneSample, template: &HandTemplate) -> Result<Prediction, AutodiffError> {
        let mut tape = Tape::no_grad();
        let f = self.features(&mut tape, &self.store, &sample.render)?;
        let features = tape.value(f).data().to_vec();
        let mut pred = Prediction {
            features,
            hand: None,
            joints: None,
            t_o: None,
            hand_rotation: None,
            object_translation: None,
        };
        if self.variant.has_hand_head() {
            let (theta, beta) = hand_encoder(&mut tape, &self.store, f)?;
            let mut p = HandParams::default();
            p.theta.copy_from_slice(tape.value(theta).data());
            p.beta.copy_from_slice(tape.value(beta).data());
            pred.joints = Some(forward_kinematics(&p, template).joints);
            pred.hand = Some(p);
        }
        if self.variant.has_object_head() {
            let logits = predict_heatmap(&mut tape, &self.store, f, self.grid)?;
            let t = soft_argmax_tape(&mut tape, logits, &self.grid.center_table())?;
            let v = tape.value(t).data();
            pred.t_o = Some([v[0], v[1], v[2]]);
        }
        pred.hand_rotation = match self.variant.hand_frame() {
            Frame::Predicted => pred.hand.map(|h| h.global_rotation()),
            Frame::GroundTruth => Some(sample.hand.global_rotation()),
            Frame::None => None,
        };
        pred.object_translation = match self.variant.object_frame() {
            Frame::Predicted => pred.t_o,
            Frame::GroundTruth => Some(sample.object.t_o),
            Frame::None => None,
        };
        Ok(pred)
    }

    /// Decoder features `[x, x_canonical]` for the hand branch.
    pub fn hand_point_features(pred: &Prediction, x: &[[f64; 3]]) -> Vec<[f64; POINT_DIM]> {
        match pred.hand_rotation {
            Some(aa) => {
                let rt = rodrigues(&v3(aa)).transpose();
                let c: Vec<[f64; 3]> = x.iter().map(|p| crate::geom::arr(&(rt * v3(*p)))).collect();
                point_features(x, &c)
            }
            None => point_features(x, x),
        }
    }

    pub fn object_point_features(pred: &Prediction, x: &[[f64; 3]]) -> Vec<[f64; POINT_DIM]> {
        match pred.object_translation {
            Some(t) => point_features(x, &crate::objpose::canonicalize_object(x, t)),
            None => point_features(x, x),
        }
    }

    pub fn hand_field(&self, pred: &Prediction, x: &[[f64; 3]], exec: Exec) -> Result<Vec<f64>, AutodiffError> {
        self.hand_decoder.eval_points(&self.store, &pred.features, &Self::hand_point_features(pred, x), exec)
    }

    pub fn object_field(&self, pred: &Prediction, x: &[[f64; 3]], exec: Exec) -> Option<Result<Vec<f64>, AutodiffError>> {
        let dec = self.object_decoder.as_ref()?;
        Some(dec.eval_points(&self.store, &pred.features, &Self::object_point_features(pred, x), exec))
    }
}

/// Render encoder: flattened image -> 512 relu -> 256 features.
pub fn encoder(render_size: usize) -> Mlp {
    Mlp::new("encoder", &[render_size * render_size, ENCODER_HIDDEN, FEATURE_DIM])
}
