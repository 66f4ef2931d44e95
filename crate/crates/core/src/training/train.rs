//! The optimization loop.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{LossReport, LossWeights};
use super::model::{BranchPoints, LossConfig, Model, ModelVariant, ScenePoints};
use super::TrainError;
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::handkin::HandTemplate;
use crate::scenegen::{augment_rotation, DatasetManifest, LabeledPoints, SceneSample};
use crate::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Stop after this many steps when non-zero.
    pub max_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Halve the learning rate every this many epochs (0: never).
    pub lr_decay_epochs: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub aug_max_deg: f64,
    pub weights: LossWeights,
    /// SDF loss clamp distance (0: off).
    pub clamp: f64,
    pub pose_grad: bool,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 40,
            max_steps: 0,
            batch_size: 8,
            lr: 1e-4,
            lr_decay_epochs: 15,
            n_pos: 500,
            n_neg: 500,
            aug_max_deg: 45.0,
            weights: LossWeights::default(),
            clamp: 0.0,
            pose_grad: true,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.n_pos + self.n_neg == 0 {
            return bad("n_pos + n_neg must be positive".into());
        }
        if !(0.0..=180.0).contains(&self.aug_max_deg) {
            return bad(format!("aug_max_deg {} outside [0, 180]", self.aug_max_deg));
        }
        if !(self.clamp >= 0.0) {
            return bad(format!("clamp must be non-negative, got {}", self.clamp));
        }
        self.weights.validate().map_err(TrainError::Config)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { weights: self.weights, clamp: (self.clamp > 0.0).then_some(self.clamp), pose_grad: self.pose_grad }
    }
}

/// Random streams consumed during training, keyed by purpose so that, for
/// example, the point draw of a step is the same for every variant.
#[derive(Clone, Copy, Debug)]
pub enum TrainStream {
    Shuffle = 1,
    Points = 2,
    Augment = 3,
}

pub fn train_rng(seed: u64, stream: TrainStream, a: u64, b: u64) -> ChaCha8Rng {
    let key = crate::scenegen::sample_seed(crate::scenegen::sample_seed(seed, a as usize), b as usize);
    let mut r = ChaCha8Rng::seed_from_u64(key);
    r.set_stream(stream as u64);
    r
}

/// Uniform draw without replacement of `n_pos` outside and `n_neg` inside
/// points.
pub fn sample_branch(lp: &LabeledPoints, n_pos: usize, n_neg: usize, rng: &mut impl Rng) -> Result<BranchPoints, TrainError> {
    if lp.negatives < n_neg || lp.positives() < n_pos {
        return Err(TrainError::Points { need_pos: n_pos, need_neg: n_neg, have_pos: lp.positives(), have_neg: lp.negatives });
    }
    let neg = sample_indices(rng, lp.negatives, n_neg);
    let pos = sample_indices(rng, lp.positives(), n_pos);
    let idx: Vec<usize> = neg.into_iter().chain(pos.into_iter().map(|i| i + lp.negatives)).collect();
    Ok(BranchPoints { points: idx.iter().map(|&i| lp.points[i]).collect(), sdf: idx.iter().map(|&i| lp.sdf[i]).collect() })
}

pub fn sample_training_points(
    sample: &SceneSample,
    with_object: bool,
    n_pos: usize,
    n_neg: usize,
    rng: &mut impl Rng,
) -> Result<ScenePoints, TrainError> {
    let hand = sample_branch(&sample.hand_points, n_pos, n_neg, rng)?;
    let object = if with_object { Some(sample_branch(&sample.object_points, n_pos, n_neg, rng)?) } else { None };
    Ok(ScenePoints { hand, object })
}

/// Augmented scene and query points for batch slot `slot` of step `step`.
/// The draws depend only on the seed, step and slot, so every variant sees
/// the same points.
pub fn prepare_scene(
    sample: &SceneSample,
    variant: ModelVariant,
    cfg: &TrainConfig,
    template: &HandTemplate,
    step: usize,
    slot: usize,
) -> Result<(SceneSample, ScenePoints), TrainError> {
    let mut arng = train_rng(cfg.seed, TrainStream::Augment, step as u64, slot as u64);
    let scene = augment_rotation(sample, cfg.aug_max_deg, template, &mut arng);
    let mut prng = train_rng(cfg.seed, TrainStream::Points, step as u64, slot as u64);
    let pts = sample_training_points(&scene, variant.has_object(), cfg.n_pos, cfg.n_neg, &mut prng)?;
    Ok((scene, pts))
}

/// One logged line of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<HistoryRecord>,
    pub steps: usize,
}

/// Decoder output ranges from the training labels: 1.1 times the largest
/// magnitude seen.
pub fn output_scales(samples: &[&SceneSample]) -> (f64, f64) {
    let m = |f: fn(&SceneSample) -> &LabeledPoints| {
        samples.iter().flat_map(|s| f(s).sdf.iter()).fold(0.0f64, |a, v| a.max(v.abs()))
    };
    (1.1 * m(|s| &s.hand_points).max(1e-3), 1.1 * m(|s| &s.object_points).max(1e-3))
}

/// Build a model for `variant` and fit it to `train`.
pub fn train(
    manifest: &DatasetManifest,
    train: &[SceneSample],
    variant: ModelVariant,
    cfg: &TrainConfig,
    exec: Exec,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("no training samples".into()));
    }
    let render_size = train[0].render_size;
    if let Some(s) = train.iter().find(|s| s.render_size != render_size) {
        return Err(TrainError::Config(format!("sample {} has render size {}, expected {render_size}", s.id, s.render_size)));
    }
    let refs: Vec<&SceneSample> = train.iter().collect();
    let (sh, so) = output_scales(&refs);
    let mut model = Model::new(variant, render_size, manifest.heatmap, sh, so, cfg.seed)?;
    let template = manifest.normalized_template();
    let mut state = AdamState::for_params(model.store.values());
    let loss_cfg = cfg.loss_config();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut history = Vec::new();
    let mut step = 0usize;
    'outer: for epoch in 0..cfg.epochs {
        let lr = match epoch.checked_div(cfg.lr_decay_epochs) {
            Some(halvings) => cfg.lr * 0.5f64.powi(halvings as i32),
            None => cfg.lr,
        };
        let adam = AdamConfig { lr, ..AdamConfig::default() };
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut train_rng(cfg.seed, TrainStream::Shuffle, epoch as u64, 0));
        for b in 0..steps_per_epoch {
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                break 'outer;
            }
            let batch: Vec<(usize, usize)> =
                order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(order.len())].iter().copied().enumerate().collect();
            let results = exec.map_slice(&batch, |&(slot, i)| {
                let (scene, pts) = prepare_scene(&train[i], variant, cfg, &template, step, slot)?;
                let mut tape = Tape::new();
                let (loss, report) = model.scene_loss(&mut tape, &model.store, &scene, &pts, &template, &loss_cfg)?;
                if !report.total.is_finite() {
                    return Err(TrainError::Diverged { step });
                }
                let grads = tape.backward(loss)?.for_store(&model.store);
                Ok::<_, TrainError>((grads, report))
            });
            let mut sum: Option<Vec<Tensor>> = None;
            let mut reports = Vec::with_capacity(batch.len());
            for r in results {
                let (g, rep) = r?;
                reports.push(rep);
                sum = Some(match sum {
                    None => g,
                    Some(mut acc) => {
                        for (a, x) in acc.iter_mut().zip(&g) {
                            for (u, v) in a.data_mut().iter_mut().zip(x.data()) {
                                *u += v;
                            }
                        }
                        acc
                    }
                });
            }
            let mut grads = sum.expect("batches are non-empty");
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= inv));
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { step });
            }
            adam_step(model.store.values_mut(), &grads, &mut state, &adam)?;
            let mean = LossReport::mean(&reports);
            if step.is_multiple_of(cfg.log_every.max(1)) {
                let rec = HistoryRecord { step, epoch, lr, loss: mean };
                if let Some(w) = log.as_deref_mut() {
                    writeln!(w, "{}", serde_json::to_string(&rec).unwrap()).map_err(|e| TrainError::Io(e.to_string()))?;
                }
                history.push(rec);
            }
            step += 1;
        }
    }
    Ok(TrainOutcome { model, history, steps: step })
}
