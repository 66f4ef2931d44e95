//! Plain-text `key = value` run configuration covering generation, training
//! and evaluation.

use std::fmt::Write as _;

use super::eval::EvalConfig;
use super::model::ModelVariant;
use super::train::TrainConfig;
use super::TrainError;
use crate::scenegen::GenConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { variant: ModelVariant::G, gen: GenConfig::default(), train: TrainConfig::default(), eval: EvalConfig::default() }
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;

macro_rules! keys {
    ($($name:literal => $($field:ident).+ : $ty:ty),* $(,)?) => {
        &[$((
            $name,
            (|c: &RunConfig| format!("{:?}", c.$($field).+)) as Getter,
            (|c: &mut RunConfig, v: &str| { c.$($field).+ = parse::<$ty>(v)?; Ok(()) }) as Setter,
        )),*]
    };
}

const KEYS: &[(&str, Getter, Setter)] = keys![
    "seed" => train.seed: u64,
    "gen.points_per_branch" => gen.points_per_branch: usize,
    "gen.render_size" => gen.render_size: usize,
    "gen.sigma_near" => gen.sigma_near: f64,
    "gen.sigma_close" => gen.sigma_close: f64,
    "gen.frac_near" => gen.frac_near: f64,
    "gen.frac_close" => gen.frac_close: f64,
    "gen.flex_max" => gen.flex_max: f64,
    "gen.abduction_max" => gen.abduction_max: f64,
    "gen.beta_max" => gen.beta_max: f64,
    "gen.proximity_m" => gen.proximity_m: f64,
    "gen.penetration_cap_m" => gen.penetration_cap_m: f64,
    "gen.retries" => gen.retries: usize,
    "gen.test_fraction" => gen.test_fraction: f64,
    "heatmap.n" => gen.heatmap.n: usize,
    "heatmap.half_width" => gen.heatmap.half_width: f64,
    "train.epochs" => train.epochs: usize,
    "train.max_steps" => train.max_steps: usize,
    "train.batch_size" => train.batch_size: usize,
    "train.lr" => train.lr: f64,
    "train.lr_decay_epochs" => train.lr_decay_epochs: usize,
    "train.n_pos" => train.n_pos: usize,
    "train.n_neg" => train.n_neg: usize,
    "train.aug_max_deg" => train.aug_max_deg: f64,
    "train.clamp" => train.clamp: f64,
    "train.pose_grad" => train.pose_grad: bool,
    "train.log_every" => train.log_every: usize,
    "lambda.jh" => train.weights.jh: f64,
    "lambda.beta" => train.weights.beta: f64,
    "lambda.theta" => train.weights.theta: f64,
    "lambda.to" => train.weights.to: f64,
    "lambda.rec_h" => train.weights.rec_h: f64,
    "lambda.rec_o" => train.weights.rec_o: f64,
    "eval.res" => eval.res: usize,
    "eval.gt_res" => eval.gt_res: usize,
    "eval.surface_samples" => eval.surface_samples: usize,
    "eval.seed" => eval.seed: u64,
    "eval.voxel_pitch_m" => eval.voxel_pitch_m: f64,
];

impl RunConfig {
    pub fn key_names() -> Vec<&'static str> {
        let mut v: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
        v.extend(["variant", "gen.object_kinds"]);
        v
    }

    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "variant" => self.variant = value.parse()?,
            "gen.object_kinds" => {
                self.gen.object_kinds = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            _ => {
                let (_, _, set) = KEYS.iter().find(|k| k.0 == key).ok_or_else(|| format!("unknown key {key:?}"))?;
                set(self, value)?;
            }
        }
        Ok(())
    }

    /// Parse over the defaults. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut c = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TrainError::Config(format!("line {}: {msg}", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("key {k:?} given twice")));
            }
            c.set(k, v).map_err(err)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.gen.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.train.validate()?;
        if self.eval.res < 2 || self.eval.gt_res < 2 || self.eval.surface_samples < 4 || !(self.eval.voxel_pitch_m > 0.0) {
            return Err(TrainError::Config(format!("invalid evaluation settings {:?}", self.eval)));
        }
        Ok(())
    }

    /// Every key with its effective value, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "variant = {}", self.variant).unwrap();
        writeln!(s, "gen.object_kinds = {}", self.gen.object_kinds.join(",")).unwrap();
        for (k, get, _) in KEYS {
            writeln!(s, "{k} = {}", get(self)).unwrap();
        }
        s
    }
}
