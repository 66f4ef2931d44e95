//! Loss terms, both as plain values and recorded on a tape.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::handkin::{POSE_DIM, SHAPE_DIM};

/// Loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub jh: f64,
    pub beta: f64,
    pub theta: f64,
    pub to: f64,
    pub rec_h: f64,
    pub rec_o: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { jh: 5e-1, beta: 5e-7, theta: 5e-5, to: 5e-1, rec_h: 5e-1, rec_o: 5e-1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.jh, self.beta, self.theta, self.to, self.rec_h, self.rec_o];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(format!("loss weights must be finite and non-negative: {all:?}"))
        }
    }
}

/// Unweighted components and weighted totals of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(rename = "L_jh")]
    pub l_jh: f64,
    #[serde(rename = "L_beta")]
    pub l_beta: f64,
    #[serde(rename = "L_theta")]
    pub l_theta: f64,
    #[serde(rename = "L_to")]
    pub l_to: f64,
    #[serde(rename = "L_rec_h")]
    pub l_rec_h: f64,
    #[serde(rename = "L_rec_o")]
    pub l_rec_o: f64,
    #[serde(rename = "L_hand")]
    pub l_hand: f64,
    #[serde(rename = "L_obj")]
    pub l_obj: f64,
    #[serde(rename = "L_rec")]
    pub l_rec: f64,
    #[serde(rename = "L")]
    pub total: f64,
}

impl LossReport {
    /// Fill the weighted totals from the components.
    pub fn combine(mut self, w: &LossWeights) -> Self {
        self.l_hand = w.jh * self.l_jh + w.beta * self.l_beta + w.theta * self.l_theta;
        self.l_obj = w.to * self.l_to;
        self.l_rec = w.rec_h * self.l_rec_h + w.rec_o * self.l_rec_o;
        self.total = self.l_hand + self.l_obj + self.l_rec;
        self
    }

    /// Component-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut m = LossReport::default();
        for r in reports {
            m.l_jh += r.l_jh / n;
            m.l_beta += r.l_beta / n;
            m.l_theta += r.l_theta / n;
            m.l_to += r.l_to / n;
            m.l_rec_h += r.l_rec_h / n;
            m.l_rec_o += r.l_rec_o / n;
            m.l_hand += r.l_hand / n;
            m.l_obj += r.l_obj / n;
            m.l_rec += r.l_rec / n;
            m.total += r.total / n;
        }
        m
    }
}

/// Hand pose components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandLoss {
    /// Mean squared joint distance.
    pub l_jh: f64,
    /// Squared norm of the shape vector.
    pub l_beta: f64,
    /// Squared norm of the local joint rotations.
    pub l_theta: f64,
    pub l_hand: f64,
}

pub fn hand_loss(pred: &[[f64; 3]], gt: &[[f64; 3]], theta: &[f64; POSE_DIM], beta: &[f64; SHAPE_DIM], w: &LossWeights) -> HandLoss {
    let l_jh = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (0..3).map(|d| (p[d] - g[d]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / pred.len() as f64;
    let l_beta = beta.iter().map(|b| b * b).sum();
    let l_theta = theta[3..].iter().map(|t| t * t).sum();
    HandLoss { l_jh, l_beta, l_theta, l_hand: w.jh * l_jh + w.beta * l_beta + w.theta * l_theta }
}

/// Weighted squared centroid error.
pub fn object_loss(pred: [f64; 3], gt: [f64; 3], w: &LossWeights) -> f64 {
    w.to * (0..3).map(|d| (pred[d] - gt[d]).powi(2)).sum::<f64>()
}

/// `(L_rec_h, L_rec_o, L_rec)`: weighted mean absolute errors per branch.
/// A branch with no predictions contributes nothing; an empty point set for
/// a present branch is an error.
pub fn recon_loss(
    hand: Option<(&[f64], &[f64])>,
    object: Option<(&[f64], &[f64])>,
    w: &LossWeights,
) -> Result<(f64, f64, f64), String> {
    let l1 = |(p, g): (&[f64], &[f64]), name: &str| -> Result<f64, String> {
        if p.is_empty() || p.len() != g.len() {
            return Err(format!("{name} branch: {} predictions for {} labels", p.len(), g.len()));
        }
        Ok(p.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
    };
    let h = hand.map(|x| l1(x, "hand")).transpose()?.map_or(0.0, |v| w.rec_h * v);
    let o = object.map(|x| l1(x, "object")).transpose()?.map_or(0.0, |v| w.rec_o * v);
    Ok((h, o, h + o))
}

/// Tape versions of the components. Each returns an unweighted scalar node.
pub fn joint_loss_tape(tape: &mut Tape, pred: NodeId, gt: &[[f64; 3]]) -> Result<NodeId, AutodiffError> {
    let g = tape.constant(Tensor::from_points(gt));
    let m = tape.l2_mean(pred, g)?;
    Ok(tape.scale(m, 3.0))
}

pub fn beta_loss_tape(tape: &mut Tape, beta: NodeId) -> Result<NodeId, AutodiffError> {
    let z = tape.constant(Tensor::zeros(1, SHAPE_DIM));
    let m = tape.l2_mean(beta, z)?;
    Ok(tape.scale(m, SHAPE_DIM as f64))
}

pub fn theta_loss_tape(tape: &mut Tape, theta: NodeId) -> Result<NodeId, AutodiffError> {
    let local = tape.slice_cols(theta, 3, POSE_DIM - 3)?;
    let z = tape.constant(Tensor::zeros(1, POSE_DIM - 3));
    let m = tape.l2_mean(local, z)?;
    Ok(tape.scale(m, (POSE_DIM - 3) as f64))
}

pub fn translation_loss_tape(tape: &mut Tape, pred: NodeId, gt: [f64; 3]) -> Result<NodeId, AutodiffError> {
    let g = tape.constant(Tensor::row(&gt));
    let m = tape.l2_mean(pred, g)?;
    Ok(tape.scale(m, 3.0))
}

/// Mean absolute error, optionally with both sides clamped to `[-delta, delta]`.
pub fn sdf_loss_tape(tape: &mut Tape, pred: NodeId, labels: &[f64], clamp: Option<f64>) -> Result<NodeId, AutodiffError> {
    let mut g = Tensor::matrix(labels.len(), 1, labels.to_vec());
    let mut p = pred;
    if let Some(d) = clamp {
        g = g.map(|v| v.clamp(-d, d));
        p = tape.clamp(pred, -d, d);
    }
    let g = tape.constant(g);
    tape.l1_mean(p, g)
}

/// Collected unweighted loss nodes of one scene.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossNodes {
    pub jh: Option<NodeId>,
    pub beta: Option<NodeId>,
    pub theta: Option<NodeId>,
    pub to: Option<NodeId>,
    pub rec_h: Option<NodeId>,
    pub rec_o: Option<NodeId>,
}

/// Weighted sum on the tape plus the matching report.
pub fn assemble(tape: &mut Tape, nodes: &LossNodes, w: &LossWeights) -> Result<(NodeId, LossReport), AutodiffError> {
    let terms = [
        (nodes.jh, w.jh),
        (nodes.beta, w.beta),
        (nodes.theta, w.theta),
        (nodes.to, w.to),
        (nodes.rec_h, w.rec_h),
        (nodes.rec_o, w.rec_o),
    ];
    let val = |n: Option<NodeId>, tape: &Tape| n.map_or(0.0, |n| tape.value(n).item());
    let report = LossReport {
        l_jh: val(nodes.jh, tape),
        l_beta: val(nodes.beta, tape),
        l_theta: val(nodes.theta, tape),
        l_to: val(nodes.to, tape),
        l_rec_h: val(nodes.rec_h, tape),
        l_rec_o: val(nodes.rec_o, tape),
        ..LossReport::default()
    }
    .combine(w);
    // Summed in the same grouping as the report so the two agree exactly.
    let groups: [&[(Option<NodeId>, f64)]; 3] = [&terms[0..3], &terms[3..4], &terms[4..6]];
    let mut total: Option<NodeId> = None;
    for g in groups {
        let mut sub: Option<NodeId> = None;
        for &(n, wt) in g {
            if let Some(n) = n {
                let s = tape.scale(n, wt);
                sub = Some(match sub {
                    None => s,
                    Some(acc) => tape.add(acc, s)?,
                });
            }
        }
        if let Some(s) = sub {
            total = Some(match total {
                None => s,
                Some(acc) => tape.add(acc, s)?,
            });
        }
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    Ok((total, report))
}
