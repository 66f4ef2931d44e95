use super::{AutodiffError, Tensor};

/// Adam hyperparameters. The defaults for the moment decays and epsilon are
/// the usual ones; the learning rate default is 1e-4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &[Tensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), AutodiffError> {
    if !(cfg.lr > 0.0) {
        return Err(AutodiffError::Optimizer(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(AutodiffError::Shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.len() || state.v[i].len() != p.len() {
            return Err(AutodiffError::Shape(format!(
                "adam: parameter {i} is {:?} but gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let inv_bc1 = 1.0 / (1.0 - cfg.beta1.powi(t));
    let inv_bc2 = 1.0 / (1.0 - cfg.beta2.powi(t));
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let n = p.len();
        let (w, g) = (&mut p.data_mut()[..n], &g.data()[..n]);
        let (m, v) = (&mut state.m[i][..n], &mut state.v[i][..n]);
        for j in 0..n {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            w[j] -= lr * (m[j] * inv_bc1) / ((v[j] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::row(&[1.0, -2.0])];
        let g = vec![Tensor::row(&[0.0, 0.0])];
        let mut s = AdamState::for_params(&p);
        s.m[0] = vec![0.5, 0.5];
        let cfg = AdamConfig::default();
        // With nonzero first moments the params move; start from a clean state.
        let mut clean = AdamState::for_params(&p);
        adam_step(&mut p, &g, &mut clean, &cfg).unwrap();
        assert_eq!(p[0].data(), &[1.0, -2.0]);
        assert_eq!(clean.step, 1);
        let before = s.m[0][0];
        let mut q = p.clone();
        adam_step(&mut q, &g, &mut s, &cfg).unwrap();
        assert!(s.m[0][0].abs() < before.abs());
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let mut p = vec![Tensor::row(&[0.0])];
        let g = vec![Tensor::row(&[0.37])];
        let mut s = AdamState::for_params(&p);
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0].item();
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            last = before - p[0].item();
        }
        assert!((last - cfg.lr).abs() < 1e-6 * cfg.lr + 1e-10, "update {last}");
    }

    #[test]
    fn rejects_shape_mismatch_and_bad_lr() {
        let mut p = vec![Tensor::row(&[0.0, 1.0])];
        let g = vec![Tensor::row(&[0.0])];
        let mut s = AdamState::for_params(&p);
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::default()).is_err());
        let g2 = vec![Tensor::row(&[0.0, 1.0])];
        let cfg = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        assert!(adam_step(&mut p, &g2, &mut s, &cfg).is_err());
    }
}
